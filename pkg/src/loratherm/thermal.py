"""Ambient forcing, surface relaxation and probe readings.

Surfaces relax toward an insolation-shifted target,

    dT/dt = -k_cool * (T - (ambient(t) + solar_gain * insolation(t)))

integrated with explicit Euler at minute resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MINUTES_PER_DAY = 1440
MAX_STEP_MIN = 5.0
SURFACE_BOUNDS_C = (-20.0, 90.0)


@dataclass(frozen=True)
class AmbientForcing:
    """Daily dry-bulb profile plus a half-sine insolation window.

    ``knots`` are ``(minute_of_day, temp_c)`` pairs; the profile is
    piecewise linear and wraps across midnight.
    """

    knots: tuple[tuple[float, float], ...]
    sunrise: float = 330.0
    sunset: float = 1170.0
    insolation_peak: float = 1.0

    def __post_init__(self):
        knots = tuple(sorted((float(m), float(c)) for m, c in self.knots))
        if len(knots) < 2:
            raise ValueError("day profile needs at least 2 knots")
        minutes = [m for m, _ in knots]
        if minutes[0] < 0 or minutes[-1] >= MINUTES_PER_DAY:
            raise ValueError("knot minutes must lie in [0, 1440)")
        if len(set(minutes)) != len(minutes):
            raise ValueError("duplicate knot minute")
        if not 0 <= self.sunrise < self.sunset <= MINUTES_PER_DAY:
            raise ValueError("need 0 <= sunrise < sunset <= 1440")
        if not 0.0 <= self.insolation_peak <= 1.0:
            raise ValueError("insolation_peak must lie in [0, 1]")
        object.__setattr__(self, "knots", knots)

    @property
    def floor_c(self) -> float:
        return min(c for _, c in self.knots)


def summer_profile(
    floor_c: float = 15.0,
    floor_at: float = 300.0,
    peak_c: float = 36.0,
    peak_at: float = 840.0,
    step: float = 60.0,
) -> tuple[tuple[float, float], ...]:
    """Hourly knots of a cosine-shaped day: rising from the floor to the
    peak, then falling back over the remainder of the day."""
    rise = (peak_at - floor_at) % MINUTES_PER_DAY
    fall = MINUTES_PER_DAY - rise
    amp = peak_c - floor_c
    knots = []
    for m in np.arange(0.0, MINUTES_PER_DAY, step):
        since_floor = (m - floor_at) % MINUTES_PER_DAY
        if since_floor <= rise:
            frac = since_floor / rise
            temp = floor_c + amp * (1 - math.cos(math.pi * frac)) / 2
        else:
            frac = (since_floor - rise) / fall
            temp = peak_c - amp * (1 - math.cos(math.pi * frac)) / 2
        knots.append((float(m), round(temp, 6)))
    return tuple(knots)


def _check_tod(t: float) -> None:
    if not 0 <= t < MINUTES_PER_DAY:
        raise ValueError(f"time of day {t} outside [0, 1440)")


def ambient_at(forcing: AmbientForcing, t: float) -> float:
    """Dry-bulb temperature at minute-of-day ``t``."""
    _check_tod(t)
    knots = forcing.knots
    # pad with wrapped neighbours so interpolation crosses midnight
    first_m, first_c = knots[0]
    last_m, last_c = knots[-1]
    xs = [last_m - MINUTES_PER_DAY] + [m for m, _ in knots] + [first_m + MINUTES_PER_DAY]
    ys = [last_c] + [c for _, c in knots] + [first_c]
    return float(np.interp(t, xs, ys))


def insolation_at(forcing: AmbientForcing, t: float) -> float:
    _check_tod(t)
    if t <= forcing.sunrise or t >= forcing.sunset:
        return 0.0
    phase = (t - forcing.sunrise) / (forcing.sunset - forcing.sunrise)
    return forcing.insolation_peak * math.sin(math.pi * phase)


@dataclass(frozen=True)
class MaterialThermalModel:
    name: str
    k_cool: float  # 1/hour
    solar_gain: float  # degC above dry bulb at full sun
    probe_coupling: float = 1.0

    def __post_init__(self):
        if not self.k_cool > 0:
            raise ValueError(f"{self.name}: k_cool must be > 0")
        if self.solar_gain < 0:
            raise ValueError(f"{self.name}: solar_gain must be >= 0")
        if not 0.0 <= self.probe_coupling <= 1.0:
            raise ValueError(f"{self.name}: probe_coupling must lie in [0, 1]")


@dataclass(frozen=True)
class SurfaceState:
    surface_temp: float
    time: float  # absolute minutes since scenario start

    def __post_init__(self):
        lo, hi = SURFACE_BOUNDS_C
        if not math.isfinite(self.surface_temp) or not lo <= self.surface_temp <= hi:
            raise ValueError(f"surface temperature {self.surface_temp} outside [{lo}, {hi}]")


def target_temp(m: MaterialThermalModel, f: AmbientForcing, tod: float) -> float:
    return ambient_at(f, tod) + m.solar_gain * insolation_at(f, tod)


def step_surface(
    m: MaterialThermalModel,
    s: SurfaceState,
    f: AmbientForcing,
    dt: float,
    start_tod: float = 0.0,
) -> SurfaceState:
    """Advance one explicit-Euler step of ``dt`` minutes.

    ``start_tod`` is the minute-of-day at absolute time zero, so the
    forcing is sampled at ``(start_tod + s.time) % 1440``.
    """
    if not 0 < dt <= MAX_STEP_MIN:
        raise ValueError(f"dt must lie in (0, {MAX_STEP_MIN}] minutes, got {dt}")
    tod = (start_tod + s.time) % MINUTES_PER_DAY
    excess = s.surface_temp - target_temp(m, f, tod)
    new_temp = s.surface_temp - m.k_cool * (dt / 60.0) * excess
    return SurfaceState(new_temp, s.time + dt)


def probe_reading(m: MaterialThermalModel, s: SurfaceState, f: AmbientForcing, tod: float) -> float:
    """Air temperature just above the surface, as the external probe sees it."""
    ambient = ambient_at(f, tod)
    return ambient + m.probe_coupling * (s.surface_temp - ambient)


def relax_closed_form(t0_temp: float, target: float, k_cool: float, hours: float | np.ndarray):
    """Exact solution under constant target; used as the integration oracle."""
    return target + (t0_temp - target) * np.exp(-k_cool * np.asarray(hours, dtype=float))


def integrate(
    m: MaterialThermalModel,
    f: AmbientForcing,
    initial_temp: float,
    minutes: int,
    start_tod: float = 0.0,
    dt: float = 1.0,
) -> np.ndarray:
    """Surface temperatures at every step, including the initial state."""
    out = np.empty(int(round(minutes / dt)) + 1)
    s = SurfaceState(initial_temp, 0.0)
    out[0] = s.surface_temp
    for i in range(1, len(out)):
        s = step_surface(m, s, f, dt, start_tod)
        out[i] = s.surface_temp
    return out


def enclosure_temp(f: AmbientForcing, tod: float, shaded: bool, solar_gain: float) -> float:
    """Temperature inside the device box.

    A shaded box tracks the dry bulb. A box in direct sun has little
    thermal mass and heats with the instantaneous insolation.
    """
    ambient = ambient_at(f, tod)
    if shaded:
        return ambient
    return ambient + solar_gain * insolation_at(f, tod)


__all__: Sequence[str] = (
    "AmbientForcing",
    "MaterialThermalModel",
    "SurfaceState",
    "ambient_at",
    "enclosure_temp",
    "insolation_at",
    "integrate",
    "probe_reading",
    "relax_closed_form",
    "step_surface",
    "summer_profile",
    "target_temp",
)
