"""Post-run analysis: gross-error filtering, period slicing, cooling-rate
fits, weather-station alignment, plots and summary tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .node import Flags
from .store import Reading, iso_to_ms, ms_to_iso

MS_PER_MIN = 60_000
MS_PER_HOUR = 3_600_000


class AnalysisError(ValueError):
    pass


class InsufficientData(AnalysisError):
    pass


class NonpositiveExcess(AnalysisError):
    pass


class NoOverlap(AnalysisError):
    pass


@dataclass(frozen=True)
class Series:
    device_id: str
    t_ms: np.ndarray
    temp_c: np.ndarray
    lux: np.ndarray
    flags: np.ndarray

    def __post_init__(self):
        if len(self.t_ms) > 1 and not np.all(np.diff(self.t_ms) > 0):
            raise AnalysisError(f"{self.device_id}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t_ms)

    def take(self, mask) -> "Series":
        return Series(self.device_id, self.t_ms[mask], self.temp_c[mask], self.lux[mask], self.flags[mask])

    def equals(self, other: "Series") -> bool:
        return (
            self.device_id == other.device_id
            and np.array_equal(self.t_ms, other.t_ms)
            and np.array_equal(self.temp_c, other.temp_c)
            and np.array_equal(self.lux, other.lux)
            and np.array_equal(self.flags, other.flags)
        )

    @classmethod
    def from_readings(cls, device_id: str, readings: Iterable[Reading]) -> "Series":
        rs = list(readings)
        return cls(
            device_id,
            np.array([r.timestamp_ms for r in rs], dtype=np.int64),
            np.array([r.temp_c for r in rs], dtype=float),
            np.array([r.lux for r in rs], dtype=np.int64),
            np.array([r.flags for r in rs], dtype=np.int64),
        )

    @classmethod
    def from_arrays(cls, device_id, t_ms, temp_c, lux=None, flags=None) -> "Series":
        t_ms = np.asarray(t_ms, dtype=np.int64)
        n = len(t_ms)
        lux = np.zeros(n, dtype=np.int64) if lux is None else np.asarray(lux, dtype=np.int64)
        flags = np.zeros(n, dtype=np.int64) if flags is None else np.asarray(flags, dtype=np.int64)
        return cls(device_id, t_ms, np.asarray(temp_c, dtype=float), lux, flags)


@dataclass(frozen=True)
class WeatherSeries:
    station_name: str
    t_ms: np.ndarray
    dry_bulb_c: np.ndarray
    cadence_min: float = 30.0


def filter_gross(
    series: Series,
    min_c: float = -10.0,
    max_c: float = 60.0,
    max_jump_c_per_min: float = 5.0,
    filter_lux: bool = False,
) -> tuple[Series, int]:
    """Drop implausible points; returns the clean series and the number dropped.

    The rate test compares each point against the last point kept, so a lone
    spike does not take its neighbours with it.
    """
    if not min_c < max_c or max_jump_c_per_min <= 0:
        raise ValueError("need min_c < max_c and a positive jump limit")
    keep = np.zeros(len(series), dtype=bool)
    last_t = last_v = None
    for i, (t, v, fl) in enumerate(zip(series.t_ms, series.temp_c, series.flags)):
        if not min_c <= v <= max_c:
            continue
        if filter_lux and fl & Flags.LUX_GROSS_ERROR:
            continue
        if last_t is not None:
            rate = abs(v - last_v) / ((t - last_t) / MS_PER_MIN)
            if rate > max_jump_c_per_min:
                continue
        keep[i] = True
        last_t, last_v = t, v
    return series.take(keep), int((~keep).sum())


def slice_period(series: Series, t0: int, t1: int) -> Series:
    if t0 > t1:
        raise ValueError("t0 must not exceed t1")
    return series.take((series.t_ms >= t0) & (series.t_ms < t1))


def cooling_fit(series: Series, t0: int, t1: int, ambient_floor_c: float) -> float:
    """Fitted exponential cooling rate (1/h) over ``[t0, t1)``.

    Least-squares line through ln(T - floor) against hours; the rate is
    minus its slope.
    """
    part = slice_period(series, t0, t1)
    if len(part) < 10:
        raise InsufficientData(f"{series.device_id}: {len(part)} points in window, need >= 10")
    excess = part.temp_c - ambient_floor_c
    if np.any(excess <= 0):
        raise NonpositiveExcess(f"{series.device_id}: temperature at or below floor {ambient_floor_c}")
    hours = (part.t_ms - part.t_ms[0]) / MS_PER_HOUR
    slope, _ = np.polyfit(hours, np.log(excess), 1)
    return float(-slope)


@dataclass(frozen=True)
class MergedPairs:
    t_ms: np.ndarray
    sensor_c: np.ndarray
    dry_bulb_c: np.ndarray
    weather_t_ms: np.ndarray

    def __len__(self):
        return len(self.t_ms)

    @property
    def excess(self) -> np.ndarray:
        return self.sensor_c - self.dry_bulb_c


def merge_external(series: Series, weather: WeatherSeries) -> MergedPairs:
    """Pair each sensor point with the nearest weather observation no more
    than half a cadence away; points without one are dropped."""
    if len(series) == 0 or len(weather.t_ms) == 0:
        raise NoOverlap("empty series")
    w_t = np.asarray(weather.t_ms, dtype=np.int64)
    if series.t_ms[-1] < w_t[0] or series.t_ms[0] > w_t[-1]:
        raise NoOverlap(f"{series.device_id} and {weather.station_name} do not overlap in time")
    idx = np.searchsorted(w_t, series.t_ms)
    lo = np.clip(idx - 1, 0, len(w_t) - 1)
    hi = np.clip(idx, 0, len(w_t) - 1)
    d_lo = np.abs(series.t_ms - w_t[lo])
    d_hi = np.abs(w_t[hi] - series.t_ms)
    # ties go to the earlier observation
    nearest = np.where(d_hi < d_lo, hi, lo)
    dist = np.minimum(d_lo, d_hi)
    ok = dist <= weather.cadence_min * MS_PER_MIN / 2
    return MergedPairs(series.t_ms[ok], series.temp_c[ok], np.asarray(weather.dry_bulb_c)[nearest[ok]], w_t[nearest[ok]])


def read_weather_csv(path: str | Path, station_name: str = "", cadence_min: float = 30.0) -> WeatherSeries:
    t, v = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "dry_bulb_c"]:
            raise AnalysisError(f"{path}: expected header timestamp,dry_bulb_c")
        for row in reader:
            t.append(iso_to_ms(row[0]))
            v.append(float(row[1]))
    return WeatherSeries(station_name or Path(path).stem, np.array(t, dtype=np.int64), np.array(v), cadence_min)


def write_weather_csv(path: str | Path, weather: WeatherSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "dry_bulb_c"])
        for t, v in zip(weather.t_ms, weather.dry_bulb_c):
            w.writerow([ms_to_iso(int(t)), f"{v:.2f}"])


# -- report output ------------------------------------------------------------

SUMMARY_HEADER = [
    "device_id", "material", "readings", "losses", "overheat_skips", "k_hat",
    "battery_consumed_mah", "lifetime_h",
]


def plot_case_study(
    path: str | Path,
    title: str,
    series: Sequence[Series],
    labels: Sequence[str] | None = None,
    weather: WeatherSeries | None = None,
    tz_offset_min: int = 0,
) -> Path:
    """SVG line plot of temperature against local time, one line per device."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.dates as mdates
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "loratherm"
    shift = tz_offset_min * MS_PER_MIN

    def to_dates(t_ms):
        return (np.asarray(t_ms, dtype=np.int64) + shift).astype("datetime64[ms]")

    fig, ax = plt.subplots(figsize=(10, 4.5))
    labels = labels or [s.device_id for s in series]
    for s, label in zip(series, labels):
        ax.plot(to_dates(s.t_ms), s.temp_c, lw=1.0, label=label)
    if weather is not None:
        ax.plot(to_dates(weather.t_ms), weather.dry_bulb_c, "k--", lw=1.0, label=f"{weather.station_name} dry bulb")
    ax.set_title(title)
    ax.set_ylabel("Temperature (°C)")
    ax.set_xlabel("Local time")
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%d %H:%M"))
    ax.grid(alpha=0.3)
    ax.legend(loc="best")
    fig.autofmt_xdate()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def write_summary(path: str | Path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    return path
