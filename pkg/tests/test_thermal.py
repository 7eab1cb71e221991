import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loratherm.scenario import load_fixture
from loratherm.thermal import (
    AmbientForcing,
    MaterialThermalModel,
    SurfaceState,
    ambient_at,
    insolation_at,
    integrate,
    probe_reading,
    relax_closed_form,
    step_surface,
    summer_profile,
    target_temp,
)


def brute_interp(knots, t):
    """Scan for the bracketing pair, wrapping through midnight."""
    pts = sorted(knots)
    extended = [(m - 1440, c) for m, c in pts] + pts + [(m + 1440, c) for m, c in pts]
    for (m0, c0), (m1, c1) in zip(extended, extended[1:]):
        if m0 <= t <= m1:
            return c0 + (c1 - c0) * (t - m0) / (m1 - m0)
    raise AssertionError("no bracket")


def flat(temp, sunrise=330.0, sunset=1170.0, peak=1.0):
    return AmbientForcing(((0, temp), (720, temp)), sunrise, sunset, peak)


NIGHT = flat(15.0, sunrise=1.0, sunset=2.0, peak=0.0)


class TestAmbient:
    def test_midpoint(self):
        f = AmbientForcing(((0, 15), (720, 30)))
        assert ambient_at(f, 360) == pytest.approx(22.5)

    def test_knot_identity(self):
        f = AmbientForcing(((0, 15), (720, 30)))
        assert ambient_at(f, 0) == 15

    def test_three_knots_against_brute_force(self):
        knots = ((0, 15), (720, 30), (1439, 15))
        expected = brute_interp(knots, 1080)
        assert expected == pytest.approx(22.489568845618916)  # frozen from the scan oracle
        assert ambient_at(AmbientForcing(knots), 1080) == pytest.approx(expected, abs=1e-12)

    def test_wraps_midnight(self):
        f = AmbientForcing(((60, 10), (1380, 20)))
        # 23:00 -> 01:00 crosses midnight over 120 min
        assert ambient_at(f, 0) == pytest.approx(15.0)
        assert ambient_at(f, 1410) == pytest.approx(17.5)

    @given(st.floats(0, 1439.999))
    def test_matches_oracle_everywhere(self, t):
        knots = summer_profile()
        assert ambient_at(AmbientForcing(knots), t) == pytest.approx(brute_interp(knots, t), abs=1e-9)

    def test_rejects_out_of_domain(self):
        with pytest.raises(ValueError):
            ambient_at(AmbientForcing(((0, 15), (720, 30))), 1440)

    def test_summer_profile_anchors(self):
        f = AmbientForcing(summer_profile())
        assert ambient_at(f, 300) == pytest.approx(15.0)
        assert ambient_at(f, 840) == pytest.approx(36.0)
        assert f.floor_c == pytest.approx(15.0)

    def test_invalid_forcing(self):
        with pytest.raises(ValueError):
            AmbientForcing(((0, 15),))
        with pytest.raises(ValueError):
            AmbientForcing(((0, 15), (720, 30)), sunrise=800, sunset=700)


class TestInsolation:
    f = AmbientForcing(((0, 15), (720, 30)), sunrise=330, sunset=1170, insolation_peak=1.0)

    def test_zero_at_sunrise(self):
        assert insolation_at(self.f, 330) == 0.0

    def test_peak_at_solar_noon(self):
        assert insolation_at(self.f, 750) == pytest.approx(1.0)

    def test_quarter_day(self):
        t = 330 + 0.25 * (1170 - 330)
        assert insolation_at(self.f, t) == pytest.approx(math.sin(math.pi / 4))

    @given(st.floats(0, 1439.999))
    def test_bounded_by_peak(self, t):
        f = AmbientForcing(((0, 15), (720, 30)), 330, 1170, 0.7)
        v = insolation_at(f, t)
        assert 0.0 <= v <= 0.7
        if t <= 330 or t >= 1170:
            assert v == 0.0


class TestStep:
    grass = MaterialThermalModel("grass", 0.5, 4.0)

    def test_equilibrium(self):
        f = AmbientForcing(summer_profile())
        tod = 600.0
        s = SurfaceState(target_temp(self.grass, f, tod), 0.0)
        for dt in (0.5, 1.0, 5.0):
            nxt = step_surface(self.grass, s, f, dt, start_tod=tod)
            assert abs(nxt.surface_temp - s.surface_temp) < 1e-9
            assert nxt.time == dt

    def test_closed_form_decay(self):
        temps = integrate(self.grass, NIGHT, 28.0, 240)
        assert 15 + 13 * math.exp(-2) == pytest.approx(16.7594, abs=1e-4)
        assert temps[-1] == pytest.approx(15 + 13 * math.exp(-2), abs=0.1)

    def test_grass_below_20_within_four_hours(self):
        sc = load_fixture("concrete_vs_grass")
        grass = sc.materials["grass"]
        temps = integrate(grass, sc.forcing, 28.0, 240, start_tod=18 * 60 + 30)
        assert temps[-1] < 20.0

    @pytest.mark.parametrize("dt", [0, -1, 5.01, 10])
    def test_rejects_bad_step(self, dt):
        with pytest.raises(ValueError):
            step_surface(self.grass, SurfaceState(20, 0), NIGHT, dt)

    def test_surface_sanity_bound(self):
        with pytest.raises(ValueError):
            SurfaceState(120.0, 0.0)
        with pytest.raises(ValueError):
            SurfaceState(float("nan"), 0.0)


class TestProbe:
    f = flat(20.0)

    def test_decoupled(self):
        m = MaterialThermalModel("x", 0.5, 0.0, probe_coupling=0.0)
        assert probe_reading(m, SurfaceState(30, 0), self.f, 0) == 20.0

    def test_fully_coupled(self):
        m = MaterialThermalModel("x", 0.5, 0.0, probe_coupling=1.0)
        assert probe_reading(m, SurfaceState(30, 0), self.f, 0) == 30.0

    def test_partial(self):
        m = MaterialThermalModel("x", 0.5, 0.0, probe_coupling=0.6)
        assert probe_reading(m, SurfaceState(30, 0), self.f, 0) == pytest.approx(26.0)

    @given(st.floats(0, 1), st.floats(20, 80))
    def test_never_below_ambient_when_surface_hotter(self, c, surface):
        m = MaterialThermalModel("x", 0.5, 0.0, probe_coupling=c)
        assert probe_reading(m, SurfaceState(surface, 0), self.f, 0) >= 20.0


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 1.5), st.floats(-10, 60), st.floats(5, 40))
    def test_monotone_relaxation(self, k, t0, ambient):
        m = MaterialThermalModel("x", k, 0.0)
        temps = integrate(m, flat(ambient, peak=0.0), t0, 600)
        gaps = np.abs(temps - ambient)
        assert np.all(np.diff(gaps) <= 1e-12)

    @pytest.mark.parametrize("k", [0.08, 0.1, 0.3, 0.5, 1.2])
    def test_euler_matches_closed_form_over_12h(self, k):
        m = MaterialThermalModel("x", k, 0.0)
        temps = integrate(m, NIGHT, 30.0, 720)
        exact = relax_closed_form(30.0, 15.0, k, np.arange(721) / 60)
        rel = np.abs(temps - exact) / np.abs(exact)
        assert rel.max() < 0.005

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 1.0), st.floats(0.01, 1.0), st.floats(16, 60))
    def test_faster_material_never_warmer_at_night(self, k_slow, dk, t0):
        slow = MaterialThermalModel("slow", k_slow, 5.0)
        fast = MaterialThermalModel("fast", k_slow + dk, 5.0)
        a = integrate(fast, NIGHT, t0, 600)
        b = integrate(slow, NIGHT, t0, 600)
        assert np.all(a <= b + 1e-12)

    def test_material_validation(self):
        with pytest.raises(ValueError):
            MaterialThermalModel("bad", 0.0, 1.0)
        with pytest.raises(ValueError):
            MaterialThermalModel("bad", 0.1, -1.0)
        with pytest.raises(ValueError):
            MaterialThermalModel("bad", 0.1, 1.0, probe_coupling=1.5)
