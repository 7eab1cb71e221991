import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loratherm.link import (
    LOS_DEFAULT,
    OBSTRUCTED_DEFAULT,
    PathEnvironment,
    PathMode,
    RadioParams,
    airtime_ms,
    deliver,
    max_range_m,
    path_loss_db,
)


def airtime_oracle(sf, payload, cr=1, bw=125_000, preamble=8, crc=True, explicit=True, ldro=None):
    """Exact airtime by counting payload blocks one at a time (no ceil)."""
    if ldro is None:
        ldro = sf >= 11 and bw <= 125_000
    de = 1 if ldro else 0
    bits_needed = 8 * payload - 4 * sf + 28 + 16 * int(crc) - 20 * (0 if explicit else 1)
    bits_per_block = 4 * (sf - 2 * de)
    blocks = 0
    while blocks * bits_per_block < bits_needed:
        blocks += 1
    symbols = Fraction(preamble) + Fraction(17, 4) + 8 + blocks * (cr + 4)
    return symbols * Fraction(2**sf, bw) * 1000


def rng(seed=0):
    return np.random.default_rng(seed)


class TestAirtime:
    def test_sf7_13_bytes(self):
        assert float(airtime_oracle(7, 13)) == pytest.approx(46.336, abs=1e-9)
        assert airtime_ms(RadioParams(7), 13) == pytest.approx(46.336, abs=0.001)

    def test_monotone_in_payload(self):
        r = RadioParams(7)
        assert airtime_ms(r, 14) >= airtime_ms(r, 13)

    def test_sf12_over_sf7_ratio(self):
        ratio = airtime_oracle(12, 18) / airtime_oracle(7, 18)
        assert float(ratio) > 16
        assert airtime_ms(RadioParams(12), 18) / airtime_ms(RadioParams(7), 18) == pytest.approx(float(ratio))

    @pytest.mark.parametrize("sf", range(7, 13))
    def test_matches_oracle_grid(self, sf):
        r = RadioParams(sf)
        for pl in range(1, 65):
            assert airtime_ms(r, pl) == pytest.approx(float(airtime_oracle(sf, pl)), rel=1e-12, abs=1e-9)

    @given(st.integers(7, 12), st.integers(1, 255), st.integers(1, 4), st.booleans(), st.booleans())
    def test_matches_oracle_random_settings(self, sf, pl, cr, crc, explicit):
        r = RadioParams(sf, coding_rate_index=cr, crc_on=crc, explicit_header=explicit)
        expected = airtime_oracle(sf, pl, cr=cr, crc=crc, explicit=explicit)
        assert airtime_ms(r, pl) == pytest.approx(float(expected), rel=1e-12)

    @pytest.mark.parametrize("pl", [0, 256])
    def test_rejects_bad_payload(self, pl):
        with pytest.raises(ValueError):
            airtime_ms(RadioParams(), pl)

    def test_ldro_default(self):
        assert RadioParams(11).low_datarate_optimize
        assert not RadioParams(10).low_datarate_optimize


class TestPathLoss:
    def test_reference_distance(self):
        env = PathEnvironment(shadowing_sigma_db=0.0)
        assert path_loss_db(env, 1.0, rng()) == 40.0

    def test_los_5km(self):
        env = PathEnvironment(PathMode.LOS, 3.0, shadowing_sigma_db=0.0)
        assert path_loss_db(env, 5000, rng()) == pytest.approx(40 + 30 * math.log10(5000))
        assert path_loss_db(env, 5000, rng()) == pytest.approx(150.97, abs=0.005)

    def test_obstructed_550m(self):
        env = PathEnvironment(PathMode.OBSTRUCTED, 4.05, shadowing_sigma_db=0.0)
        assert path_loss_db(env, 550, rng()) == pytest.approx(151.0, abs=0.05)

    def test_calibrated_exponents_solve_budget(self):
        # exponent that makes 151 dB land exactly at each observed range
        assert (151 - 40) / (10 * math.log10(5000)) == pytest.approx(3.0, abs=0.001)
        assert (151 - 40) / (10 * math.log10(550)) == pytest.approx(4.05, abs=0.001)

    def test_rejects_sub_metre(self):
        with pytest.raises(ValueError):
            path_loss_db(LOS_DEFAULT, 0.5, rng())

    def test_shadowing_is_seeded(self):
        a = [path_loss_db(LOS_DEFAULT, 300, rng(3)) for _ in range(2)]
        assert a[0] == a[1]

    def test_exponent_bounds(self):
        with pytest.raises(ValueError):
            PathEnvironment(path_loss_exponent=7.0)


class TestDeliver:
    sf12 = RadioParams(12)

    def test_inclusive_at_sensitivity(self):
        # place the receiver where loss is exactly tx - sensitivity
        env = PathEnvironment(PathMode.LOS, 2.0, reference_loss_db=151.0, shadowing_sigma_db=0.0)
        res = deliver(self.sf12, env, 1.0, False, rng())
        assert res.rssi_dbm == -137.0
        assert res.received

    def test_los_5km_received(self):
        env = PathEnvironment(PathMode.LOS, 3.0, shadowing_sigma_db=0.0)
        res = deliver(self.sf12, env, 5000, False, rng())
        assert res.received
        assert res.rssi_dbm == pytest.approx(14 - 150.97, abs=0.01)

    def test_obstructed_700m_mostly_lost(self):
        env = OBSTRUCTED_DEFAULT
        assert env.shadowing_sigma_db == 2.0
        g = rng(11)
        hits = sum(deliver(self.sf12, env, 700, False, g).received for _ in range(1000))
        assert hits / 1000 < 0.5

    def test_snr_clamped(self):
        env = PathEnvironment(shadowing_sigma_db=0.0)
        near = deliver(self.sf12, env, 10, False, rng())
        assert near.snr_db == 10.0
        far = deliver(self.sf12, env, 4000, False, rng())
        assert -20.0 <= far.snr_db <= 10.0
        assert far.snr_db == pytest.approx(max(far.rssi_dbm + 117, -20.0), abs=0.011)

    def test_received_implies_above_sensitivity(self):
        g = rng(5)
        for d in np.linspace(100, 8000, 200):
            res = deliver(self.sf12, LOS_DEFAULT, float(d), False, g)
            if res.received:
                assert res.rssi_dbm >= self.sf12.sensitivity

    def test_step_function_without_shadowing(self):
        env = PathEnvironment(PathMode.LOS, 3.0, shadowing_sigma_db=0.0)
        edge = max_range_m(self.sf12, env)
        dists = np.linspace(100, 9000, 300)
        got = [deliver(self.sf12, env, float(d), False, rng()).received for d in dists]
        # once lost, never regained
        first_loss = got.index(False)
        assert not any(got[first_loss:])
        assert dists[first_loss - 1] <= edge * 1.0001

    @given(st.floats(50, 3000), st.integers(0, 2**32 - 1))
    def test_raised_antenna_never_hurts(self, d, seed):
        env = OBSTRUCTED_DEFAULT
        low = deliver(self.sf12, env, d, False, rng(seed))
        high = deliver(self.sf12, env, d, True, rng(seed))
        assert high.rssi_dbm >= low.rssi_dbm
        assert high.received or not low.received

    def test_delivery_rate_non_increasing_in_distance(self):
        rates = []
        for d in (300, 450, 550, 650, 800):
            g = rng(42)
            rates.append(sum(deliver(self.sf12, OBSTRUCTED_DEFAULT, d, False, g).received for _ in range(2000)))
        assert rates == sorted(rates, reverse=True)

    def test_sigma_zero_range_rules(self):
        los = PathEnvironment(PathMode.LOS, 3.0, shadowing_sigma_db=0.0)
        obs = PathEnvironment(PathMode.OBSTRUCTED, 4.05, shadowing_sigma_db=0.0)
        assert deliver(self.sf12, los, 5000, False, rng()).received
        assert not deliver(self.sf12, obs, 1000, False, rng()).received
