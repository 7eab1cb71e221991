"""LoRa airtime, log-distance path loss and per-gateway delivery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# SX127x receiver sensitivity at 125 kHz (dBm)
SENSITIVITY_DBM_125KHZ = {
    7: -123.0,
    8: -126.0,
    9: -129.0,
    10: -132.0,
    11: -134.5,
    12: -137.0,
}
NOISE_FLOOR_DBM = -117.0
SNR_RANGE_DB = (-20.0, 10.0)


@dataclass(frozen=True)
class RadioParams:
    spreading_factor: int = 7
    bandwidth: float = 125_000.0
    coding_rate_index: int = 1  # 1..4 -> 4/5..4/8
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_datarate_optimize: bool | None = None  # None: on iff SF >= 11 at <= 125 kHz
    tx_power_dbm: float = 14.0
    sensitivity_dbm: dict[int, float] = field(default_factory=lambda: dict(SENSITIVITY_DBM_125KHZ))

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError(f"spreading factor {self.spreading_factor} outside [7, 12]")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if not 1 <= self.coding_rate_index <= 4:
            raise ValueError("coding_rate_index must lie in [1, 4]")
        if self.low_datarate_optimize is None:
            ldro = self.spreading_factor >= 11 and self.bandwidth <= 125_000
            object.__setattr__(self, "low_datarate_optimize", ldro)

    @property
    def sensitivity(self) -> float:
        return self.sensitivity_dbm[self.spreading_factor]


class PathMode(str, Enum):
    LOS = "LOS"
    OBSTRUCTED = "OBSTRUCTED"


@dataclass(frozen=True)
class PathEnvironment:
    mode: PathMode = PathMode.LOS
    path_loss_exponent: float = 3.0
    reference_loss_db: float = 40.0
    shadowing_sigma_db: float = 2.0
    antenna_bonus_db: float = 6.0

    def __post_init__(self):
        if not 1.6 <= self.path_loss_exponent <= 6.0:
            raise ValueError(f"path loss exponent {self.path_loss_exponent} outside [1.6, 6]")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")


LOS_DEFAULT = PathEnvironment(PathMode.LOS, 3.0)
OBSTRUCTED_DEFAULT = PathEnvironment(PathMode.OBSTRUCTED, 4.05)


@dataclass(frozen=True)
class DeliveryResult:
    received: bool
    rssi_dbm: float
    snr_db: float
    gateway_id: str = ""


def airtime_ms(radio: RadioParams, payload_len: int) -> float:
    """Time on air of one frame (Semtech AN1200.13 symbol count)."""
    if not 1 <= payload_len <= 255:
        raise ValueError(f"payload length {payload_len} outside [1, 255]")
    sf = radio.spreading_factor
    de = 1 if radio.low_datarate_optimize else 0
    ih = 0 if radio.explicit_header else 1
    crc = 1 if radio.crc_on else 0
    num = 8 * payload_len - 4 * sf + 28 + 16 * crc - 20 * ih
    n_payload = 8 + max(math.ceil(num / (4 * (sf - 2 * de))) * (radio.coding_rate_index + 4), 0)
    # quarter-symbol count is an integer, so one final division keeps the result correctly rounded
    quarter_symbols = 4 * radio.preamble_symbols + 17 + 4 * n_payload
    return quarter_symbols * 2**sf * 1000 / (4 * radio.bandwidth)


def path_loss_db(env: PathEnvironment, distance_m: float, rng: np.random.Generator) -> float:
    # one normal draw per call regardless of sigma keeps RNG streams aligned
    if distance_m < 1:
        raise ValueError("distance must be >= 1 m")
    shadow = rng.standard_normal() * env.shadowing_sigma_db
    return env.reference_loss_db + 10 * env.path_loss_exponent * math.log10(distance_m) + shadow


def deliver(
    radio: RadioParams,
    env: PathEnvironment,
    distance_m: float,
    antenna_raised: bool,
    rng: np.random.Generator,
    gateway_id: str = "",
) -> DeliveryResult:
    """Decide whether one gateway hears one uplink.

    RSSI is reported to 0.01 dB, and the reception test runs on the reported
    value. Reception at exactly the sensitivity counts as received.
    """
    rssi = radio.tx_power_dbm - path_loss_db(env, distance_m, rng)
    if antenna_raised:
        rssi += env.antenna_bonus_db
    rssi = round(rssi, 2)
    lo, hi = SNR_RANGE_DB
    snr = round(min(max(rssi - NOISE_FLOOR_DBM, lo), hi), 2)
    return DeliveryResult(rssi >= radio.sensitivity, rssi, snr, gateway_id)


def max_range_m(radio: RadioParams, env: PathEnvironment, antenna_raised: bool = False) -> float:
    """Distance where the shadow-free link budget is exactly exhausted."""
    budget = radio.tx_power_dbm - radio.sensitivity + (env.antenna_bonus_db if antenna_raised else 0.0)
    return 10 ** ((budget - env.reference_loss_db) / (10 * env.path_loss_exponent))
