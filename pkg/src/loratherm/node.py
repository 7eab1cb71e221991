"""End-node device model: sensing, frame codec, energy budget, loss events."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum, IntFlag

import numpy as np

FRAME_VERSION = 1
_FRAME = struct.Struct("<B8sIhHB")
FRAME_LEN = _FRAME.size  # 18

TEMP_CENTI_RANGE = (-4000, 12000)
LUX_FULL_SUN = 40000
LUX_MAX = 0xFFFF


class Flags(IntFlag):
    NONE = 0
    OVERHEAT_SKIP = 0x01
    LUX_GROSS_ERROR = 0x02


class NodeStatus(str, Enum):
    ALIVE = "ALIVE"
    DEAD = "DEAD"
    LOST = "LOST"


class NodeDead(RuntimeError):
    """Raised when a node with an exhausted battery is asked to work."""


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class NodeConfig:
    device_id: str
    dev_eui: bytes
    material_ref: str
    tx_interval: int = 2  # minutes
    # gateway_id -> (distance_m, path mode name)
    links: dict = field(default_factory=dict)
    antenna_raised: bool = False
    low_power_timer: bool = False
    enclosure_shaded: bool = True
    initial_surface_c: float | None = None
    project_id: str = "default"
    registered: bool = True
    location: str = ""

    def __post_init__(self):
        if len(self.dev_eui) != 8:
            raise ValueError(f"{self.device_id}: dev_eui must be 8 bytes")
        if not 1 <= self.tx_interval <= 30:
            raise ValueError(f"{self.device_id}: tx_interval must lie in [1, 30] minutes")

    @property
    def eui_hex(self) -> str:
        return self.dev_eui.hex().upper()

    @property
    def eui_int(self) -> int:
        return int.from_bytes(self.dev_eui, "big")


@dataclass
class BatteryState:
    """Charge bookkeeping in mAh; currents in mA."""

    capacity: float = 2500.0
    voltage: float = 3.7
    consumed: float = 0.0
    sleep_ma: float = 11.0
    active_ma: float = 45.0
    tx_ma: float = 120.0
    active_seconds: float = 5.0
    timer_sleep_ma: float = 0.02

    def __post_init__(self):
        for name in ("sleep_ma", "active_ma", "tx_ma", "timer_sleep_ma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.capacity <= 0:
            raise ValueError("capacity must be > 0")

    @property
    def remaining(self) -> float:
        return max(self.capacity - self.consumed, 0.0)

    @property
    def exhausted(self) -> bool:
        return self.consumed >= self.capacity

    def draw(self, mah: float) -> float:
        """Consume up to ``mah``; returns the fraction actually supplied."""
        if mah <= 0:
            return 1.0
        supplied = min(mah, self.remaining)
        self.consumed = min(self.consumed + supplied, self.capacity)
        return supplied / mah


@dataclass
class NodeState:
    config: NodeConfig
    battery: BatteryState = field(default_factory=BatteryState)
    status: NodeStatus = NodeStatus.ALIVE
    counter: int = 0
    died_at: float | None = None
    lost_at: float | None = None

    @property
    def sleep_ma(self) -> float:
        b = self.battery
        return b.timer_sleep_ma if self.config.low_power_timer else b.sleep_ma


@dataclass(frozen=True)
class Conditions:
    """What the world presents to a node at one instant."""

    probe_c: float
    enclosure_c: float
    insolation: float


@dataclass(frozen=True)
class OverheatModel:
    threshold_c: float = 40.0
    p_skip: float = 0.8


@dataclass(frozen=True)
class SensorSample:
    timestamp: float
    temp_centi: int
    lux: int
    flags: Flags = Flags.NONE

    @property
    def skipped(self) -> bool:
        return bool(self.flags & Flags.OVERHEAT_SKIP)


@dataclass(frozen=True)
class UplinkFrame:
    dev_eui: bytes
    counter: int
    temp_centi: int
    lux: int
    flags: int = 0
    version: int = FRAME_VERSION

    def encode(self) -> bytes:
        return _FRAME.pack(self.version, self.dev_eui, self.counter, self.temp_centi, self.lux, self.flags)

    @classmethod
    def decode(cls, data: bytes) -> "UplinkFrame":
        if len(data) != FRAME_LEN:
            raise FrameError(f"frame must be {FRAME_LEN} bytes, got {len(data)}")
        version, eui, counter, temp, lux, flags = _FRAME.unpack(data)
        if version != FRAME_VERSION:
            raise FrameError(f"unknown frame version {version}")
        return cls(eui, counter, temp, lux, flags, version)


def to_centi(temp_c: float) -> int:
    lo, hi = TEMP_CENTI_RANGE
    return min(max(int(round(temp_c * 100)), lo), hi)


def sample_sensors(
    node: NodeState,
    cond: Conditions,
    t: float,
    rng: np.random.Generator,
    overheat: OverheatModel = OverheatModel(),
) -> SensorSample:
    if node.battery.exhausted or node.status is NodeStatus.DEAD:
        raise NodeDead(node.config.device_id)
    # fixed draw count per sample keeps the node's stream position independent of outcomes
    u_skip, u_lux = rng.random(2)
    lux = min(int(round(LUX_FULL_SUN * cond.insolation)), LUX_MAX)
    flags = Flags.NONE
    if cond.enclosure_c >= overheat.threshold_c:
        if u_skip < overheat.p_skip:
            flags = Flags.OVERHEAT_SKIP
        else:
            flags = Flags.LUX_GROSS_ERROR
            lux = 0 if u_lux < 0.5 else LUX_MAX
    return SensorSample(t, to_centi(cond.probe_c), lux, flags)


def encode_frame(node: NodeState, sample: SensorSample) -> bytes:
    if sample.skipped:
        raise ValueError("overheat-skipped samples produce no frame")
    return UplinkFrame(node.config.dev_eui, node.counter, sample.temp_centi, sample.lux, int(sample.flags)).encode()


def decode_frame(data: bytes) -> UplinkFrame:
    return UplinkFrame.decode(data)


class Outcome(str, Enum):
    EMITTED = "EMITTED"
    SKIPPED = "SKIPPED"
    NODE_DEAD = "NODE_DEAD"
    INACTIVE = "INACTIVE"


@dataclass(frozen=True)
class CycleOutcome:
    kind: Outcome
    frame: bytes | None = None
    sample: SensorSample | None = None


def _mah(ma: float, seconds: float) -> float:
    return ma * seconds / 3600.0


def run_cycle(
    node: NodeState,
    cond: Conditions,
    t: float,
    rng: np.random.Generator,
    airtime_ms: float,
    overheat: OverheatModel = OverheatModel(),
) -> CycleOutcome:
    """One wake–sense–transmit cycle at absolute minute ``t``.

    The sleep charge for the rest of the interval is drawn here too. If the
    battery runs out while asleep the node is marked dead at the fractional
    time it ran out; the frame already sent still counts.
    """
    if node.status is NodeStatus.LOST:
        return CycleOutcome(Outcome.INACTIVE)
    b = node.battery
    if node.status is NodeStatus.DEAD or b.exhausted:
        _mark_dead(node, t)
        return CycleOutcome(Outcome.NODE_DEAD)

    if b.draw(_mah(b.active_ma, b.active_seconds)) < 1.0:
        _mark_dead(node, t)
        return CycleOutcome(Outcome.NODE_DEAD)
    sample = sample_sensors(node, cond, t, rng, overheat)
    awake_s = b.active_seconds
    frame = None
    if not sample.skipped:
        air_s = airtime_ms / 1000.0
        if b.draw(_mah(b.tx_ma, air_s)) < 1.0:
            _mark_dead(node, t)
            return CycleOutcome(Outcome.NODE_DEAD, sample=sample)
        frame = encode_frame(node, sample)
        node.counter += 1
        awake_s += air_s

    sleep_s = max(node.config.tx_interval * 60.0 - awake_s, 0.0)
    supplied = b.draw(_mah(node.sleep_ma, sleep_s))
    if supplied < 1.0:
        _mark_dead(node, t + (awake_s + supplied * sleep_s) / 60.0)
    kind = Outcome.SKIPPED if frame is None else Outcome.EMITTED
    return CycleOutcome(kind, frame, sample)


def _mark_dead(node: NodeState, t: float) -> None:
    node.status = NodeStatus.DEAD
    if node.died_at is None:
        node.died_at = t


def cycle_charge_mah(config: NodeConfig, battery: BatteryState, airtime_ms: float) -> float:
    """Charge for one full transmitting cycle, including its sleep share."""
    air_s = airtime_ms / 1000.0
    awake_s = battery.active_seconds + air_s
    sleep_ma = battery.timer_sleep_ma if config.low_power_timer else battery.sleep_ma
    sleep_s = max(config.tx_interval * 60.0 - awake_s, 0.0)
    return _mah(battery.active_ma, battery.active_seconds) + _mah(battery.tx_ma, air_s) + _mah(sleep_ma, sleep_s)


def average_current_ma(config: NodeConfig, battery: BatteryState, airtime_ms: float) -> float:
    return cycle_charge_mah(config, battery, airtime_ms) * 3600.0 / (config.tx_interval * 60.0)


def lifetime_estimate(config: NodeConfig, battery: BatteryState, airtime_ms: float) -> float:
    """Hours until a full battery is spent, from the average current."""
    return battery.capacity / average_current_ma(config, battery, airtime_ms)


def simulate_lifetime(
    config: NodeConfig,
    battery: BatteryState,
    airtime_ms: float,
    cond: Conditions = Conditions(20.0, 20.0, 0.0),
    seed: int = 0,
    max_hours: float = 1e6,
) -> tuple[float, NodeState]:
    """Run cycles back to back until the node dies; returns (hours, state)."""
    node = NodeState(config, battery)
    rng = np.random.default_rng(seed)
    t = 0.0
    limit = max_hours * 60.0
    while node.status is NodeStatus.ALIVE and t < limit:
        run_cycle(node, cond, t, rng, airtime_ms)
        t += config.tx_interval
    if node.died_at is None:
        return math.inf, node
    return node.died_at / 60.0, node


def apply_loss_event(node: NodeState, t: float) -> NodeState:
    """Device stolen or broken at ``t``. Nothing is held on the device,
    so readings already delivered are unaffected."""
    if node.status is NodeStatus.ALIVE:
        node.status = NodeStatus.LOST
        node.lost_at = t
    return node
