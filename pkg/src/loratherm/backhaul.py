"""Gateways, network-server deduplication, the project webhook and routing
into the store."""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .link import DeliveryResult
from .node import FrameError, UplinkFrame
from .store import Reading, Store, StoreError, iso_to_ms, ms_to_iso

log = logging.getLogger(__name__)

DEDUP_WINDOW_MS = 2000
RETRY_QUEUE_MAX = 1000


@dataclass(frozen=True)
class GatewayConfig:
    gateway_id: str
    name: str = ""
    position: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class UplinkPacket:
    frame: bytes
    gateway_id: str
    rssi_dbm: float
    snr_db: float
    received_at_ms: int

    def key(self) -> tuple[bytes, int] | None:
        try:
            f = UplinkFrame.decode(self.frame)
        except FrameError:
            return None
        return f.dev_eui, f.counter


def gateway_receive(gw: GatewayConfig, frame: bytes, delivery: DeliveryResult, t_ms: int) -> UplinkPacket | None:
    """Forward a heard frame with its reception metadata; None means dropped."""
    if not delivery.received:
        return None
    return UplinkPacket(frame, gw.gateway_id, delivery.rssi_dbm, delivery.snr_db, t_ms)


@dataclass
class DedupResult:
    unique: list[UplinkPacket] = field(default_factory=list)
    folded: int = 0
    replays: int = 0
    malformed: list[UplinkPacket] = field(default_factory=list)


def _better(a: UplinkPacket, b: UplinkPacket) -> bool:
    """True when ``a`` should replace ``b`` as the representative copy."""
    if a.rssi_dbm != b.rssi_dbm:
        return a.rssi_dbm > b.rssi_dbm
    return a.gateway_id < b.gateway_id


def dedup(
    packets: Iterable[UplinkPacket],
    window_ms: int = DEDUP_WINDOW_MS,
    seen: dict | None = None,
) -> DedupResult:
    """Collapse multi-gateway copies of the same (dev_eui, counter).

    Copies arriving within ``window_ms`` of the first are folded into one
    record carrying the strongest gateway's metadata and the first arrival
    time. A key seen again after the window is a replay and is dropped.
    ``seen`` carries first-arrival times between calls.
    """
    if seen is None:
        seen = {}
    res = DedupResult()
    groups: dict[tuple, int] = {}
    for p in sorted(packets, key=lambda p: p.received_at_ms):
        key = p.key()
        if key is None:
            res.malformed.append(p)
            continue
        first = seen.get(key)
        if first is not None and p.received_at_ms - first > window_ms:
            res.replays += 1
            log.warning("replay anomaly for %s counter %d", key[0].hex(), key[1])
            continue
        if key in groups:
            idx = groups[key]
            best = res.unique[idx]
            if _better(p, best):
                res.unique[idx] = UplinkPacket(p.frame, p.gateway_id, p.rssi_dbm, p.snr_db, best.received_at_ms)
            res.folded += 1
        elif first is not None:
            # late copy of a record already finalised in an earlier batch
            res.folded += 1
        else:
            seen[key] = p.received_at_ms
            groups[key] = len(res.unique)
            res.unique.append(p)
    return res


@dataclass(frozen=True)
class RegistryEntry:
    project_id: str
    device_id: str


class DeviceRegistry(dict):
    """dev_eui (bytes) -> RegistryEntry"""

    @classmethod
    def from_csv(cls, path: str | Path) -> "DeviceRegistry":
        reg = cls()
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0].strip() != "dev_eui,project_id,device_id":
            raise ValueError(f"{path}: expected header dev_eui,project_id,device_id")
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                eui, project, device = (x.strip() for x in line.split(","))
                reg[bytes.fromhex(eui)] = RegistryEntry(project, device)
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
        return reg

    def to_csv(self, path: str | Path) -> None:
        rows = ["dev_eui,project_id,device_id"]
        for eui in sorted(self):
            e = self[eui]
            rows.append(f"{eui.hex().upper()},{e.project_id},{e.device_id}")
        Path(path).write_text("\n".join(rows) + "\n")


IGNORED = "IGNORED"
MALFORMED = "MALFORMED"


def webhook_filter(registry: DeviceRegistry, packet: UplinkPacket) -> Reading | str:
    """Keep only this project's devices; others come back as ``IGNORED``."""
    try:
        frame = UplinkFrame.decode(packet.frame)
    except FrameError:
        return MALFORMED
    entry = registry.get(frame.dev_eui)
    if entry is None:
        return IGNORED
    return Reading(
        device_id=entry.device_id,
        counter=frame.counter,
        timestamp_ms=packet.received_at_ms,
        temp_c=frame.temp_centi / 100,
        lux=frame.lux,
        flags=frame.flags,
        gateway_id=packet.gateway_id,
        rssi=packet.rssi_dbm,
        snr=packet.snr_db,
        project_id=entry.project_id,
    )


class Router:
    """Inserts readings exactly once, parking failed inserts in a bounded retry queue."""

    def __init__(self, store: Store, max_queue: int = RETRY_QUEUE_MAX):
        self.store = store
        self.queue: deque[Reading] = deque()
        self.max_queue = max_queue
        self.stored = 0
        self.duplicates = 0
        self.queue_dropped = 0

    def route(self, reading: Reading) -> bool:
        try:
            ok = self.store.insert_reading(reading)
        except StoreError as exc:
            log.error("store failure for %s/%d: %s", reading.device_id, reading.counter, exc)
            if len(self.queue) >= self.max_queue:
                self.queue.popleft()
                self.queue_dropped += 1
            self.queue.append(reading)
            return False
        if ok:
            self.stored += 1
        else:
            self.duplicates += 1
        return ok

    def retry(self) -> int:
        """Re-attempt queued inserts once each; returns how many were stored."""
        pending, self.queue = self.queue, deque()
        before = self.stored
        for r in pending:
            self.route(r)
        return self.stored - before


class NetworkServer:
    """Dedup -> webhook -> store, with per-outcome accounting."""

    def __init__(self, registry: DeviceRegistry, store: Store, window_ms: int = DEDUP_WINDOW_MS):
        self.registry = registry
        self.router = Router(store)
        self.window_ms = window_ms
        self.seen: dict = {}
        self.counts: Counter = Counter()

    def process(self, packets: list[UplinkPacket]) -> list[Reading]:
        res = dedup(packets, self.window_ms, self.seen)
        self.counts["dedup_folded"] += res.folded
        self.counts["replay_anomalies"] += res.replays
        self.counts["malformed"] += len(res.malformed)
        out = []
        for p in res.unique:
            r = webhook_filter(self.registry, p)
            if r == IGNORED:
                self.counts["ignored"] += 1
            elif r == MALFORMED:
                self.counts["malformed"] += 1
            elif self.router.route(r):
                out.append(r)
        self.counts["stored"] = self.router.stored
        self.counts["store_duplicates"] = self.router.duplicates
        self.counts["retry_queued"] = len(self.router.queue)
        self.counts["retry_dropped"] = self.router.queue_dropped
        return out


# -- packet trace ------------------------------------------------------------

def format_trace_line(p: UplinkPacket) -> str:
    return f"{ms_to_iso(p.received_at_ms)},{p.gateway_id},{p.rssi_dbm!r},{p.snr_db!r},{p.frame.hex().upper()}"


def parse_trace_line(line: str) -> UplinkPacket:
    ts, gw, rssi, snr, frame = line.strip().split(",")
    return UplinkPacket(bytes.fromhex(frame), gw, float(rssi), float(snr), iso_to_ms(ts))


def read_trace(path: str | Path) -> list[UplinkPacket]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(parse_trace_line(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: bad trace record: {exc}") from exc
    return out
