"""Seeded end-to-end runs: world -> nodes -> radio -> gateways -> network
server -> store, plus expectation checks and report generation."""

from __future__ import annotations

import json
import logging
import math
import operator
import zlib
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import Series, WeatherSeries
from .backhaul import DEDUP_WINDOW_MS, DeviceRegistry, NetworkServer, RegistryEntry, format_trace_line, gateway_receive, read_trace
from .link import PathMode, airtime_ms, deliver
from .node import (
    FRAME_LEN, Conditions, Flags, NodeState, NodeStatus, Outcome, apply_loss_event, lifetime_estimate, run_cycle,
)
from .scenario import Expectation, Scenario, parse_scenario
from .store import Store
from .thermal import SurfaceState, ambient_at, enclosure_temp, insolation_at, probe_reading, step_surface

log = logging.getLogger(__name__)

STORE_FILE = "store.sqlite"
TRACE_FILE = "trace.csv"
EXPORT_FILE = "readings.csv"
REGISTRY_FILE = "registry.csv"
SCENARIO_FILE = "scenario.ini"
RUN_FILE = "run.json"
WEATHER_FILE = "weather.csv"
REPORT_DIR = "report"

# accounting terms that together account for every gateway copy of every frame
SINKS = (
    "stored", "dropped_radio", "dedup_folded", "ignored", "malformed", "replay_anomalies",
    "store_duplicates", "retry_queued", "retry_dropped",
)


class InvariantViolation(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _gw_key(gateway_id: str) -> int:
    return zlib.crc32(gateway_id.encode())


def registry_for(scenario: Scenario) -> DeviceRegistry:
    reg = DeviceRegistry()
    for n in scenario.nodes:
        if n.registered:
            reg[n.dev_eui] = RegistryEntry(n.project_id, n.device_id)
    return reg


def bootstrap_store(store: Store, scenario: Scenario) -> None:
    """Write the scenario's entities (everything except readings)."""
    for uid, name in scenario.users.items():
        store.upsert_entity("user", id=uid, name=name)
    for pid, (name, owner) in scenario.projects.items():
        store.upsert_entity("project", id=pid, name=name, owner_user=owner)
    for m in scenario.materials.values():
        store.upsert_entity("material", id=m.name, name=m.name, k_cool=m.k_cool, solar_gain=m.solar_gain,
                            probe_coupling=m.probe_coupling)
    for g in scenario.gateways:
        store.upsert_entity("gateway", id=g.gateway_id, name=g.name, x=g.position[0], y=g.position[1])
    for n in scenario.nodes:
        if not n.registered:
            continue
        if n.project_id not in scenario.projects:
            store.upsert_entity("project", id=n.project_id, name=n.project_id)
        loc = store.upsert_entity("location", id=f"{n.device_id}@site", label=n.location or n.device_id,
                                  surface=n.material_ref, distances={g: d for g, (d, _) in n.links.items()})
        store.upsert_entity("device", id=n.device_id, dev_eui=n.eui_hex, project_id=n.project_id,
                            material_id=n.material_ref, location_id=loc)
    store.commit()


@dataclass
class NodeReport:
    device_id: str
    cycles: int = 0
    emitted: int = 0
    skip_minutes: list = field(default_factory=list)
    lux_gross_errors: int = 0
    consumed_mah: float = 0.0
    died_at_min: float | None = None
    lost_at_min: float | None = None
    status: str = NodeStatus.ALIVE.value
    lifetime_h: float = 0.0


@dataclass
class RunArtifacts:
    out_dir: Path
    scenario: Scenario
    accounting: dict
    nodes: dict[str, NodeReport]
    report_files: list = field(default_factory=list)

    @property
    def store_path(self) -> Path:
        return self.out_dir / STORE_FILE

    @property
    def trace_path(self) -> Path:
        return self.out_dir / TRACE_FILE

    @property
    def export_path(self) -> Path:
        return self.out_dir / EXPORT_FILE

    @property
    def weather_path(self) -> Path | None:
        p = self.out_dir / WEATHER_FILE
        return p if p.exists() else None

    def open_store(self) -> Store:
        return Store(self.store_path)

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunArtifacts":
        run_dir = Path(run_dir)
        scenario = parse_scenario(run_dir / SCENARIO_FILE)
        meta = json.loads((run_dir / RUN_FILE).read_text())
        nodes = {k: NodeReport(**v) for k, v in meta["nodes"].items()}
        return cls(run_dir, scenario, meta["accounting"], nodes)


def check_accounting(acc: dict) -> None:
    total = sum(acc.get(k, 0) for k in SINKS)
    if total != acc["copies_sent"]:
        raise InvariantViolation(f"accounting identity broken: copies_sent={acc['copies_sent']} != {total}; {acc}")


def weather_series(scenario: Scenario) -> WeatherSeries | None:
    """Station observations on the cadence grid, taken from the forcing."""
    w = scenario.weather
    if w is None:
        return None
    ticks = np.arange(0, scenario.duration_min + 1e-9, w.cadence_min)
    t_ms = np.array([scenario.to_ms(t) for t in ticks], dtype=np.int64)
    vals = np.array(
        [round(ambient_at(scenario.forcing, (scenario.start_tod + t) % 1440) + w.offset_c, 2) for t in ticks]
    )
    return WeatherSeries(w.station, t_ms, vals, w.cadence_min)


def run(scenario: Scenario, out_dir: str | Path, seed: int | None = None) -> RunArtifacts:
    """Simulate the deployment minute by minute and write run artifacts."""
    seed = scenario.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in (STORE_FILE, TRACE_FILE, EXPORT_FILE, WEATHER_FILE):
        (out / name).unlink(missing_ok=True)
    (out / SCENARIO_FILE).write_text(scenario.source_text)

    store = Store(out / STORE_FILE)
    bootstrap_store(store, scenario)
    registry = registry_for(scenario)
    registry.to_csv(out / REGISTRY_FILE)
    server = NetworkServer(registry, store, scenario.dedup_window_ms)

    air = airtime_ms(scenario.radio, FRAME_LEN)
    air_offset_ms = int(round(air))
    gateways = sorted(scenario.gateways, key=lambda g: g.gateway_id)
    f = scenario.forcing

    states = {n.device_id: NodeState(n, _fresh_battery(scenario)) for n in scenario.nodes}
    surfaces = {}
    for n in scenario.nodes:
        mat = scenario.materials[n.material_ref]
        init = n.initial_surface_c
        if init is None:
            tod0 = scenario.start_tod % 1440
            init = ambient_at(f, tod0) + mat.solar_gain * insolation_at(f, tod0)
        surfaces[n.device_id] = SurfaceState(init, 0.0)
    node_rng = {n.device_id: _stream(seed, 1, n.eui_int) for n in scenario.nodes}
    link_rng = {
        (n.device_id, g.gateway_id): _stream(seed, 2, n.eui_int, _gw_key(g.gateway_id))
        for n in scenario.nodes for g in gateways
    }
    reports = {n.device_id: NodeReport(n.device_id) for n in scenario.nodes}
    events = sorted(scenario.events, key=lambda e: e.t_min)
    acc: Counter = Counter(frames_emitted=0, copies_sent=0, dropped_radio=0)

    with open(out / TRACE_FILE, "w") as trace:
        for t in range(scenario.duration_min):
            while events and events[0].t_min <= t:
                ev = events.pop(0)
                apply_loss_event(states[ev.node_id], ev.t_min)
            tod = (scenario.start_tod + t) % 1440
            packets = []
            for n in scenario.nodes:
                st = states[n.device_id]
                if t % n.tx_interval or st.status is not NodeStatus.ALIVE:
                    continue
                mat = scenario.materials[n.material_ref]
                cond = Conditions(
                    probe_reading(mat, surfaces[n.device_id], f, tod),
                    enclosure_temp(f, tod, n.enclosure_shaded, scenario.enclosure_solar_gain),
                    insolation_at(f, tod),
                )
                outcome = run_cycle(st, cond, t, node_rng[n.device_id], air, scenario.overheat)
                rep = reports[n.device_id]
                if outcome.kind is Outcome.NODE_DEAD:
                    continue
                rep.cycles += 1
                if outcome.kind is Outcome.SKIPPED:
                    rep.skip_minutes.append(t)
                    continue
                rep.emitted += 1
                if outcome.sample.flags & Flags.LUX_GROSS_ERROR:
                    rep.lux_gross_errors += 1
                acc["frames_emitted"] += 1
                t_ms = scenario.to_ms(t) + air_offset_ms
                for g in gateways:
                    if g.gateway_id not in n.links:
                        continue
                    dist, mode = n.links[g.gateway_id]
                    env = scenario.environment(PathMode(mode))
                    res = deliver(scenario.radio, env, dist, n.antenna_raised,
                                  link_rng[(n.device_id, g.gateway_id)], g.gateway_id)
                    acc["copies_sent"] += 1
                    pkt = gateway_receive(g, outcome.frame, res, t_ms)
                    if pkt is None:
                        acc["dropped_radio"] += 1
                    else:
                        packets.append(pkt)
            if packets:
                packets.sort(key=lambda p: (p.received_at_ms, p.gateway_id, p.frame))
                for p in packets:
                    trace.write(format_trace_line(p) + "\n")
                server.process(packets)
            for n in scenario.nodes:
                surfaces[n.device_id] = step_surface(
                    scenario.materials[n.material_ref], surfaces[n.device_id], f, 1.0, scenario.start_tod
                )
    store.commit()

    acc.update({k: v for k, v in server.counts.items()})
    accounting = {k: int(acc.get(k, 0)) for k in ("frames_emitted", "copies_sent", *SINKS)}
    check_accounting(accounting)

    for n in scenario.nodes:
        st, rep = states[n.device_id], reports[n.device_id]
        rep.consumed_mah = st.battery.consumed
        rep.died_at_min = st.died_at
        rep.lost_at_min = st.lost_at
        rep.status = st.status.value
        rep.lifetime_h = lifetime_estimate(n, st.battery, air)

    store.export_csv(out / EXPORT_FILE)
    store.close()
    ws = weather_series(scenario)
    if ws is not None:
        analysis.write_weather_csv(out / WEATHER_FILE, ws)

    meta = {
        "scenario": scenario.name,
        "seed": seed,
        "airtime_ms": air,
        "accounting": accounting,
        "nodes": {k: vars(v) for k, v in reports.items()},
    }
    (out / RUN_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return RunArtifacts(out, scenario, accounting, reports)


def _fresh_battery(scenario: Scenario):
    return replace(scenario.battery, consumed=0.0)


# -- series helpers -----------------------------------------------------------

def device_series(art: RunArtifacts, device_id: str, t0_min=None, t1_min=None) -> Series:
    sc = art.scenario
    t0 = None if t0_min is None else sc.to_ms(t0_min)
    t1 = None if t1_min is None else sc.to_ms(t1_min)
    store = art.open_store()
    try:
        return Series.from_readings(device_id, store.query_readings(device_id, t0, t1))
    finally:
        store.close()


def clean_series(art: RunArtifacts, device_id: str) -> Series:
    a = art.scenario.analysis
    s, _ = analysis.filter_gross(device_series(art, device_id), a.gross_min_c, a.gross_max_c, a.gross_jump_c_per_min)
    return s


def fitted_k(art: RunArtifacts, device_id: str, t0_min: float, t1_min: float, floor: float | None = None) -> float:
    sc = art.scenario
    floor = sc.analysis.ambient_floor_c if floor is None else floor
    return analysis.cooling_fit(clean_series(art, device_id), sc.to_ms(t0_min), sc.to_ms(t1_min), floor)


def _in_daily_window(tod, start, end):
    tod = np.asarray(tod)
    if start <= end:
        return (tod >= start) & (tod < end)
    return (tod >= start) | (tod < end)


# -- expectations ---------------------------------------------------------------

OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}


@dataclass(frozen=True)
class CheckResult:
    name: str
    check: str
    passed: bool
    measured: object
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name} [{self.check}] measured={_fmt(self.measured)} {self.detail}".rstrip()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _compare(p: dict, measured: float) -> tuple[bool, str]:
    op = p.get("op", ">=")
    if op not in OPS:
        raise ConfigError(f"unknown comparison {op!r}")
    value = float(p["value"])
    return bool(OPS[op](measured, value)), f"(want {op} {value:g})"


def _window(p: dict, sc: Scenario):
    return p.get("from", 0.0), p.get("to", float(sc.duration_min))


def _check_temp(art, p, which):
    lo, hi = _window(p, art.scenario)
    s = device_series(art, p["device"], lo, hi)
    if len(s) == 0:
        return False, math.nan, "(no readings in window)"
    measured = float(s.temp_c.max() if which == "max" else s.temp_c.min())
    if "min_value" in p or "max_value" in p:
        ok = float(p.get("min_value", -math.inf)) <= measured <= float(p.get("max_value", math.inf))
        return ok, measured, f"(want in [{p.get('min_value', '-inf')}, {p.get('max_value', 'inf')}])"
    ok, d = _compare(p, measured)
    return ok, measured, d


def _count(art, device=None):
    store = art.open_store()
    try:
        if device is None:
            return store.count("reading")
        return len(store.query_readings(device))
    finally:
        store.close()


def _eval(art: RunArtifacts, e: Expectation) -> CheckResult:
    p, sc = e.params, art.scenario
    c = e.check
    if c in ("temp_max", "temp_min"):
        ok, m, d = _check_temp(art, p, c[5:])
    elif c == "reading_count":
        m = _count(art, p.get("device"))
        ok, d = _compare(p, m)
    elif c == "delivery_rate":
        rep = art.nodes[p["device"]]
        m = _count(art, p["device"]) / rep.emitted if rep.emitted else 0.0
        ok, d = _compare(p, m)
    elif c == "lifetime_h":
        rep = art.nodes[p["device"]]
        m = rep.died_at_min / 60 if rep.died_at_min is not None else rep.lifetime_h
        ok, d = _compare(p, m)
    elif c == "battery_consumed_mah":
        m = art.nodes[p["device"]].consumed_mah
        ok, d = _compare(p, m)
    elif c == "k_hat":
        lo, hi = _window(p, sc)
        m = fitted_k(art, p["device"], lo, hi, float(p["floor"]) if "floor" in p else None)
        ok, d = _compare(p, m)
    elif c == "k_recovery":
        lo, hi = _window(p, sc)
        k = fitted_k(art, p["device"], lo, hi, float(p["floor"]) if "floor" in p else None)
        cfg = sc.materials[sc.node(p["device"]).material_ref].k_cool
        m = abs(k - cfg) / cfg
        tol = float(p.get("rel_tol", 0.1))
        ok, d = m <= tol, f"(k_hat={k:.4f} configured={cfg:g}, want rel err <= {tol:g})"
    elif c == "k_order":
        lo, hi = _window(p, sc)
        floor = float(p["floor"]) if "floor" in p else None
        kf = fitted_k(art, p["faster"], lo, hi, floor)
        ks = fitted_k(art, p["slower"], lo, hi, floor)
        m = kf - ks
        ok, d = kf > ks, f"(k[{p['faster']}]={kf:.4f} > k[{p['slower']}]={ks:.4f})"
    elif c == "overheat_window":
        rep = art.nodes[p["device"]]
        tods = (sc.start_tod + np.asarray(rep.skip_minutes, dtype=float)) % 1440
        inside = _in_daily_window(tods, p["daily_from"], p["daily_to"])
        m = int((~inside).sum())
        need = int(p.get("min_skips", 1))
        ok = m == 0 and len(tods) >= need
        d = f"(skips={len(tods)}, outside window={m}, want 0 outside and >= {need} total)"
    elif c == "overheat_count":
        m = len(art.nodes[p["device"]].skip_minutes)
        ok, d = _compare(p, m)
    elif c == "weather_excess":
        ws = weather_series(sc)
        if ws is None:
            raise ConfigError(f"{e.name}: scenario has no [weather] section")
        pairs = analysis.merge_external(clean_series(art, p["device"]), ws)
        mask = _in_daily_window(sc.local_tod_of_ms(pairs.t_ms), p["daily_from"], p["daily_to"])
        ex = pairs.excess[mask]
        stat = p.get("stat", "mean")
        if stat not in ("min", "max", "mean"):
            raise ConfigError(f"{e.name}: stat must be min, max or mean")
        m = float(getattr(np, stat)(ex)) if len(ex) else math.nan
        ok, d = _compare(p, m)
    else:
        raise ConfigError(f"expectation {e.name!r} (line {e.line}): unknown check {c!r}")
    return CheckResult(e.name, c, bool(ok), m, d)


def verify(art: RunArtifacts, expectations: list[Expectation] | None = None) -> list[CheckResult]:
    """Evaluate named checks against a finished run."""
    check_accounting(art.accounting)
    exps = art.scenario.expectations if expectations is None else expectations
    return [_eval(art, e) for e in exps]


# -- report -----------------------------------------------------------------------

def emit_report(art: RunArtifacts, out_dir: str | Path | None = None) -> list[Path]:
    """Summary CSV for every node plus one SVG plot of the case study."""
    sc = art.scenario
    out = Path(out_dir) if out_dir is not None else art.out_dir / REPORT_DIR
    out.mkdir(parents=True, exist_ok=True)
    total = _count(art)
    rows, series, labels = [], [], []
    a = sc.analysis
    for n in sc.nodes:
        if total == 0:
            break
        rep = art.nodes[n.device_id]
        stored = _count(art, n.device_id) if n.registered else 0
        k_hat = ""
        if n.registered and a.night_from is not None and a.night_to is not None:
            try:
                k_hat = f"{fitted_k(art, n.device_id, a.night_from, a.night_to):.4f}"
            except analysis.AnalysisError:
                k_hat = ""
        rows.append({
            "device_id": n.device_id,
            "material": n.material_ref,
            "readings": stored,
            "losses": rep.emitted - stored,
            "overheat_skips": len(rep.skip_minutes),
            "k_hat": k_hat,
            "battery_consumed_mah": f"{rep.consumed_mah:.3f}",
            "lifetime_h": f"{rep.lifetime_h:.2f}",
        })
        if n.registered and stored:
            series.append(clean_series(art, n.device_id))
            labels.append(f"{n.device_id} ({n.material_ref})")
    files = [analysis.write_summary(out / "summary.csv", rows)]
    if series:
        files.append(analysis.plot_case_study(out / f"{sc.name}.svg", sc.name.replace("_", " "), series, labels,
                                              weather_series(sc), sc.timezone_offset_min))
    art.report_files = files
    return files


# -- replay -----------------------------------------------------------------------

@dataclass
class ReplayResult:
    store_path: Path
    counts: dict


def replay(trace_path: str | Path, registry_path: str | Path, store_path: str | Path,
           window_ms: int | None = None) -> ReplayResult:
    """Push a packet trace through dedup, webhook and store again."""
    registry = DeviceRegistry.from_csv(registry_path)
    store_path = Path(store_path)
    store_path.unlink(missing_ok=True)
    store = Store(store_path)
    for entry in registry.values():
        store.upsert_entity("project", id=entry.project_id, name=entry.project_id)
    for eui, entry in registry.items():
        store.upsert_entity("device", id=entry.device_id, dev_eui=eui.hex().upper(), project_id=entry.project_id)
    server = NetworkServer(registry, store, DEDUP_WINDOW_MS if window_ms is None else window_ms)
    server.process(read_trace(trace_path))
    store.commit()
    store.close()
    return ReplayResult(store_path, dict(server.counts))
