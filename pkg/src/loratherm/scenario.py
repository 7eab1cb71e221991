"""Deployment-plan files.

A scenario is sectioned ``key = value`` text. ``#`` and ``;`` start
comments. Sections that describe list items (``[material]``, ``[gateway]``,
``[node]``, ``[event]``, ``[expect]``, ``[project]``, ``[user]``) may
repeat; the others appear at most once. See ``docs/scenario-format.md``
for every key and its default.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path

from .backhaul import DEDUP_WINDOW_MS, GatewayConfig
from .link import PathEnvironment, PathMode, RadioParams
from .node import BatteryState, NodeConfig, OverheatModel
from .thermal import AmbientForcing, MaterialThermalModel, summer_profile

REPEATED = {"material", "gateway", "node", "event", "expect", "project", "user"}
SINGLE = {"scenario", "forcing", "link", "battery", "overheat", "weather", "analysis"}

FIXTURES = ("concrete_vs_grass", "playground_materials", "redbrick_week_with_weather", "tin_vs_concrete")


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None, source: str = "<scenario>"):
        self.line = line
        self.field = field
        where = source if line is None else f"{source}:{line}"
        what = f"{field}: " if field else ""
        super().__init__(f"{where}: {what}{message}")


@dataclass
class Section:
    name: str
    line: int
    entries: dict[str, tuple[str, int]] = field(default_factory=dict)


_HEADER = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")


def split_sections(text: str, source: str = "<scenario>") -> list[Section]:
    sections: list[Section] = []
    current: Section | None = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = re.split(r"\s[#;]|^[#;]", raw, maxsplit=1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            name = m.group(1).lower()
            if name not in REPEATED | SINGLE:
                raise ScenarioError(f"unknown section [{name}]", n, source=source)
            if name in SINGLE and any(s.name == name for s in sections):
                raise ScenarioError(f"section [{name}] may appear only once", n, source=source)
            current = Section(name, n)
            sections.append(current)
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", n, source=source)
        if current is None:
            raise ScenarioError("key outside of any section", n, source=source)
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.lower()
        if key in current.entries:
            raise ScenarioError("duplicate key", n, key, source)
        current.entries[key] = (value, n)
    return sections


@dataclass(frozen=True)
class LossEvent:
    t_min: float
    node_id: str
    kind: str = "LOSS"


@dataclass(frozen=True)
class Expectation:
    name: str
    check: str
    params: dict
    line: int = 0


@dataclass(frozen=True)
class WeatherConfig:
    station: str = "Weather station"
    cadence_min: float = 30.0
    offset_c: float = 0.0


@dataclass(frozen=True)
class AnalysisConfig:
    night_from: float | None = None  # absolute minutes
    night_to: float | None = None
    ambient_floor_c: float | None = None
    gross_min_c: float = -10.0
    gross_max_c: float = 60.0
    gross_jump_c_per_min: float = 5.0


@dataclass
class Scenario:
    name: str
    start_local: datetime
    timezone_offset_min: int
    duration_h: float
    seed: int
    forcing: AmbientForcing
    materials: dict[str, MaterialThermalModel]
    gateways: list[GatewayConfig]
    nodes: list[NodeConfig]
    radio: RadioParams = field(default_factory=RadioParams)
    environments: dict[PathMode, PathEnvironment] = field(default_factory=dict)
    battery: BatteryState = field(default_factory=BatteryState)
    overheat: OverheatModel = field(default_factory=OverheatModel)
    enclosure_solar_gain: float = 6.0
    dedup_window_ms: int = DEDUP_WINDOW_MS
    events: list[LossEvent] = field(default_factory=list)
    expectations: list[Expectation] = field(default_factory=list)
    weather: WeatherConfig | None = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    projects: dict[str, tuple[str, str]] = field(default_factory=dict)  # id -> (name, owner)
    users: dict[str, str] = field(default_factory=dict)
    source_text: str = ""

    @property
    def duration_min(self) -> int:
        return int(round(self.duration_h * 60))

    @property
    def start_tod(self) -> float:
        return self.start_local.hour * 60 + self.start_local.minute + self.start_local.second / 60

    @property
    def epoch_ms(self) -> int:
        """UTC milliseconds at absolute minute zero."""
        utc = self.start_local - timedelta(minutes=self.timezone_offset_min)
        return int(utc.replace(tzinfo=timezone.utc).timestamp() * 1000)

    def to_ms(self, t_min: float) -> int:
        return self.epoch_ms + int(round(t_min * 60_000))

    def local_to_min(self, local: datetime) -> float:
        return (local - self.start_local).total_seconds() / 60

    def local_tod_of_ms(self, t_ms) -> float:
        """Local minute-of-day of a UTC millisecond timestamp."""
        return ((t_ms / 60_000 + self.timezone_offset_min) % 1440)

    def node(self, node_id: str) -> NodeConfig:
        for n in self.nodes:
            if n.device_id == node_id:
                return n
        raise KeyError(node_id)

    def environment(self, mode: PathMode) -> PathEnvironment:
        return self.environments.get(mode) or PathEnvironment(mode, 3.0 if mode is PathMode.LOS else 4.05)

    def with_nodes(self, nodes) -> "Scenario":
        return replace(self, nodes=list(nodes))


class _Reader:
    """Typed access to one section's entries with line-precise errors."""

    def __init__(self, sec: Section, source: str):
        self.sec = sec
        self.source = source
        self.used: set[str] = set()

    def error(self, key: str, msg: str):
        line = self.sec.entries[key][1] if key in self.sec.entries else self.sec.line
        return ScenarioError(msg, line, f"[{self.sec.name}] {key}", self.source)

    def has(self, key):
        return key in self.sec.entries

    def raw(self, key, default=None, required=False):
        if key in self.sec.entries:
            self.used.add(key)
            return self.sec.entries[key][0]
        if required:
            raise self.error(key, "missing required key")
        return default

    def conv(self, key, fn, default=None, required=False, what="value"):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return fn(v)
        except (ValueError, TypeError) as exc:
            raise self.error(key, f"invalid {what} {v!r} ({exc})") from None

    def str(self, key, default=None, required=False):
        return self.raw(key, default, required)

    def float(self, key, default=None, required=False):
        return self.conv(key, float, default, required, "number")

    def int(self, key, default=None, required=False):
        return self.conv(key, lambda s: int(s, 0), default, required, "integer")

    def bool(self, key, default=None, required=False):
        return self.conv(key, _parse_bool, default, required, "boolean")

    def prefixed(self, prefix):
        out = {}
        for k, (v, line) in self.sec.entries.items():
            if k.startswith(prefix):
                self.used.add(k)
                out[k[len(prefix):]] = (v, line)
        return out

    def finish(self, allowed=None):
        extra = set(self.sec.entries) - self.used
        if allowed is not None:
            extra -= set(allowed)
        if extra:
            key = sorted(extra, key=lambda k: self.sec.entries[k][1])[0]
            raise self.error(key, "unknown key")


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true/false")


def parse_tod(s: str) -> float:
    """``HH:MM`` -> minute of day (``24:00`` allowed as 1440)."""
    h, m = s.strip().split(":")
    val = int(h) * 60 + int(m)
    if not 0 <= val <= 1440:
        raise ValueError("time of day out of range")
    return float(val)


def parse_local(s: str) -> datetime:
    dt = datetime.fromisoformat(s.strip())
    if dt.tzinfo is not None:
        raise ValueError("give local time without a UTC offset")
    return dt


def _parse_knots(s: str):
    knots = []
    for part in s.split(","):
        tod, temp = part.split()
        knots.append((parse_tod(tod), float(temp)))
    return tuple(knots)


def parse_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", source=str(path)) from exc
    return parse_scenario_text(text, str(path))


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    sections = split_sections(text, source)
    by_name: dict[str, list[Section]] = {}
    for s in sections:
        by_name.setdefault(s.name, []).append(s)

    def single(name):
        secs = by_name.get(name)
        return _Reader(secs[0] if secs else Section(name, 0), source)

    sc = single("scenario")
    name = sc.str("name", "scenario")
    start_local = sc.conv("start", parse_local, datetime(2018, 1, 26, 0, 0), what="local datetime")
    tz = sc.int("timezone_offset_min", 480)
    duration_h = sc.float("duration_h", required=True)
    if duration_h < 0:
        raise sc.error("duration_h", "duration must be >= 0")
    seed = sc.int("seed", 1)
    sc.finish()

    fr = single("forcing")
    profile = fr.str("profile", "summer")
    if fr.has("knots"):
        knots = fr.conv("knots", _parse_knots, what="knot list")
    elif profile == "summer":
        knots = summer_profile(
            fr.float("floor_c", 15.0), fr.conv("floor_at", parse_tod, 300.0, what="time"),
            fr.float("peak_c", 36.0), fr.conv("peak_at", parse_tod, 840.0, what="time"),
        )
    else:
        raise fr.error("profile", f"unknown profile {profile!r} (use 'summer' or give knots)")
    try:
        forcing = AmbientForcing(
            knots,
            fr.conv("sunrise", parse_tod, 330.0, what="time"),
            fr.conv("sunset", parse_tod, 1170.0, what="time"),
            fr.float("insolation_peak", 1.0),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), fr.sec.line, "[forcing]", source) from None
    fr.finish()

    materials: dict[str, MaterialThermalModel] = {}
    for sec in by_name.get("material", []):
        r = _Reader(sec, source)
        mname = r.str("name", required=True)
        if mname in materials:
            raise r.error("name", f"duplicate material {mname!r}")
        try:
            materials[mname] = MaterialThermalModel(
                mname, r.float("k_cool", required=True), r.float("solar_gain", required=True),
                r.float("probe_coupling", 1.0),
            )
        except ValueError as exc:
            raise ScenarioError(str(exc), sec.line, f"[material] {mname}", source) from None
        r.finish()

    gateways: list[GatewayConfig] = []
    for sec in by_name.get("gateway", []):
        r = _Reader(sec, source)
        gid = r.str("id", required=True)
        if any(g.gateway_id == gid for g in gateways):
            raise r.error("id", f"duplicate gateway {gid!r}")
        pos = r.conv("position", lambda s: tuple(float(x) for x in s.split(",")), (0.0, 0.0), what="position")
        gateways.append(GatewayConfig(gid, r.str("name", gid), pos))
        r.finish()
    gateway_ids = {g.gateway_id for g in gateways}

    lk = single("link")
    try:
        radio = RadioParams(
            spreading_factor=lk.int("spreading_factor", 7),
            bandwidth=lk.float("bandwidth", 125_000.0),
            coding_rate_index=lk.int("coding_rate", 1),
            preamble_symbols=lk.int("preamble_symbols", 8),
            explicit_header=lk.bool("explicit_header", True),
            crc_on=lk.bool("crc_on", True),
            low_datarate_optimize=lk.bool("low_datarate_optimize", None),
            tx_power_dbm=lk.float("tx_power_dbm", 14.0),
        )
        common = dict(
            reference_loss_db=lk.float("reference_loss_db", 40.0),
            shadowing_sigma_db=lk.float("shadowing_sigma_db", 2.0),
            antenna_bonus_db=lk.float("antenna_bonus_db", 6.0),
        )
        envs = {
            PathMode.LOS: PathEnvironment(PathMode.LOS, lk.float("los_exponent", 3.0), **common),
            PathMode.OBSTRUCTED: PathEnvironment(PathMode.OBSTRUCTED, lk.float("obstructed_exponent", 4.05), **common),
        }
    except ValueError as exc:
        raise ScenarioError(str(exc), lk.sec.line, "[link]", source) from None
    dedup_window = lk.int("dedup_window_ms", DEDUP_WINDOW_MS)
    lk.finish()

    bt = single("battery")
    try:
        battery = BatteryState(
            capacity=bt.float("capacity_mah", 2500.0),
            voltage=bt.float("voltage", 3.7),
            sleep_ma=bt.float("sleep_ma", 11.0),
            active_ma=bt.float("active_ma", 45.0),
            tx_ma=bt.float("tx_ma", 120.0),
            active_seconds=bt.float("active_seconds", 5.0),
            timer_sleep_ma=bt.float("timer_sleep_ma", 0.02),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), bt.sec.line, "[battery]", source) from None
    bt.finish()

    oh = single("overheat")
    overheat = OverheatModel(oh.float("threshold_c", 40.0), oh.float("p_skip", 0.8))
    if not 0 <= overheat.p_skip <= 1:
        raise oh.error("p_skip", "probability must lie in [0, 1]")
    enclosure_gain = oh.float("enclosure_solar_gain", 6.0)
    oh.finish()

    users = {}
    for sec in by_name.get("user", []):
        r = _Reader(sec, source)
        uid = r.str("id", required=True)
        users[uid] = r.str("name", uid)
        r.finish()
    projects = {}
    for sec in by_name.get("project", []):
        r = _Reader(sec, source)
        pid = r.str("id", required=True)
        owner = r.str("owner", None)
        if owner is not None and owner not in users:
            raise r.error("owner", f"unknown user {owner!r}")
        projects[pid] = (r.str("name", pid), owner)
        r.finish()

    nodes: list[NodeConfig] = []
    for i, sec in enumerate(by_name.get("node", [])):
        r = _Reader(sec, source)
        nid = r.str("id", required=True)
        if any(n.device_id == nid for n in nodes):
            raise r.error("id", f"duplicate node id {nid!r}")
        eui = r.conv("dev_eui", bytes.fromhex, bytes.fromhex(f"70B3D57ED0{i + 1:06X}"), what="hex EUI")
        if len(eui) != 8:
            raise r.error("dev_eui", "dev_eui must be 16 hex digits")
        if any(n.dev_eui == eui for n in nodes):
            raise r.error("dev_eui", "dev_eui already used by another node")
        mat = r.str("material", required=True)
        if mat not in materials:
            raise r.error("material", f"unknown material {mat!r}")
        links = {}
        for gid, (val, line) in r.prefixed("gateway.").items():
            if gid not in gateway_ids:
                raise ScenarioError(f"unknown gateway {gid!r}", line, f"[node] gateway.{gid}", source)
            parts = val.split()
            try:
                dist = float(parts[0])
                mode = PathMode(parts[1].upper()) if len(parts) > 1 else PathMode.LOS
                if dist < 1 or len(parts) > 2:
                    raise ValueError
            except (ValueError, IndexError):
                raise ScenarioError(f"expected '<metres> [LOS|OBSTRUCTED]', got {val!r}", line,
                                    f"[node] gateway.{gid}", source) from None
            links[gid] = (dist, mode.value)
        project = r.str("project", "default")
        registered = r.bool("registered", True)
        if registered and projects and project not in projects:
            raise r.error("project", f"unknown project {project!r}")
        try:
            cfg = NodeConfig(
                device_id=nid,
                dev_eui=eui,
                material_ref=mat,
                tx_interval=r.int("tx_interval", 2),
                links=links,
                antenna_raised=r.bool("antenna_raised", False),
                low_power_timer=r.bool("low_power_timer", False),
                enclosure_shaded=r.bool("enclosure_shaded", True),
                initial_surface_c=r.float("initial_surface_c", None),
                project_id=project,
                registered=registered,
                location=r.str("location", ""),
            )
        except ValueError as exc:
            raise ScenarioError(str(exc), sec.line, f"[node] {nid}", source) from None
        r.finish()
        nodes.append(cfg)

    scenario = Scenario(
        name=name, start_local=start_local, timezone_offset_min=tz, duration_h=duration_h, seed=seed,
        forcing=forcing, materials=materials, gateways=gateways, nodes=nodes, radio=radio,
        environments=envs, battery=battery, overheat=overheat, enclosure_solar_gain=enclosure_gain,
        dedup_window_ms=dedup_window, projects=projects, users=users, source_text=text,
    )

    def when(r: _Reader, key: str, hours_key: str | None = None, default=None):
        if hours_key and r.has(hours_key):
            return r.float(hours_key) * 60
        local = r.conv(key, parse_local, None, what="local datetime")
        if local is None:
            return default
        return scenario.local_to_min(local)

    node_ids = {n.device_id for n in nodes}
    for sec in by_name.get("event", []):
        r = _Reader(sec, source)
        nid = r.str("node", required=True)
        if nid not in node_ids:
            raise r.error("node", f"unknown node {nid!r}")
        kind = r.str("kind", "LOSS").upper()
        if kind != "LOSS":
            raise r.error("kind", f"unsupported event kind {kind!r}")
        t = when(r, "at", "at_h")
        if t is None:
            raise r.error("at", "event needs 'at' or 'at_h'")
        scenario.events.append(LossEvent(t, nid, kind))
        r.finish()

    if "weather" in by_name:
        r = single("weather")
        scenario.weather = WeatherConfig(r.str("station", "Weather station"), r.float("cadence_min", 30.0),
                                         r.float("offset_c", 0.0))
        r.finish()

    an = single("analysis")
    scenario.analysis = AnalysisConfig(
        night_from=when(an, "night_from"),
        night_to=when(an, "night_to"),
        ambient_floor_c=an.float("ambient_floor_c", forcing.floor_c),
        gross_min_c=an.float("gross_min_c", -10.0),
        gross_max_c=an.float("gross_max_c", 60.0),
        gross_jump_c_per_min=an.float("gross_jump_c_per_min", 5.0),
    )
    an.finish()

    for sec in by_name.get("expect", []):
        r = _Reader(sec, source)
        ename = r.str("name", required=True)
        check = r.str("check", required=True)
        params = {}
        for k, (v, line) in sec.entries.items():
            if k in ("name", "check"):
                continue
            if k in ("device", "faster", "slower") and v not in node_ids:
                raise ScenarioError(f"unknown node {v!r}", line, f"[expect] {ename}.{k}", source)
            if k in ("from", "to"):
                try:
                    params[k] = scenario.local_to_min(parse_local(v))
                except ValueError as exc:
                    raise ScenarioError(f"invalid local datetime {v!r} ({exc})", line, f"[expect] {ename}.{k}", source) from None
            elif k in ("daily_from", "daily_to"):
                try:
                    params[k] = parse_tod(v)
                except ValueError as exc:
                    raise ScenarioError(f"invalid time of day {v!r} ({exc})", line, f"[expect] {ename}.{k}", source) from None
            else:
                params[k] = v
        scenario.expectations.append(Expectation(ename, check, params, sec.line))

    if not nodes:
        raise ScenarioError("scenario needs at least one [node]", source=source)
    if not gateways:
        raise ScenarioError("scenario needs at least one [gateway]", source=source)
    for n in nodes:
        if not n.links:
            raise ScenarioError(f"node {n.device_id!r} has no gateway.<id> distance", field="[node]", source=source)
    return scenario


def fixture_path(name: str) -> Path:
    """Path of a bundled case-study scenario."""
    if name not in FIXTURES:
        raise KeyError(f"no bundled scenario {name!r}; choose from {', '.join(FIXTURES)}")
    return Path(str(resources.files("loratherm") / "scenarios" / f"{name}.ini"))


def load_fixture(name: str) -> Scenario:
    return parse_scenario(fixture_path(name))
