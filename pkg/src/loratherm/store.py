"""Application store: devices, projects, users, materials, locations,
gateways and readings in a single SQLite file."""

from __future__ import annotations

import csv
import json
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

CSV_HEADER = ["timestamp", "device_id", "material", "temp_c", "lux", "flags", "gateway_id", "rssi", "snr"]

SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS projects (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    owner_user TEXT REFERENCES users(id)
);
CREATE TABLE IF NOT EXISTS materials (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    k_cool REAL NOT NULL,
    solar_gain REAL NOT NULL,
    probe_coupling REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS locations (
    id TEXT PRIMARY KEY,
    label TEXT NOT NULL,
    surface TEXT,
    distances TEXT
);
CREATE TABLE IF NOT EXISTS gateways (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    x REAL,
    y REAL
);
CREATE TABLE IF NOT EXISTS devices (
    id TEXT PRIMARY KEY,
    dev_eui TEXT NOT NULL UNIQUE,
    project_id TEXT NOT NULL REFERENCES projects(id),
    material_id TEXT REFERENCES materials(id),
    location_id TEXT REFERENCES locations(id)
);
CREATE TABLE IF NOT EXISTS readings (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    device_id TEXT NOT NULL REFERENCES devices(id),
    counter INTEGER NOT NULL,
    ts_ms INTEGER NOT NULL,
    temp_c REAL NOT NULL,
    lux INTEGER NOT NULL,
    flags INTEGER NOT NULL,
    gateway_id TEXT,
    rssi REAL,
    snr REAL,
    UNIQUE (device_id, counter)
);
CREATE INDEX IF NOT EXISTS readings_device_ts ON readings (device_id, ts_ms);
"""

# kind -> (columns, natural key)
ENTITIES = {
    "user": (("id", "name"), "id"),
    "project": (("id", "name", "owner_user"), "id"),
    "material": (("id", "name", "k_cool", "solar_gain", "probe_coupling"), "id"),
    "location": (("id", "label", "surface", "distances"), "id"),
    "gateway": (("id", "name", "x", "y"), "id"),
    "device": (("id", "dev_eui", "project_id", "material_id", "location_id"), "dev_eui"),
}
_TABLES = {"user": "users", "project": "projects", "material": "materials",
           "location": "locations", "gateway": "gateways", "device": "devices"}


class StoreError(Exception):
    pass


class RefIntegrityError(StoreError):
    pass


class NotFoundError(StoreError, KeyError):
    pass


def ms_to_iso(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ms % 1000:03d}Z"


def iso_to_ms(text: str) -> int:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


@dataclass(frozen=True)
class Reading:
    device_id: str
    counter: int
    timestamp_ms: int
    temp_c: float
    lux: int
    flags: int
    gateway_id: str
    rssi: float
    snr: float
    project_id: str = ""


class Store:
    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self.conn = sqlite3.connect(self.path)
        self.conn.execute("PRAGMA foreign_keys = ON")
        self.conn.executescript(SCHEMA)
        self._last_ts: dict[str, int] = {}

    def close(self) -> None:
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.commit()
        self.close()

    def commit(self) -> None:
        self.conn.commit()

    # -- entities ---------------------------------------------------------

    def upsert_entity(self, kind: str, **fields) -> str:
        """Insert or update one entity by its natural key; returns its id."""
        if kind not in ENTITIES:
            raise StoreError(f"unknown entity kind {kind!r}")
        columns, key = ENTITIES[kind]
        table = _TABLES[kind]
        if "distances" in fields and not isinstance(fields["distances"], (str, type(None))):
            fields["distances"] = json.dumps(fields["distances"], sort_keys=True)
        unknown = set(fields) - set(columns)
        if unknown:
            raise StoreError(f"{kind}: unknown fields {sorted(unknown)}")
        row = {c: fields.get(c) for c in columns}
        if row[key] is None:
            raise StoreError(f"{kind}: missing key field {key!r}")
        cols = ", ".join(columns)
        marks = ", ".join("?" for _ in columns)
        updates = ", ".join(f"{c} = excluded.{c}" for c in columns if c != key)
        sql = f"INSERT INTO {table} ({cols}) VALUES ({marks}) ON CONFLICT({key}) DO UPDATE SET {updates}"
        try:
            self.conn.execute(sql, [row[c] for c in columns])
        except sqlite3.IntegrityError as exc:
            raise RefIntegrityError(f"{kind} {row[key]!r}: {exc}") from exc
        if key == "id":
            return row["id"]
        (ident,) = self.conn.execute(f"SELECT id FROM {table} WHERE {key} = ?", (row[key],)).fetchone()
        return ident

    def count(self, kind: str) -> int:
        table = "readings" if kind == "reading" else _TABLES[kind]
        return self.conn.execute(f"SELECT COUNT(*) FROM {table}").fetchone()[0]

    def device_material(self, device_id: str) -> str | None:
        row = self.conn.execute("SELECT material_id FROM devices WHERE id = ?", (device_id,)).fetchone()
        if row is None:
            raise NotFoundError(device_id)
        return row[0]

    def device_ids(self) -> list[str]:
        return [r[0] for r in self.conn.execute("SELECT id FROM devices ORDER BY id")]

    # -- readings ---------------------------------------------------------

    def insert_reading(self, r: Reading) -> bool:
        """Store ``r`` once per (device_id, counter). Returns False for a duplicate."""
        if self.conn.execute("SELECT 1 FROM devices WHERE id = ?", (r.device_id,)).fetchone() is None:
            raise RefIntegrityError(f"reading for unknown device {r.device_id!r}")
        last = self._last_ts.get(r.device_id)
        if last is None:
            row = self.conn.execute("SELECT MAX(ts_ms) FROM readings WHERE device_id = ?", (r.device_id,)).fetchone()
            last = row[0]
        cur = self.conn.execute(
            "INSERT OR IGNORE INTO readings (device_id, counter, ts_ms, temp_c, lux, flags, gateway_id, rssi, snr)"
            " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
            (r.device_id, r.counter, r.timestamp_ms, r.temp_c, r.lux, r.flags, r.gateway_id, r.rssi, r.snr),
        )
        if cur.rowcount == 0:
            return False
        if last is not None and r.timestamp_ms < last:
            self.conn.execute("DELETE FROM readings WHERE id = ?", (cur.lastrowid,))
            raise StoreError(f"{r.device_id}: timestamp {r.timestamp_ms} precedes stored {last}")
        self._last_ts[r.device_id] = r.timestamp_ms
        return True

    def query_readings(self, device_id: str, t0: int | None = None, t1: int | None = None) -> list[Reading]:
        """Readings of one device with ``t0 <= ts < t1``, ascending."""
        if self.conn.execute("SELECT 1 FROM devices WHERE id = ?", (device_id,)).fetchone() is None:
            raise NotFoundError(device_id)
        t0 = -(2**62) if t0 is None else t0
        t1 = 2**62 if t1 is None else t1
        if t0 > t1:
            raise ValueError("t0 must not exceed t1")
        rows = self.conn.execute(
            "SELECT device_id, counter, ts_ms, temp_c, lux, flags, gateway_id, rssi, snr FROM readings"
            " WHERE device_id = ? AND ts_ms >= ? AND ts_ms < ? ORDER BY ts_ms, counter",
            (device_id, t0, t1),
        )
        return [Reading(*row) for row in rows]

    def _export_rows(self, device_id=None, t0=None, t1=None):
        sql = (
            "SELECT r.ts_ms, r.device_id, d.material_id, r.temp_c, r.lux, r.flags, r.gateway_id, r.rssi, r.snr"
            " FROM readings r JOIN devices d ON d.id = r.device_id WHERE 1 = 1"
        )
        args: list = []
        if device_id is not None:
            if self.conn.execute("SELECT 1 FROM devices WHERE id = ?", (device_id,)).fetchone() is None:
                raise NotFoundError(device_id)
            sql += " AND r.device_id = ?"
            args.append(device_id)
        if t0 is not None:
            sql += " AND r.ts_ms >= ?"
            args.append(t0)
        if t1 is not None:
            sql += " AND r.ts_ms < ?"
            args.append(t1)
        sql += " ORDER BY r.ts_ms, r.device_id, r.counter"
        return self.conn.execute(sql, args)

    def export_csv(self, out, device_id: str | None = None, t0: int | None = None, t1: int | None = None) -> int:
        """Write readings as CSV to a path or open text file; returns row count."""
        if hasattr(out, "write"):
            return _write_csv(out, self._export_rows(device_id, t0, t1))
        path = Path(out)
        try:
            with open(path, "w", newline="") as fh:
                return _write_csv(fh, self._export_rows(device_id, t0, t1))
        except OSError as exc:
            raise StoreError(f"cannot write {path}: {exc}") from exc


def _write_csv(fh, rows) -> int:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    n = 0
    for ts, dev, mat, temp, lux, flags, gw, rssi, snr in rows:
        w.writerow([ms_to_iso(ts), dev, mat or "", f"{temp:.2f}", lux, flags, gw, f"{rssi:.2f}", f"{snr:.2f}"])
        n += 1
    return n


def import_csv(path: str | Path) -> list[Reading]:
    """Parse an exported CSV back into readings (counter is not exported and is set to -1)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise StoreError(f"{path}: unexpected header {header}")
        for row in reader:
            ts, dev, _mat, temp, lux, flags, gw, rssi, snr = row
            out.append(Reading(dev, -1, iso_to_ms(ts), float(temp), int(lux), int(flags), gw, float(rssi), float(snr)))
    return out
