import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loratherm import sim
from loratherm.scenario import load_fixture
from loratherm.store import (
    CSV_HEADER,
    NotFoundError,
    Reading,
    RefIntegrityError,
    Store,
    StoreError,
    import_csv,
    iso_to_ms,
    ms_to_iso,
)

T0 = iso_to_ms("2018-01-26T00:00:00Z")


@pytest.fixture
def store():
    s = Store()
    s.upsert_entity("user", id="u1", name="intern")
    s.upsert_entity("project", id="p1", name="uhi", owner_user="u1")
    s.upsert_entity("material", id="grass", name="grass", k_cool=0.5, solar_gain=4.0, probe_coupling=1.0)
    s.upsert_entity("device", id="dev-a", dev_eui="70B3D57ED0000001", project_id="p1", material_id="grass")
    yield s
    s.close()


def reading(counter, t, dev="dev-a", temp=20.0):
    return Reading(dev, counter, t, temp, 100, 0, "216", -100.0, 2.5)


class TestEntities:
    def test_device_needs_project(self, store):
        with pytest.raises(RefIntegrityError):
            store.upsert_entity("device", id="x", dev_eui="AA", project_id="missing")

    def test_upsert_by_natural_key(self, store):
        store.upsert_entity("device", id="dev-a", dev_eui="70B3D57ED0000001", project_id="p1", material_id=None)
        assert store.count("device") == 1
        assert store.device_material("dev-a") is None

    def test_unknown_kind_and_fields(self, store):
        with pytest.raises(StoreError):
            store.upsert_entity("sensor", id="s")
        with pytest.raises(StoreError):
            store.upsert_entity("user", id="u2", name="x", email="y")

    def test_bootstrap_counts(self):
        sc = load_fixture("concrete_vs_grass")
        with Store() as s:
            sim.bootstrap_store(s, sc)
            sim.bootstrap_store(s, sc)  # idempotent
            assert s.count("device") == len(sc.nodes) == 2
            assert s.count("material") == len(sc.materials)
            assert s.count("gateway") == len(sc.gateways)
            assert s.count("location") == 2
            assert s.count("reading") == 0


class TestReadings:
    def test_duplicate_counter(self, store):
        assert store.insert_reading(reading(0, T0))
        assert not store.insert_reading(reading(0, T0 + 5))
        assert store.count("reading") == 1

    def test_unknown_device(self, store):
        with pytest.raises(RefIntegrityError):
            store.insert_reading(reading(0, T0, dev="ghost"))

    def test_out_of_order_rejected(self, store):
        store.insert_reading(reading(0, T0 + 1000))
        with pytest.raises(StoreError):
            store.insert_reading(reading(1, T0))
        assert store.count("reading") == 1

    def test_half_open_query(self, store):
        for c in range(10):
            store.insert_reading(reading(c, T0 + 60_000 * c))
        got = store.query_readings("dev-a", T0 + 60_000, T0 + 180_000)
        assert [r.counter for r in got] == [1, 2]
        assert store.query_readings("dev-a", T0, T0) == []

    def test_query_unknown_device(self, store):
        with pytest.raises(NotFoundError):
            store.query_readings("ghost")
        with pytest.raises(KeyError):
            store.query_readings("ghost")

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 10_000), max_size=50, unique=True),
           st.integers(-10, 10_010), st.integers(0, 10_020))
    def test_query_is_exactly_the_window(self, offsets, a, width):
        with Store() as s:
            s.upsert_entity("project", id="p1", name="p1")
            s.upsert_entity("device", id="d", dev_eui="01", project_id="p1")
            for c, off in enumerate(sorted(offsets)):
                s.insert_reading(reading(c, T0 + off, dev="d"))
            got = [r.timestamp_ms - T0 for r in s.query_readings("d", T0 + a, T0 + a + width)]
            assert got == [o for o in sorted(offsets) if a <= o < a + width]


class TestExport:
    def test_empty_is_header_only(self, store):
        buf = io.StringIO()
        assert store.export_csv(buf) == 0
        assert buf.getvalue() == ",".join(CSV_HEADER) + "\n"

    def test_golden_line(self, store):
        store.insert_reading(Reading("dev-a", 0, T0 + 51, 23.4, 40000, 0, "105", -95.5, 7.25))
        buf = io.StringIO()
        store.export_csv(buf)
        line = buf.getvalue().splitlines()[1]
        assert line == "2018-01-26T00:00:00.051Z,dev-a,grass,23.40,40000,0,105,-95.50,7.25"

    def test_file_roundtrip(self, store, tmp_path):
        rows = [reading(c, T0 + 120_000 * c, temp=15 + c / 4) for c in range(25)]
        for r in rows:
            store.insert_reading(r)
        out = tmp_path / "x.csv"
        assert store.export_csv(out, "dev-a") == 25
        back = import_csv(out)
        assert [(r.timestamp_ms, r.temp_c, r.lux, r.rssi) for r in back] == [
            (r.timestamp_ms, r.temp_c, r.lux, r.rssi) for r in rows
        ]

    def test_export_unknown_device(self, store):
        with pytest.raises(NotFoundError):
            store.export_csv(io.StringIO(), "ghost")

    def test_unwritable_target(self, store, tmp_path):
        with pytest.raises(StoreError):
            store.export_csv(tmp_path / "no" / "such" / "dir.csv")


@given(st.integers(0, 4_102_444_800_000))
def test_iso_roundtrip(ms):
    assert iso_to_ms(ms_to_iso(ms)) == ms
