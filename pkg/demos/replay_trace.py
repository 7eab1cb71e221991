#!/usr/bin/env python3
"""Feed a recorded gateway trace back through dedup and the webhook, then compare stores."""

import sys
import tempfile
from pathlib import Path

from loratherm import sim
from loratherm.scenario import load_fixture
from loratherm.store import Store

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp())
art = sim.run(load_fixture("tin_vs_concrete"), work / "run")
res = sim.replay(art.trace_path, art.out_dir / sim.REGISTRY_FILE, work / "replay.sqlite")
print(", ".join(f"{k}={v}" for k, v in sorted(res.counts.items()) if v))

original = art.open_store()
with Store(res.store_path) as again:
    for dev in original.device_ids():
        a, b = original.query_readings(dev), again.query_readings(dev)
        print(f"{dev}: {len(a)} readings, replay identical: {a == b}")
original.close()
