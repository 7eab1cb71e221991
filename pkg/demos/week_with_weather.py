#!/usr/bin/env python3
"""A summer week on red brick: overheating boxes, and how far the surface runs above the airport."""

import sys
from pathlib import Path

import numpy as np

from loratherm import sim
from loratherm.analysis import filter_gross, merge_external
from loratherm.scenario import load_fixture

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/redbrick_week")
sc = load_fixture("redbrick_week_with_weather")
art = sim.run(sc, out)
weather = sim.weather_series(sc)

for n in sc.nodes:
    rep = art.nodes[n.device_id]
    raw = sim.device_series(art, n.device_id)
    clean, dropped = filter_gross(raw, filter_lux=True)
    pairs = merge_external(clean, weather)
    hour = (sc.local_tod_of_ms(pairs.t_ms) // 60).astype(int)
    cells = [f"{pairs.excess[hour == h].mean():+5.1f}" if np.any(hour == h) else "  gap" for h in range(24)]
    print(f"{n.device_id}: {len(raw)} readings, {len(rep.skip_minutes)} skipped, {dropped} gross")
    print("   excess by local hour:", " ".join(cells))
