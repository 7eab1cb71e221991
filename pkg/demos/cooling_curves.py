#!/usr/bin/env python3
"""Grass against concrete after a hot afternoon, and what a log-linear fit makes of it."""

import numpy as np

from loratherm.analysis import Series, cooling_fit
from loratherm.scenario import load_fixture
from loratherm.thermal import ambient_at, integrate

sc = load_fixture("concrete_vs_grass")
start = 18 * 60 + 30
hours = 10

for name in ("grass", "concrete"):
    m = sc.materials[name]
    temps = integrate(m, sc.forcing, 28.0, hours * 60, start_tod=start)
    t_ms = np.arange(0, hours * 60 + 1, 2) * 60_000
    series = Series.from_arrays(name, t_ms, np.round(temps[::2], 2))
    k_hat = cooling_fit(series, 60 * 60_000, t_ms[-1] + 1, sc.forcing.floor_c)
    print(f"{name:9s} k={m.k_cool:.2f}/h  fitted={k_hat:.3f}/h  "
          f"22:30 {temps[240]:.1f} C  04:30 {temps[600]:.1f} C")

print(f"ambient at 22:30: {ambient_at(sc.forcing, 22 * 60 + 30):.1f} C")
