#!/usr/bin/env python3
"""Run the overnight grass and concrete deployment end to end and write its report."""

import sys
from pathlib import Path

from loratherm import sim
from loratherm.scenario import load_fixture

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/concrete_vs_grass")
art = sim.run(load_fixture("concrete_vs_grass"), out)

print("copies per sink:", {k: v for k, v in art.accounting.items() if v})
for r in sim.verify(art):
    print(r.line())
for path in sim.emit_report(art):
    print("wrote", path)
