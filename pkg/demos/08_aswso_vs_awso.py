"""Aerostructural versus aerodynamic-only shape optimization.

Both runs minimize trimmed drag at C_L = 0.3 under thickness floors. The
aerodynamic run sees a quasi-rigid wing (stiffness x 1e9); the
aerostructural run sees the flexible one. Both optima are then flown on
the flexible wing, which is where the comparison matters.

Usage: python3 demos/08_aswso_vs_awso.py [iterations]   (default 6)
"""

import sys
import time

from aerostruct.cases import desk_wing
from aerostruct.optimize import (DriverSettings, OptimizationProblem, compare_flying_shapes,
                                 format_comparison, optimize)

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 6
case = desk_wing()
settings = DriverSettings(max_iter=iterations)
designs = {}
for mode, label in (("flexible", "ASWSO"), ("rigid", "AWSO")):
    t0 = time.perf_counter()
    out = optimize(OptimizationProblem.for_case(case, mode, settings))
    designs[label] = out.dv
    print(f"{label:5s} {len(out.history) - 1} iterations in {time.perf_counter() - t0:.0f} s: "
          f"C_D {out.baseline.cd:.7f} -> {out.final.cd:.7f} ({out.reduction_percent:.2f}% lower)")

rows = compare_flying_shapes(case, designs["ASWSO"], designs["AWSO"], settings)
print("\nflying-shape comparison at C_L = 0.3:")
print(format_comparison(rows))
