"""Shape design through an FFD box: twist, camber and thickness limits.

Raising the trailing-edge control points of the tip section twists the
tip nose-down (washout) and lowering them twists it nose-up. Thinning
the outboard sections leaves the camber surface, and with it the drag,
unchanged, but shows up in the thickness constraints, which are zero at
the baseline because the floors are the baseline thickness-to-chord
ratios.
"""

import numpy as np

from aerostruct.cases import desk_wing
from aerostruct.optimize import evaluate_design

case = desk_wing(nc=6, ns=10, n_beam=10)
box = case.ffd
l1, m1, n1 = box.control_points.shape[:3]
free = box.free_indices
print(f"FFD box {l1} x {m1} x {n1} control points, {len(free)} free vertical coordinates")


def design(select, dz):
    dv = np.zeros(len(free))
    for n, f in enumerate(free):
        i, j, k = f % l1, (f // l1) % m1, f // (l1 * m1)
        dv[n] = dz(i, j, k) if select(i, j, k) else 0.0
    return dv


shapes = {
    "baseline": np.zeros(len(free)),
    "tip washout": design(lambda i, j, k: j == m1 - 1 and i == l1 - 1, lambda i, j, k: 0.02),
    "tip wash-in": design(lambda i, j, k: j == m1 - 1 and i == l1 - 1, lambda i, j, k: -0.02),
    "thinner outboard": design(lambda i, j, k: j >= m1 - 2,
                               lambda i, j, k: -0.003 if k == n1 - 1 else 0.003),
}
for name, dv in shapes.items():
    ev = evaluate_design(case, dv)
    print(f"{name:17s} alpha_trim {np.rad2deg(ev.alpha):7.4f} deg   C_D {ev.cd:.7f}   "
          f"min thickness margin {ev.constraints.min(): .5f}")
