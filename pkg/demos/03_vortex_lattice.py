"""Lift slope and span efficiency of flat rectangular wings.

The lattice lift slope is set beside the Helmbold estimate, and the
induced drag beside the elliptic minimum C_L^2/(pi AR) through the span
efficiency e. With uniform spanwise panels the tip loading is resolved
only to first order: coarse meshes over-predict lift near the tip and
can report e slightly above one, and refining the span brings e down to
its converged value below one. Near-field and Trefftz-plane drag agree
at every resolution, so the excess is discretization, not a drag error.
"""

import numpy as np

from aerostruct.cases import rectangular_lattice
from aerostruct.vlm import FlowConditions, VlmSolver

alpha = np.deg2rad(2.0)
for ar in (4, 8, 20):
    helmbold = 2 * np.pi * ar / (2 + np.sqrt(ar ** 2 + 4))
    print(f"AR {ar} (Helmbold lift slope {helmbold:.4f} /rad)")
    print("  spanwise panels   dCL/da   span efficiency   near-field / Trefftz C_D")
    for ns in (6, 12, 24, 48, 96):
        solver = VlmSolver(rectangular_lattice(4, ns, ar / 2.0, 1.0), FlowConditions(alpha=alpha))
        f = solver.solve_flow()
        e = f.cl ** 2 / (np.pi * ar * f.cd)
        print(f"  {ns:15d}   {f.cl / alpha:6.4f}   {e:15.5f}   {f.cd / solver.trefftz_drag(f.gamma):10.6f}")
