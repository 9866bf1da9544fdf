"""Moving a structural deflection onto the aerodynamic surface and back.

The spline carries beam displacements (translations and, through the
rigid links, rotations) to the lattice nodes, and carries lattice forces
back with its transpose, so the work done on either side is the same.
"""

import numpy as np

from aerostruct.cases import desk_wing
from aerostruct.spline import structural_coupling

case = desk_wing()
H = structural_coupling(case.spline, case.structure.n_dof)
print(f"spline: {H.shape[0] // 3} surface nodes from {case.structure.n_nodes} structural nodes, "
      f"{H.nnz} nonzeros")

# a rigid translation of every structural node moves every surface node the same way
u_s = np.zeros(case.structure.n_dof).reshape(-1, 6)
u_s[:, :3] = [0.01, -0.02, 0.05]
u_f = (H @ u_s.reshape(-1)).reshape(-1, 3)
print(f"rigid translation reproduced to {np.abs(u_f - [0.01, -0.02, 0.05]).max():.1e} m")

rng = np.random.default_rng(1)
for _ in range(3):
    u_s = rng.standard_normal(H.shape[1])
    f_f = rng.standard_normal(H.shape[0])
    w_struct = u_s @ (H.T @ f_f)
    w_fluid = (H @ u_s) @ f_f
    print(f"work on structure {w_struct: .15e}   on surface {w_fluid: .15e}")
