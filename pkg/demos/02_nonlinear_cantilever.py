"""Large deflection of a cantilever under a dead tip load.

The corotational beam follows the load through ten load steps. The
reference is the inextensible elastica, obtained here by shooting on
theta'' = -k cos(theta) with scipy's ODE integrator.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from aerostruct.beam import BeamSolver, StructuralModel, StructuralSettings

E, G, A, I, J, L, n_el = 70e9, 27e9, 1e-3, 1e-7, 2e-7, 2.0, 40

x = np.linspace(0.0, L, n_el + 1)
model = StructuralModel(np.c_[x, 0 * x, 0 * x], np.c_[np.arange(n_el), np.arange(1, n_el + 1)],
                        np.tile([E, G, A, I, I, J], (n_el, 1)))
model.fixed[0] = True


def elastica(k):
    def shoot(c):
        s = solve_ivp(lambda t, y: [y[1], -k * np.cos(y[0]), np.sin(y[0]), np.cos(y[0])],
                      (0, 1), [0, c, 0, 0], rtol=1e-12, atol=1e-12)
        return s.y[:, -1]
    c = brentq(lambda c: shoot(c)[1], 0.0, k + 1.0, xtol=1e-14)
    _, _, w, u = shoot(c)
    return w, 1.0 - u


solver = BeamSolver(model, StructuralSettings(load_steps=10))
print(" PL^2/EI   w/L beam   w/L elastica   shortening/L beam   elastica")
for k in (0.5, 1.0, 2.0, 4.0):
    f = np.zeros(model.n_dof)
    f[6 * n_el + 2] = k * E * I / L ** 2
    u, info = solver.solve(f)
    w_ref, s_ref = elastica(k)
    print(f"{k:7.1f}   {u[6 * n_el + 2] / L:9.6f}   {w_ref:11.6f}   {-u[6 * n_el] / L:16.6f}"
          f"   {s_ref:9.6f}")
