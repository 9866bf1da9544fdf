"""Partitioned aero-structural coupling and its lagged coupled adjoint.

Primal unknowns, in the order they are updated by block Gauss-Seidel:
circulations ``w``, lattice nodes ``z``, surface displacements ``u_tot``,
spline displacements ``u_f``, structural displacements ``u_s``,
structural loads ``f_s`` and surface loads ``f_f``. The design enters
as a prescribed surface displacement ``u_design`` added to ``u_f``.

Adjoint variables follow the Lagrangian
``J + wb.(F - w) + zb.(M - z) + utb.(u_tot - u_f - u_design)
 + ufb.(H u_s - u_f) + usb.(S - u_s) + fsb.(H^T f_f - f_s) + ffb.(F_f - f_f)``,
so that ``dJ/du_design = dJ/du_design|explicit - utb``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .beam import BeamSolver
from .fileio import fmt
from .meshdef import LatticeDeformer
from .vlm import VlmSolver


class CouplingError(RuntimeError):
    """A coupled iteration failed to converge."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class CouplerSettings:
    omega: float = 0.7
    tol: float = 1e-8
    max_iter: int = 50
    adj_omega: float | None = None      # defaults to omega
    adj_tol: float = 1e-8
    adj_max_iter: int = 200
    trim_tol: float = 1e-6
    trim_max_iter: int = 30
    raise_on_failure: bool = True


@dataclass
class CoupledState:
    alpha: float
    w: np.ndarray
    z: np.ndarray
    u_tot: np.ndarray
    u_f: np.ndarray
    u_s: np.ndarray
    f_s: np.ndarray
    f_f: np.ndarray
    u_design: np.ndarray
    cl: float = 0.0
    cd: float = 0.0
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    def history_csv(self) -> str:
        return history_csv(self.history)


@dataclass
class AdjointState:
    objective: tuple
    wbar: np.ndarray
    zbar: np.ndarray
    utot_bar: np.ndarray
    uf_bar: np.ndarray
    us_bar: np.ndarray
    fs_bar: np.ndarray
    ff_bar: np.ndarray
    alpha_bar: float = 0.0
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)


HISTORY_COLUMNS = ("iteration", "residual", "C_L", "C_D", "tip_deflection")


def history_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(HISTORY_COLUMNS)
    for r in rows:
        wr.writerow([int(r[0])] + [fmt(v) for v in r[1:]])
    return buf.getvalue()


def parse_history_csv(text: str):
    rd = csv.reader(io.StringIO(text))
    head = next(rd)
    if tuple(head) != HISTORY_COLUMNS:
        raise ValueError(f"unexpected history header {head}")
    return [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in rd]


class AeroStructuralProblem:
    """Coupled static aeroelastic problem on one lattice and structure.

    ``H`` maps structural DOFs to bound-node displacements (``3 nb x ndof``).
    """

    def __init__(self, vlm: VlmSolver, beam: BeamSolver, H, settings: CouplerSettings | None = None):
        self.vlm = vlm
        self.beam = beam
        self.H = H.tocsr()
        self.HT = self.H.T.tocsr()
        self.settings = settings or CouplerSettings()
        self.deformer = LatticeDeformer(vlm)
        nb = vlm.nb
        if self.H.shape != (3 * nb, beam.model.n_dof):
            raise ValueError(f"spline shape {self.H.shape} does not match "
                             f"({3 * nb}, {beam.model.n_dof})")
        m = beam.model
        root = m.coords[m.fixed.any(axis=1)]
        centre = root.mean(axis=0) if len(root) else m.coords[0]
        self.tip_node = int(np.argmax(np.linalg.norm(m.coords - centre, axis=1)))

    @property
    def nb(self):
        return self.vlm.nb

    def tip_deflection(self, u_s) -> float:
        return float(u_s[6 * self.tip_node + 2])

    # ------------------------------------------------------------------
    def solve_primal(self, u_design=None, alpha=None, warm: CoupledState | None = None,
                     settings: CouplerSettings | None = None) -> CoupledState:
        """Block Gauss-Seidel with relaxation of the surface displacements."""
        st = settings or self.settings
        nb = self.nb
        alpha = self.vlm.flow.alpha if alpha is None else float(alpha)
        u_d = np.zeros((nb, 3)) if u_design is None else np.asarray(u_design, float).reshape(nb, 3)
        if warm is not None:
            u_s, f_prev, u_f = warm.u_s.copy(), warm.f_s.copy(), warm.u_f.copy()
        else:
            u_s, f_prev, u_f = None, None, np.zeros((nb, 3))
        # inner Newton an order tighter than the coupling, above the rounding floor
        inner_tol = min(self.beam.settings.newton_tol, max(1e-3 * st.tol, 1e-13))
        history = []
        converged = False
        for it in range(1, st.max_iter + 1):
            u_tot = u_f + u_d
            z = self.deformer.deform(u_tot, alpha)
            sol = self.vlm.solve_flow(z, alpha)
            f_s = self.HT @ sol.forces.reshape(-1)
            steps = None if u_s is None else 1
            u_s, _ = self.beam.solve(f_s, u0=u_s, f0=f_prev, load_steps=steps,
                                     tol=inner_tol)
            f_prev = f_s
            u_new = (self.H @ u_s).reshape(nb, 3)
            dn = np.linalg.norm(u_new - u_f)
            scale = np.linalg.norm(u_new)
            res = dn / scale if scale > 0 else dn
            history.append((it, res, sol.cl, sol.cd, self.tip_deflection(u_s)))
            if res <= st.tol:
                converged = True
                u_f = u_new
                break
            u_f = st.omega * u_new + (1.0 - st.omega) * u_f
        state = CoupledState(alpha, sol.gamma, z, u_f + u_d, u_f, u_s, f_s, sol.forces, u_d,
                             sol.cl, sol.cd, it, converged, history)
        if not converged and st.raise_on_failure:
            raise CouplingError(f"coupled iteration did not converge in {st.max_iter} "
                                f"iterations (residual {res:.3e})", state)
        return state

    def residuals(self, s: CoupledState) -> dict:
        """Norms of the seven fixed-point residuals at a state."""
        nb = self.nb
        w_new, f_f, _, _ = self.vlm.fixed_point(s.w, s.z, s.alpha)
        sfp = self.beam.fixed_point_step(s.u_s, s.f_s)
        return {
            "fluid": float(np.linalg.norm(w_new - s.w)),
            "mesh": float(np.linalg.norm(self.deformer.deform(s.u_tot, s.alpha) - s.z)),
            "surface": float(np.linalg.norm(s.u_tot - s.u_f - s.u_design)),
            "spline": float(np.linalg.norm((self.H @ s.u_s).reshape(nb, 3) - s.u_f)),
            "structure": float(np.linalg.norm(sfp - s.u_s)),
            "load_transfer": float(np.linalg.norm(self.HT @ s.f_f.reshape(-1) - s.f_s)),
            "loads": float(np.linalg.norm(f_f - s.f_f)),
        }

    # ------------------------------------------------------------------
    def solve_adjoint(self, state: CoupledState, objective=(0.0, 1.0),
                      settings: CouplerSettings | None = None,
                      warm: AdjointState | None = None) -> AdjointState:
        """Lagged coupled adjoint for ``J = a_L C_L + a_D C_D``."""
        st = settings or self.settings
        omega = st.omega if st.adj_omega is None else st.adj_omega
        nb = self.nb
        ft = self.vlm.record(state.w, state.z, state.alpha)
        sfp = self.beam.fixed_point(state.u_s, state.f_s)
        ff_bar = np.zeros((nb, 3)) if warm is None else warm.ff_bar.copy()
        us_bar = np.zeros(self.beam.model.n_dof) if warm is None else warm.us_bar.copy()
        wbar = None
        history = []
        converged = False
        for it in range(1, st.adj_max_iter + 1):
            wbar = ft.adjoint_w(ff_bar, objective, wbar)
            zbar, abar = ft.adjoint_z(wbar, ff_bar, objective)
            utot_bar = -self.deformer.adjoint(zbar)
            uf_bar = -utot_bar
            us_bar, fs_bar = sfp.adjoint_step(us_bar, self.HT @ uf_bar.reshape(-1))
            ff_new = (self.H @ fs_bar).reshape(nb, 3)
            dn = np.linalg.norm(ff_new - ff_bar)
            scale = np.linalg.norm(ff_new)
            res = dn / scale if scale > 0 else dn
            history.append((it, res))
            if res <= st.adj_tol:
                ff_bar = ff_new
                converged = True
                break
            ff_bar = omega * ff_new + (1.0 - omega) * ff_bar
        alpha_bar = float(abar) + self.deformer.adjoint_alpha(zbar, state.alpha)
        adj = AdjointState(tuple(objective), wbar, zbar, utot_bar, uf_bar, us_bar, fs_bar, ff_bar,
                           alpha_bar, it, converged, history)
        if not converged and st.raise_on_failure:
            raise CouplingError(f"adjoint iteration did not converge in {st.adj_max_iter} "
                                f"iterations (residual {res:.3e})")
        return adj

    @staticmethod
    def total_gradient(adj: AdjointState):
        """``(dJ/du_design, dJ/dalpha)``; ``J`` has no explicit design dependence."""
        return -adj.utot_bar, adj.alpha_bar

    def gradient(self, state, objective=(0.0, 1.0), **kw):
        return self.total_gradient(self.solve_adjoint(state, objective, **kw))

    def trimmed_gradient(self, state, **kw):
        """Gradient of C_D w.r.t. ``u_design`` with alpha adjusted to hold C_L."""
        gd, ad_ = self.gradient(state, (0.0, 1.0), **kw)
        gl, al_ = self.gradient(state, (1.0, 0.0), **kw)
        lam = ad_ / al_
        return gd - lam * gl, {"dcd_dalpha": ad_, "dcl_dalpha": al_, "multiplier": lam}

    # ------------------------------------------------------------------
    def trim_to_cl(self, target, u_design=None, alpha0=None, warm: CoupledState | None = None,
                   settings: CouplerSettings | None = None, slope=None) -> CoupledState:
        """Secant iteration on alpha until ``|C_L - target| <= trim_tol``."""
        st = settings or self.settings
        a0 = self.vlm.flow.alpha if alpha0 is None else float(alpha0)
        s0 = self.solve_primal(u_design, a0, warm, st)
        r0 = s0.cl - target
        if abs(r0) <= st.trim_tol:
            return s0
        if slope is None:
            ar = self.vlm.lat.span ** 2 / (self.vlm.lat.ref_area * (2 if self.vlm.lat.symmetric else 1))
            slope = 2 * np.pi / (1 + 2 / ar)
        a1 = a0 - r0 / slope
        for _ in range(st.trim_max_iter):
            s1 = self.solve_primal(u_design, a1, s0, st)
            r1 = s1.cl - target
            if abs(r1) <= st.trim_tol:
                return s1
            if r1 == r0:
                break
            a0, a1, r0, s0 = a1, a1 - r1 * (a1 - a0) / (r1 - r0), r1, s1
        raise CouplingError(f"trim to C_L = {target} failed (residual {r1:.3e})", s1)
