"""Nonlinear static solution of the beam model and its fixed-point adjoint."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..autodiff import ops as ad
from ..autodiff import record, vjp
from .energy import beam_energy, rigid_energy
from .model import StructuralModel, StructuralSettings

_CSTEP = 1e-30


class NonConvergenceError(RuntimeError):
    """Newton iterations failed; ``u`` holds the last iterate."""

    def __init__(self, message, u, history):
        super().__init__(message)
        self.u = u
        self.history = history


@dataclass
class SolveInfo:
    iterations: int = 0
    residuals: list = field(default_factory=list)


def _energy_grad(fn, qe, *args):
    """Element gradients of a per-element energy (one reverse sweep)."""
    if len(qe) == 0:
        return np.zeros_like(qe)
    tape, E = record(lambda q: fn(q, *args), qe)
    return vjp(tape, np.ones(E.shape))


def _energy_grad_hess(fn, qe, *args):
    """Element gradients and exact Hessians by complex-step through the sweep.

    All twelve perturbation directions are carried in a leading batch axis,
    so one recording gives the full element matrices.
    """
    n = qe.shape[-1]
    if len(qe) == 0:
        return np.zeros_like(qe), np.zeros((0, n, n))
    qc = qe[None] + 1j * _CSTEP * np.eye(n)[:, None, :]
    g = _energy_grad(fn, qc, *args)
    return g[0].real.copy(), np.moveaxis(g.imag, 0, -1) / _CSTEP


class BeamSolver:
    """Residual, tangent and Newton solution for a :class:`StructuralModel`."""

    def __init__(self, model: StructuralModel, settings: StructuralSettings | None = None):
        self.model = model
        self.settings = settings or StructuralSettings()
        m = model
        # penalty stiffness from the linear beam stiffness at the jig shape
        if len(m.beams):
            _, Ke = _energy_grad_hess(beam_energy, np.zeros((len(m.beams), 12)),
                                      m.dX, m.L0, m.frame, m.kbeam)
            d = np.diagonal(Ke, axis1=1, axis2=2)
            kt = np.max(d[:, [0, 1, 2, 6, 7, 8]])
            kr = np.max(d[:, [3, 4, 5, 9, 10, 11]])
        else:
            kt = kr = 1.0
        self.set_penalty(self.settings.penalty_factor, kt, kr)

    def set_penalty(self, factor, kt=None, kr=None):
        if kt is not None:
            self._kt0, self._kr0 = kt, kr
        self.k_trans = factor * self._kt0
        self.k_rot = factor * self._kr0

    # ------------------------------------------------------------------
    def _element_q(self, u, dofs):
        return np.asarray(u)[dofs]

    def internal_force(self, u) -> np.ndarray:
        m = self.model
        f = np.zeros(m.n_dof)
        ge = _energy_grad(beam_energy, self._element_q(u, m.edofs), m.dX, m.L0, m.frame, m.kbeam)
        np.add.at(f, m.edofs, ge)
        if len(m.rigid):
            gr = _energy_grad(rigid_energy, self._element_q(u, m.rdofs), m.r0,
                              self.k_trans, self.k_rot)
            np.add.at(f, m.rdofs, gr)
        return f

    def force_and_tangent(self, u):
        """Internal force and full (unconstrained) tangent stiffness."""
        m = self.model
        n = m.n_dof
        f = np.zeros(n)
        K = np.zeros((n, n))
        blocks = [(beam_energy, m.edofs, (m.dX, m.L0, m.frame, m.kbeam))]
        if len(m.rigid):
            blocks.append((rigid_energy, m.rdofs, (m.r0, self.k_trans, self.k_rot)))
        for fn, dofs, args in blocks:
            ge, Ke = _energy_grad_hess(fn, self._element_q(u, dofs), *args)
            np.add.at(f, dofs, ge)
            np.add.at(K, (dofs[:, :, None], dofs[:, None, :]), Ke)
        return f, K

    def tangent(self, u) -> np.ndarray:
        return self.force_and_tangent(u)[1]

    def residual(self, u, f_s) -> np.ndarray:
        """Out-of-balance force ``f_s - f_int(u)``, zero at clamped DOFs."""
        r = np.asarray(f_s, float) - self.internal_force(u)
        r[self.model.fixed.reshape(-1)] = 0.0
        return r

    # ------------------------------------------------------------------
    def solve(self, f_s, u0=None, f0=None, load_steps=None, tol=None, max_iter=None):
        """Newton-Raphson with load stepping from ``(u0, f0)`` to ``f_s``.

        Returns ``(u, info)``. Convergence is declared when the free residual
        drops below ``tol`` times the load norm, or when a Newton correction
        is below ``tol`` times the displacement norm, or when an already small
        residual stops contracting (rounding floor).
        """
        st = self.settings
        tol = st.newton_tol if tol is None else tol
        max_iter = st.max_newton if max_iter is None else max_iter
        nsteps = st.load_steps if load_steps is None else load_steps
        free = self.model.free
        f_s = np.asarray(f_s, float)
        u = np.zeros(self.model.n_dof) if u0 is None else np.array(u0, float)
        u[~free] = 0.0
        f0 = np.zeros_like(f_s) if f0 is None else np.asarray(f0, float)
        info = SolveInfo()
        for k in range(1, nsteps + 1):
            fk = f0 + (f_s - f0) * (k / nsteps)
            ref = max(np.linalg.norm(fk[free]), 1e-300)
            for it in range(max_iter + 1):
                r = (fk - self.internal_force(u))[free]
                rn = np.linalg.norm(r)
                info.residuals.append(rn)
                if rn <= tol * ref or rn == 0.0:
                    break
                # quadratic convergence lost near the rounding floor
                if it > 0 and rn <= 1e-6 * ref and rn > 0.25 * info.residuals[-2]:
                    break
                if it == max_iter or not np.isfinite(rn):
                    raise NonConvergenceError(
                        f"Newton did not converge in load step {k} (residual {rn:.3e})",
                        u, info.residuals)
                K = self.tangent(u)[np.ix_(free, free)]
                du = sla.solve(K, r, assume_a="sym", check_finite=False)
                u[free] += du
                info.iterations += 1
                if np.linalg.norm(du) <= tol * max(np.linalg.norm(u[free]), 1e-300):
                    break
        return u, info

    # ------------------------------------------------------------------
    def fixed_point(self, u_star, f_star) -> "StructuralFixedPoint":
        return StructuralFixedPoint(self, u_star, f_star)

    def fixed_point_step(self, u, f_s, K=None):
        """One application of S: ``u + K^-1 (f_s - f_int(u))`` on free DOFs."""
        free = self.model.free
        if K is None:
            K = self.tangent(u)
        r = self.residual(u, f_s)[free]
        out = np.array(u, float)
        out[free] += sla.solve(K[np.ix_(free, free)], r, assume_a="sym", check_finite=False)
        out[~free] = 0.0
        return out


class StructuralFixedPoint:
    """S(u, f) recorded at a converged state with the tangent frozen there.

    The internal-force node carries the exact tangent at the recorded
    point; the stiffness used to scale the residual is treated as a
    constant, as in a modified-Newton fixed point.
    """

    def __init__(self, solver: BeamSolver, u_star, f_star):
        self.solver = solver
        m = solver.model
        u_star = np.asarray(u_star, float)
        f_int, K = solver.force_and_tangent(u_star)
        self.K = K
        fixed = m.fixed.reshape(-1)
        mask = (~fixed).astype(float)
        Kt = K.copy()
        Kt[fixed, :] = 0.0
        Kt[:, fixed] = 0.0
        Kt[fixed, fixed] = 1.0
        self.lu = sla.lu_factor(Kt, check_finite=False)
        lu = self.lu

        def S(u, f):
            fi = ad.primitive((u,), solver.internal_force(ad.value_of(u)),
                              (lambda g: K.T @ g,), "internal_force")
            r = (f - fi) * mask
            du = ad.primitive((r,), sla.lu_solve(lu, ad.value_of(r), check_finite=False),
                              (lambda g: sla.lu_solve(lu, g, trans=1, check_finite=False),),
                              "frozen_solve")
            return (u + du) * mask

        self.tape, self.value = record(S, u_star, np.asarray(f_star, float))

    def vjp(self, ubar):
        """Return ``((dS/du)^T ubar, (dS/df)^T ubar)``."""
        return vjp(self.tape, ubar)

    def adjoint_step(self, ubar, rhs):
        """``ubar <- rhs + (dS/du)^T ubar`` followed by ``fbar = (dS/df)^T ubar``.

        With the tangent frozen at the converged point ``dS/du`` vanishes on
        the free DOFs, so the product is skipped: evaluating it through the
        tape gives ``ubar - K^T K^-T ubar``, whose rounding error scales with
        cond(K) and puts a floor under the coupled adjoint. Constrained
        entries of ``ubar`` never reach ``fbar`` because S masks them.
        """
        new = np.asarray(rhs, float).copy()
        _, fbar = self.vjp(new)
        return new, fbar
