"""SQP with a damped BFGS Hessian for smooth inequality-constrained problems.

The problem is ``min f(x)`` subject to ``c(x) >= 0`` and ``lower <= x <= upper``.
Each iteration solves a QP in the step ``d`` with the BFGS matrix and the
linearized constraints, then backtracks on an L1 merit function. Steps
leaving the feasible set (by more than ``constraint_tol``) are also
shortened, so every accepted iterate of a feasible run stays feasible.
When no constraint is active in the QP and the unit step is accepted,
one secant refinement along the step makes the line search exact on
quadratics; with only a light damping threshold on such free steps this
restores (up to roundoff) the finite termination of BFGS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qp import QPInfeasibleError, solve_qp

CONVERGED, MAX_ITERATIONS, EVALUATOR_FAILURE = 0, 2, 3


class EvaluatorError(RuntimeError):
    """An objective or gradient evaluation failed; carries the iterate."""

    def __init__(self, message, iteration, x):
        super().__init__(message)
        self.iteration = iteration
        self.x = np.array(x, float)


class RestorationError(RuntimeError):
    """Linearized constraints stayed inconsistent after restoration steps."""


@dataclass
class SqpSettings:
    max_iter: int = 50
    gradient_tol: float = 1e-6
    constraint_tol: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-6
    damping: float = 0.2            # Powell threshold on steps with active QP rows
    free_damping: float = 1e-2      # on free steps: a light guard that keeps quadratics exact
    max_restoration: int = 3
    restoration_weight: float = 1e3
    secant_refine: bool = True
    secant_band: float = 0.05
    secant_max: float = 100.0


@dataclass
class SqpResult:
    x: np.ndarray
    f: float
    c: np.ndarray
    status: int
    iterations: int
    kkt: float
    multipliers: np.ndarray
    history: list = field(default_factory=list)
    message: str = ""


def _violation(c):
    return float(np.maximum(0.0, -np.asarray(c)).max(initial=0.0))


class _Counted:
    """Wrap the user callables, tagging failures with the iterate."""

    def __init__(self, fun, grad):
        self.fun, self.grad = fun, grad
        self.k = 0

    def f(self, x):
        try:
            f, c = self.fun(x)
        except EvaluatorError:
            raise
        except Exception as exc:
            raise EvaluatorError(f"objective evaluation failed at iteration {self.k}: {exc}",
                                 self.k, x) from exc
        return float(f), np.atleast_1d(np.asarray(c, float))

    def g(self, x):
        try:
            g, J = self.grad(x)
        except EvaluatorError:
            raise
        except Exception as exc:
            raise EvaluatorError(f"gradient evaluation failed at iteration {self.k}: {exc}",
                                 self.k, x) from exc
        g = np.asarray(g, float)
        return g, np.asarray(J, float).reshape(-1, len(g))


def _qp_rows(x, c, J, lower, upper):
    """Rows ``A d >= b`` for the linearized constraints and the box."""
    n = len(x)
    rows = [J, np.eye(n), -np.eye(n)]
    rhs = [-c, lower - x, x - upper]
    keep = [np.ones(len(c), bool), np.isfinite(lower), np.isfinite(upper)]
    A = np.vstack([r[k] for r, k in zip(rows, keep)])
    b = np.concatenate([r[k] for r, k in zip(rhs, keep)])
    return A, b, len(c)


def _restoration_step(B, g, A, b, weight):
    """Elastic QP: constraint slacks penalized linearly and slightly quadratically."""
    n, m = len(g), len(b)
    G = np.zeros((n + m, n + m))
    G[:n, :n] = B
    G[n:, n:] = np.eye(m) * 1e-6 * weight
    gg = np.concatenate([g, np.full(m, weight)])
    Ae = np.block([[A, np.eye(m)], [np.zeros((m, n)), np.eye(m)]])
    be = np.concatenate([b, np.zeros(m)])
    res = solve_qp(G, gg, Ae, be)
    return res.x[:n], res.multipliers[:m]


def minimize(fun, grad, x0, lower=None, upper=None, settings: SqpSettings | None = None,
             callback=None) -> SqpResult:
    """Minimize ``fun`` from ``x0``.

    ``fun(x) -> (f, c)`` and ``grad(x) -> (df/dx, dc/dx)``. ``callback(record)``
    receives one dict per accepted iterate (including the start).
    """
    st = settings or SqpSettings()
    x = np.array(x0, float)
    n = len(x)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    if np.any(x < lower) or np.any(x > upper):
        raise ValueError("initial point outside the bounds")
    ev = _Counted(fun, grad)
    f, c = ev.f(x)
    g, J = ev.g(x)
    B = np.eye(n)
    mu = 0.0
    history = []
    step_norm = 0.0
    restorations = 0
    status, message = MAX_ITERATIONS, "maximum iterations reached"
    kkt = np.inf
    lam = np.zeros(len(c))
    for k in range(st.max_iter + 1):
        ev.k = k
        A, b, nc = _qp_rows(x, c, J, lower, upper)
        try:
            qp = solve_qp(B, g, A, b)
            d, lam_all = qp.x, qp.multipliers
            qp_active = qp.active
            restorations = 0
        except QPInfeasibleError:
            restorations += 1
            if restorations > st.max_restoration:
                raise RestorationError(f"QP infeasible after {st.max_restoration} "
                                       f"restoration steps at iteration {k}")
            d, lam_all = _restoration_step(B, g, A, b, st.restoration_weight)
            qp_active = np.arange(1)
        lam = lam_all[:nc]
        # KKT residual at x with the QP multipliers
        stat = g - A.T @ lam_all
        comp = np.abs(lam_all * (-b))
        kkt = float(max(np.abs(stat).max(initial=0.0), comp.max(initial=0.0)))
        viol = _violation(c)
        rec = {"iteration": k, "f": f, "max_violation": viol, "gradient_norm": float(np.linalg.norm(g)),
               "kkt": kkt, "step_norm": step_norm, "x": x.copy()}
        history.append(rec)
        if callback is not None:
            callback(rec)
        if kkt <= st.gradient_tol and viol <= st.constraint_tol:
            status, message = CONVERGED, "KKT conditions satisfied"
            break
        if k == st.max_iter:
            break
        # merit line search
        mu = max(mu, 1.5 * np.abs(lam).max(initial=0.0) + 1e-12)
        phi0 = f + mu * np.maximum(0.0, -c).sum()
        dphi = g @ d - mu * np.maximum(0.0, -c).sum()
        alpha = 1.0
        while True:
            xt = np.clip(x + alpha * d, lower, upper)
            ft, ct = ev.f(xt)
            phit = ft + mu * np.maximum(0.0, -ct).sum()
            feasible = _violation(ct) <= max(st.constraint_tol, viol)
            if feasible and phit <= phi0 + st.armijo * alpha * min(dphi, 0.0):
                break
            # safeguarded minimizer of the quadratic through phi0, dphi, phit
            curv = phit - phi0 - dphi * alpha
            a_q = -dphi * alpha * alpha / (2.0 * curv) if curv > 0 else st.backtrack * alpha
            alpha = min(max(a_q, 0.1 * alpha), st.backtrack * alpha)
            if alpha < st.min_step:
                break
        if alpha < st.min_step:
            if restorations:
                raise RestorationError(f"restoration step made no progress at iteration {k}; "
                                       f"constraint violation {viol:.3e}")
            message = "line search failed"
            status = CONVERGED if kkt <= 10 * st.gradient_tol and viol <= st.constraint_tol \
                else MAX_ITERATIONS
            break
        gt, Jt = ev.g(xt)
        if st.secant_refine and len(qp_active) == 0:
            # exact step along d when the objective is quadratic; needs no
            # extra gradient near convergence where the unit step is right
            d1 = (gt @ d) * alpha
            d0 = (g @ d) * alpha
            if d0 < 0 and d1 != d0:
                a_s = d0 / (d0 - d1)
                if abs(a_s - 1.0) > st.secant_band and 0.0 < a_s <= st.secant_max:
                    a_s *= alpha
                    xs = np.clip(x + a_s * d, lower, upper)
                    fs, cs = ev.f(xs)
                    if _violation(cs) <= max(st.constraint_tol, viol) and \
                            fs + mu * np.maximum(0.0, -cs).sum() < phit:
                        xt, ft, ct = xs, fs, cs
                        gt, Jt = ev.g(xt)
        s = xt - x
        y = (gt - Jt.T @ lam) - (g - J.T @ lam)
        if k == 0 and s @ y > 0:
            # Rayleigh-quotient scaling of the initial matrix
            B = np.eye(n) * (s @ y) / (s @ s)
        Bs = B @ s
        sBs = s @ Bs
        sy = s @ y
        # Powell damping wherever constraints shape the step; free steps keep
        # a light guard so quadratics still terminate in about n iterations
        damp = st.damping if len(qp_active) else st.free_damping
        if sBs > 0 and np.any(s != 0.0):
            if sy < damp * sBs:
                theta = (1.0 - damp) * sBs / (sBs - sy)
                y = theta * y + (1.0 - theta) * Bs
                sy = s @ y
            B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
            B = 0.5 * (B + B.T)
        step_norm = float(np.linalg.norm(s))
        x, f, c, g, J = xt, ft, ct, gt, Jt
    return SqpResult(x, f, c, status, history[-1]["iteration"], kkt, lam, history, message)
