"""Dense strictly convex QP by the dual active-set method of Goldfarb and Idnani.

Solves

    min 0.5 x^T G x + g^T x   s.t.   A x >= b

for symmetric positive definite ``G``. The method starts from the
unconstrained minimum and adds violated constraints one at a time while
keeping dual feasibility, so it needs no feasible starting point and
detects infeasibility directly. Factorizations are rebuilt whenever the
active set changes; that is cheap at the sizes used here (a few hundred
variables at most).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class QPInfeasibleError(ValueError):
    """The constraint set of the QP is empty."""


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray     # one per row of A, zero for inactive rows
    active: np.ndarray          # indices of the final active set
    objective: float
    iterations: int


def _factor(Linv, A, active):
    """QR of ``L^-1 N`` for the active normals; returns (J, R)."""
    n = Linv.shape[0]
    if len(active) == 0:
        return Linv.T.copy(), np.zeros((0, 0))
    Q, R = np.linalg.qr(Linv @ A[active].T, mode="complete")
    return Linv.T @ Q, R[: len(active)]


def solve_qp(G, g, A=None, b=None, tol=1e-12, max_iter=None) -> QPResult:
    G = np.asarray(G, float)
    g = np.asarray(g, float)
    n = len(g)
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, float))
    b = np.zeros(0) if b is None else np.asarray(b, float)
    m = len(b)
    max_iter = max_iter or 10 * (n + m) + 10
    L = np.linalg.cholesky(G)
    Linv = sla.solve_triangular(L, np.eye(n), lower=True)
    x = -(Linv.T @ (Linv @ g))
    active: list[int] = []
    u = np.zeros(0)
    J, R = _factor(Linv, A, active)
    scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    it = 0
    while True:
        s = A @ x - b
        viol = s / scale
        if m == 0 or viol.min() >= -tol * (1.0 + np.abs(b) / scale).max():
            break
        cand = np.where(np.isin(np.arange(m), active), np.inf, viol)
        p = int(np.argmin(cand))
        if not np.isfinite(cand[p]):
            break
        up = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise RuntimeError(f"QP did not converge in {max_iter} iterations")
            q = len(active)
            d = J.T @ A[p]
            z = J[:, q:] @ d[q:]
            r = sla.solve_triangular(R, d[:q]) if q else np.zeros(0)
            # partial step: largest step keeping the active multipliers >= 0
            t1, l = np.inf, -1
            for j in range(q):
                if r[j] > tol and up[j] / r[j] < t1:
                    t1, l = up[j] / r[j], j
            zn = z @ A[p]
            sp = A[p] @ x - b[p]
            t2 = -sp / zn if np.linalg.norm(z) > tol * np.linalg.norm(A[p]) and zn > 0 else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QPInfeasibleError(f"QP constraints are inconsistent (row {p})")
            if np.isfinite(t2):
                x = x + t * z
            up = up + t * np.append(-r, 1.0)
            if t == t2:
                active.append(p)
                u = up
                J, R = _factor(Linv, A, active)
                break
            # drop the blocking constraint and retry with the same p
            del active[l]
            up = np.delete(up, l)
            J, R = _factor(Linv, A, active)
    lam = np.zeros(m)
    if active:
        lam[active] = u
    return QPResult(x, lam, np.array(active, int), float(0.5 * x @ G @ x + g @ x), it)
