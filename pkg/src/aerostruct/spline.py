"""Interface spline between structural nodes and aerodynamic surface nodes.

Each receiver is interpolated from its nearest donors with compactly
supported radial basis functions (Wendland C2) augmented by a linear
polynomial, solved in the principal frame of the local donor cloud. Rows
of ``H`` therefore sum to one, reproduce affine fields exactly and reduce
to selectors when a receiver coincides with a donor. Forces use ``H^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .fileio import format_matrix_coo


class ConditioningError(ValueError):
    """The local interpolation problem of a receiver is degenerate."""

    def __init__(self, receiver: int, message: str):
        self.receiver = receiver
        super().__init__(f"receiver {receiver}: {message}")


@dataclass
class SplineSettings:
    n_donors: int = 12
    support_factor: float = 1.5
    degree: int = 1
    rank_tol: float = 1e-8
    cond_limit: float = 1e12


def wendland_c2(r):
    r = np.clip(r, 0.0, 1.0)
    return (1.0 - r) ** 4 * (4.0 * r + 1.0)


def _row(donors, x, st: SplineSettings, receiver: int):
    k = len(donors)
    dist = np.linalg.norm(donors - x, axis=1)
    radius = st.support_factor * max(dist.max(), 1e-300)
    centre = donors.mean(axis=0)
    dc = donors - centre
    xc = x - centre
    scale = max(np.abs(dc).max(), 1e-300)
    if st.degree == 0:
        basis = np.zeros((3, 0))
    else:
        _, s, vt = np.linalg.svd(dc / scale, full_matrices=True)
        s = np.r_[s, np.zeros(3 - len(s))]
        keep = s > st.rank_tol * max(s[0], 1e-300)
        off = np.abs(vt[~keep] @ (xc / scale))
        if off.size and off.max() > 1e-9:
            raise ConditioningError(
                receiver, f"donors span {int(keep.sum())} dimension(s) and the receiver "
                          f"lies {off.max() * scale:.3e} off their subspace")
        basis = vt[keep].T
    Pd = np.c_[np.ones(k), dc @ basis / scale]
    px = np.r_[1.0, xc @ basis / scale]
    m = Pd.shape[1]
    Phi = wendland_c2(np.linalg.norm(donors[:, None] - donors[None], axis=-1) / radius)
    A = np.zeros((k + m, k + m))
    A[:k, :k] = Phi
    A[:k, k:] = Pd
    A[k:, :k] = Pd.T
    if np.linalg.cond(A) > st.cond_limit:
        raise ConditioningError(receiver, "local interpolation matrix is ill-conditioned")
    rhs = np.r_[wendland_c2(dist / radius), px]
    return np.linalg.solve(A, rhs)[:k]


class InterfaceSpline:
    """Scalar interpolation matrix ``H`` (receivers x donors)."""

    def __init__(self, donors, receivers, settings: SplineSettings | None = None):
        st = settings or SplineSettings()
        self.settings = st
        self.donors = np.asarray(donors, float).reshape(-1, 3)
        self.receivers = np.asarray(receivers, float).reshape(-1, 3)
        nd = len(self.donors)
        k = min(st.n_donors, nd)
        tree = cKDTree(self.donors)
        _, idx = tree.query(self.receivers, k=k)
        idx = np.asarray(idx).reshape(len(self.receivers), k)
        rows, cols, vals = [], [], []
        for r, (x, nb) in enumerate(zip(self.receivers, idx)):
            nb = np.sort(nb)
            d = np.linalg.norm(self.donors[nb] - x, axis=1)
            hit = np.nonzero(d <= 1e-12 * max(1.0, np.abs(x).max()))[0]
            if len(hit):
                w = np.zeros(k)
                w[hit[0]] = 1.0
            else:
                w = _row(self.donors[nb], x, st, r)
            rows += [r] * k
            cols += list(nb)
            vals += list(w)
        self.H = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.receivers), nd))
        self.H.eliminate_zeros()

    @property
    def shape(self):
        return self.H.shape

    def transfer_displacements(self, u_donor):
        """Receiver displacements ``H u`` for donor data of shape ``(nd, ...)``."""
        return self.H @ np.asarray(u_donor)

    def transfer_forces(self, f_receiver):
        """Donor loads ``H^T f`` (conservative transfer)."""
        return self.H.T @ np.asarray(f_receiver)

    def to_coo(self) -> str:
        return format_matrix_coo(self.H)


def structural_coupling(spline: InterfaceSpline, n_dof: int, donor_nodes=None) -> sp.csr_matrix:
    """Expand ``H`` to map structural DOFs (6 per node) to receiver xyz.

    ``donor_nodes`` gives the structural node index of each donor (defaults
    to donor ``k`` being node ``k``). Only translational DOFs are used.
    """
    H = spline.H.tocoo()
    nodes = np.arange(H.shape[1]) if donor_nodes is None else np.asarray(donor_nodes)
    rows = np.concatenate([3 * H.row + c for c in range(3)])
    cols = np.concatenate([6 * nodes[H.col] + c for c in range(3)])
    vals = np.tile(H.data, 3)
    return sp.csr_matrix((vals, (rows, cols)), shape=(3 * H.shape[0], n_dof))
