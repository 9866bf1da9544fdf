"""Spring-analogy deformation of the lattice and its adjoint.

Every mesh edge is a linear spring of stiffness ``1 / l^2`` (``l`` is the
reference length). Prescribed nodes move with given displacements and the
remaining nodes follow from equilibrium, independently per coordinate.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SpringMesh:
    """Linear spring network with Dirichlet nodes."""

    def __init__(self, nodes, edges, dirichlet):
        self.nodes = np.asarray(nodes, float).reshape(-1, 3)
        self.edges = np.asarray(edges, int).reshape(-1, 2)
        n = len(self.nodes)
        mask = np.zeros(n, bool)
        mask[np.asarray(dirichlet, int)] = True
        self.fixed = np.nonzero(mask)[0]
        self.free = np.nonzero(~mask)[0]
        i, j = self.edges.T
        length2 = np.sum((self.nodes[i] - self.nodes[j]) ** 2, axis=1)
        if np.any(length2 == 0):
            raise ValueError("zero-length mesh edge")
        k = 1.0 / length2
        K = sp.coo_matrix((np.r_[k, k, -k, -k], (np.r_[i, j, i, j], np.r_[i, j, j, i])),
                          shape=(n, n)).tocsc()
        self.K = K
        self.Kff = K[self.free][:, self.free].tocsc()
        self.Kfb = K[self.free][:, self.fixed].tocsc()
        try:
            self._lu = spla.splu(self.Kff) if len(self.free) else None
        except RuntimeError:
            raise ValueError("mesh has free nodes without a path to prescribed nodes") from None
        if self._lu is not None:
            # every free node must be connected to a prescribed one
            probe = self._lu.solve(np.ones(len(self.free)))
            if not np.all(np.isfinite(probe)):
                raise ValueError("mesh has free nodes without a path to prescribed nodes")

    def deform(self, u_fixed):
        """Displacements of all nodes given those of the Dirichlet nodes."""
        u_fixed = np.asarray(u_fixed, float).reshape(len(self.fixed), -1)
        out = np.zeros((len(self.nodes), u_fixed.shape[1]))
        out[self.fixed] = u_fixed
        if self._lu is not None:
            out[self.free] = self._lu.solve(-(self.Kfb @ u_fixed))
        return out

    def adjoint(self, zbar):
        """Transpose of :meth:`deform`: Dirichlet-node adjoint of ``zbar``."""
        zbar = np.asarray(zbar, float).reshape(len(self.nodes), -1)
        out = zbar[self.fixed].copy()
        if self._lu is not None:
            lam = self._lu.solve(zbar[self.free], trans="T")
            out -= self.Kfb.T @ lam
        return out

    def operator(self) -> sp.csr_matrix:
        """Sparse matrix of :meth:`deform` (nodes x Dirichlet nodes)."""
        nf, nb = len(self.fixed), len(self.nodes)
        cols = [sp.csr_matrix((np.ones(nf), (self.fixed, np.arange(nf))), shape=(nb, nf))]
        D = cols[0].tolil()
        if self._lu is not None:
            inner = self._lu.solve(-(self.Kfb.toarray()))
            inner[np.abs(inner) < 1e-15 * max(np.abs(inner).max(), 1e-300)] = 0.0
            D[self.free] = inner
        return D.tocsr()


class LatticeDeformer:
    """Maps surface displacements ``u_tot`` of bound nodes to lattice nodes.

    Bound nodes follow ``u_tot``; the first and last wake rows follow the
    trailing-edge displacement of their column; interior wake rows come
    from the spring network. ``M(u_tot, alpha) = z_ref(alpha) + D u_tot``.
    """

    def __init__(self, vlm):
        self.vlm = vlm
        lat = vlm.lat
        n1 = lat.ns + 1
        nb, R = vlm.nb, vlm.n_rows
        ref = vlm.reference_nodes()
        w0 = nb
        edges = []
        for r in range(R + 1):
            for j in range(n1):
                k = w0 + r * n1 + j
                if j < lat.ns:
                    edges.append((k, k + 1))
                if r < R:
                    edges.append((k, k + n1))
        wake = np.arange(nb, vlm.n_nodes)
        self.mesh = SpringMesh(ref[wake], np.array(edges) - nb,
                               np.r_[np.arange(n1), R * n1 + np.arange(n1)])
        Dw = self.mesh.operator()               # wake nodes x (row 0, row R)
        te = lat.te_indices()
        T = sp.csr_matrix((np.ones(2 * n1), (np.arange(2 * n1), np.r_[te, te])),
                          shape=(2 * n1, nb))
        self.D = sp.vstack([sp.identity(nb, format="csr"), Dw @ T]).tocsr()
        self.DT = self.D.T.tocsr()

    def deform(self, u_tot, alpha=None):
        return self.vlm.reference_nodes(alpha) + self.D @ np.asarray(u_tot).reshape(-1, 3)

    def adjoint(self, zbar):
        """``(dM/du_tot)^T zbar``."""
        return self.DT @ np.asarray(zbar).reshape(-1, 3)

    def adjoint_alpha(self, zbar, alpha) -> float:
        """``(dM/dalpha)^T zbar``."""
        return float(np.sum(self.vlm.wake_direction_derivative(alpha) * zbar))
