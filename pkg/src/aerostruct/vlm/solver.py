"""Vortex-lattice flow solution, loads and the fluid fixed point.

Unknowns are ring circulations ``w`` (one per panel, chordwise-major).
Geometry enters through ``z``, the stacked bound nodes followed by the
wake rows. Ring leading segments sit at the panel quarter chord and
collocation points at the three-quarter chord; the last ring row closes
at the trailing edge, where the wake rings start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..autodiff import ops as ad
from ..autodiff import record, vjp
from . import kernels
from .lattice import FlowConditions, VortexLattice, build_wake, wake_stations


@dataclass
class FlowSolution:
    gamma: np.ndarray
    forces: np.ndarray        # (n_bound, 3) loads on bound nodes
    cl: float
    cd: float
    alpha: float


def _biot_normalwash(A, B, P, N, sym, core2):
    Av, Bv, Pv, Nv = (np.ascontiguousarray(ad.value_of(x), dtype=float) for x in (A, B, P, N))
    M = kernels.normalwash(Av, Bv, Pv, Nv, sym, core2)
    return ad.joint_primitive(
        (A, B, P, N), M,
        lambda g: kernels.normalwash_vjp(Av, Bv, Pv, Nv, sym, core2, np.ascontiguousarray(g)),
        "biot_savart_normalwash")


def _biot_induced(A, B, P, G, sym, core2):
    Av, Bv, Pv, Gv = (np.ascontiguousarray(ad.value_of(x), dtype=float) for x in (A, B, P, G))
    V = kernels.induced(Av, Bv, Pv, Gv, sym, core2)
    cache = {}

    def geo(k):
        def fn(g):
            if cache.get("g") is not g:
                cache["g"] = g
                cache["r"] = kernels.induced_vjp_geometry(Av, Bv, Pv, Gv, sym, core2,
                                                          np.ascontiguousarray(g))
            return cache["r"][k]
        return fn

    def strength(g):
        return kernels.induced_vjp_strength(Av, Bv, Pv, sym, core2, np.ascontiguousarray(g))

    return ad.primitive((A, B, P, G), V, (geo(0), geo(1), geo(2), strength),
                        "biot_savart_induced")


class VlmSolver:
    """Steady vortex-lattice solver for one lattice and flow condition."""

    def __init__(self, lattice: VortexLattice, flow: FlowConditions | None = None):
        self.lat = lattice
        self.flow = flow or FlowConditions()
        self.stations = wake_stations(self.flow, lattice.ref_chord, lattice.nc, lattice.span)
        self.n_rows = len(self.stations) - 1
        nc, ns = lattice.nc, lattice.ns
        n1 = ns + 1
        self.nb = lattice.n_bound
        self.n_nodes = self.nb + (self.n_rows + 1) * n1
        self.core2 = (self.flow.core_factor * lattice.ref_chord) ** 2
        self._segments(nc, ns, self.n_rows, lattice.symmetric)

    # ------------------------------------------------------------------
    def _segments(self, nc, ns, R, sym):
        n1 = ns + 1
        nq = (nc + 1) * n1

        def q(i, j):
            return i * n1 + j

        def wk(r, j):
            return q(nc, j) if r == 0 else nq + (r - 1) * n1 + j

        def pan(i, j):
            return i * ns + j

        a, b, rows, cols, vals = [], [], [], [], []

        def seg(ia, ib, coef):
            s = len(a)
            a.append(ia)
            b.append(ib)
            for p, c in coef:
                rows.append(s)
                cols.append(p)
                vals.append(c)

        for i in range(nc):                       # bound spanwise
            for j in range(ns):
                coef = [(pan(i, j), 1.0)] + ([(pan(i - 1, j), -1.0)] if i > 0 else [])
                seg(q(i, j), q(i, j + 1), coef)
        for i in range(nc):                       # bound chordwise
            for j in range(n1):
                coef = []
                if not (sym and j == 0):
                    coef = ([(pan(i, j - 1), 1.0)] if j > 0 else []) + \
                           ([(pan(i, j), -1.0)] if j < ns else [])
                seg(q(i, j), q(i + 1, j), coef)
        self.n_force_seg = len(a)
        for r in range(R):                        # trailing wake lines
            for j in range(n1):
                coef = []
                if not (sym and j == 0):
                    coef = ([(pan(nc - 1, j - 1), 1.0)] if j > 0 else []) + \
                           ([(pan(nc - 1, j), -1.0)] if j < ns else [])
                seg(wk(r, j), wk(r + 1, j), coef)
        for j in range(ns):                       # far end of the wake rings
            seg(wk(R, j), wk(R, j + 1), [(pan(nc - 1, j), -1.0)])

        self.seg_a = np.array(a)
        self.seg_b = np.array(b)
        n_seg = len(a)
        self.C = sp.csr_matrix((vals, (rows, cols)), shape=(n_seg, nc * ns))
        self.CT = self.C.T.tocsr()
        # loads: half of each segment force to its ring corners, then to nodes
        nf = self.n_force_seg
        Gq = sp.csr_matrix((np.full(2 * nf, 0.5),
                            (np.r_[self.seg_a[:nf], self.seg_b[:nf]], np.r_[np.arange(nf), np.arange(nf)])),
                           shape=(nq, nf))
        rq, cq, vq = [], [], []
        for i in range(nc + 1):
            for j in range(n1):
                if i < nc:
                    rq += [q(i, j), q(i, j)]
                    cq += [q(i, j), q(i + 1, j)]
                    vq += [0.75, 0.25]
                else:
                    rq.append(q(i, j))
                    cq.append(q(i, j))
                    vq.append(1.0)
        self.Qmap = sp.csr_matrix((vq, (rq, cq)), shape=(nq, nq))
        self.G = (self.Qmap.T @ Gq).tocsr()

    # ------------------------------------------------------------------
    def reference_nodes(self, alpha=None, bound=None) -> np.ndarray:
        """Stacked bound and wake nodes for a straight wake at ``alpha``."""
        alpha = self.flow.alpha if alpha is None else alpha
        P = self.lat.nodes if bound is None else np.asarray(bound).reshape(self.lat.nodes.shape)
        W = build_wake(P[-1], alpha, self.stations)
        return np.concatenate([P.reshape(-1, 3), W.reshape(-1, 3)])

    def wake_direction_derivative(self, alpha) -> np.ndarray:
        """d z_ref / d alpha (zero on bound nodes)."""
        d = np.array([-np.sin(alpha), 0.0, np.cos(alpha)])
        out = np.zeros((self.n_nodes, 3))
        out[self.nb:] = np.repeat(self.stations, self.lat.ns + 1)[:, None] * d
        return out

    # ------------------------------------------------------------------
    def _geometry(self, z, alpha):
        lat, flow = self.lat, self.flow
        nc, ns = lat.nc, lat.ns
        n1 = ns + 1
        nb = self.nb
        Pg = ad.reshape(z[:nb], (nc + 1, n1, 3))
        Q = ad.concatenate([0.75 * Pg[:nc] + 0.25 * Pg[1:], Pg[nc:]], axis=0)
        V = ad.concatenate([ad.reshape(Q, ((nc + 1) * n1, 3)), z[nb + n1:]], axis=0)
        A = ad.take(V, self.seg_a)
        B = ad.take(V, self.seg_b)
        le = 0.5 * (Pg[:-1, :-1] + Pg[:-1, 1:])
        te = 0.5 * (Pg[1:, :-1] + Pg[1:, 1:])
        cp = ad.reshape(0.25 * le + 0.75 * te, (nc * ns, 3))
        nv = ad.cross(Pg[1:, 1:] - Pg[:-1, :-1], Pg[:-1, 1:] - Pg[1:, :-1])
        nrm = ad.reshape(nv / ad.norm(nv)[..., None], (nc * ns, 3))
        ca, sa = ad.cos(alpha), ad.sin(alpha)
        vinf = flow.speed * ad.stack([ca, 0.0 * ca, sa])
        return A, B, cp, nrm, vinf, ca, sa

    def _aic_rhs(self, A, B, cp, nrm, vinf):
        M = _biot_normalwash(A, B, cp, nrm, self.lat.symmetric, self.core2)
        aic = ad.transpose(ad.linear_map(self.CT, ad.transpose(M), MT=self.C))
        rhs = -(nrm @ vinf)
        return aic, rhs

    def _loads(self, w, A, B, vinf, ca, sa):
        flow = self.flow
        nf = self.n_force_seg
        gam = ad.linear_map(self.C, w, MT=self.CT)
        Af, Bf = A[:nf], B[:nf]
        mid = 0.5 * (Af + Bf)
        vind = _biot_induced(A, B, mid, gam, self.lat.symmetric, self.core2)
        scale = flow.density * flow.compressibility
        F = scale * gam[:nf][:, None] * ad.cross(vinf + vind, Bf - Af)
        f_f = ad.linear_map(self.G, F, MT=self.G.T.tocsr())
        Ft = ad.sum(F, axis=0)
        qS = 0.5 * flow.density * flow.speed ** 2 * self.lat.ref_area
        cl = (-sa * Ft[0] + ca * Ft[2]) / qS
        cd = (ca * Ft[0] + sa * Ft[2]) / qS
        return f_f, cl, cd

    def assemble_aic(self, z=None, alpha=None):
        """Influence matrix and right-hand side for nodes ``z``."""
        alpha = self.flow.alpha if alpha is None else alpha
        z = self.reference_nodes(alpha) if z is None else np.asarray(z, float)
        A, B, cp, nrm, vinf, _, _ = self._geometry(z, alpha)
        return self._aic_rhs(A, B, cp, nrm, vinf)

    def fixed_point(self, w, z, alpha):
        """Outputs of the fluid fixed point ``(w_new, f_f, C_L, C_D)``.

        ``w_new = w + theta (AIC^-1 rhs - w)``; loads are evaluated with the
        incoming circulations ``w``. Works on plain arrays or tape values.
        """
        A, B, cp, nrm, vinf, ca, sa = self._geometry(z, alpha)
        aic, rhs = self._aic_rhs(A, B, cp, nrm, vinf)
        x = ad.solve(aic, rhs)
        w_new = w + self.flow.relaxation * (x - w)
        f_f, cl, cd = self._loads(w, A, B, vinf, ca, sa)
        return w_new, f_f, cl, cd

    def fluid_fixed_point_step(self, w, z, alpha=None):
        alpha = self.flow.alpha if alpha is None else alpha
        return self.fixed_point(np.asarray(w, float), np.asarray(z, float), alpha)[0]

    def solve_flow(self, z=None, alpha=None) -> FlowSolution:
        """Exact circulation for geometry ``z`` and the resulting loads."""
        alpha = self.flow.alpha if alpha is None else alpha
        z = self.reference_nodes(alpha) if z is None else np.asarray(z, float)
        A, B, cp, nrm, vinf, ca, sa = self._geometry(z, alpha)
        aic, rhs = self._aic_rhs(A, B, cp, nrm, vinf)
        w = np.linalg.solve(aic, rhs)
        f_f, cl, cd = self._loads(w, A, B, vinf, ca, sa)
        return FlowSolution(w, f_f, float(cl), float(cd), alpha)

    def record(self, w, z, alpha) -> "FluidTape":
        return FluidTape(self, w, z, alpha)

    # ------------------------------------------------------------------
    def trefftz_drag(self, gamma, z=None, alpha=None) -> float:
        """Induced drag coefficient from the trailing vorticity in the far field."""
        alpha = self.flow.alpha if alpha is None else alpha
        z = self.reference_nodes(alpha) if z is None else np.asarray(z)
        lat, flow = self.lat, self.flow
        te = z[lat.te_indices()]
        en = np.array([-np.sin(alpha), 0.0, np.cos(alpha)])
        y, h = te[:, 1], te @ en
        g_te = np.asarray(gamma).reshape(lat.nc, lat.ns)[-1]
        left = np.r_[g_te[0] if lat.symmetric else 0.0, g_te]
        right = np.r_[g_te, 0.0]
        strength = left - right
        vy, vh, vs = y, h, strength
        if lat.symmetric:
            vy, vh, vs = np.r_[y, -y], np.r_[h, h], np.r_[strength, -strength]
        my, mh = 0.5 * (y[1:] + y[:-1]), 0.5 * (h[1:] + h[:-1])
        dy, dh = y[1:] - y[:-1], h[1:] - h[:-1]
        ds = np.hypot(dy, dh)
        ny, nh = -dh / ds, dy / ds
        ry = my[:, None] - vy[None, :]
        rh = mh[:, None] - vh[None, :]
        r2 = ry ** 2 + rh ** 2
        uy = np.sum(-vs * rh / (2 * np.pi * r2), axis=1)
        uh = np.sum(vs * ry / (2 * np.pi * r2), axis=1)
        wn = uy * ny + uh * nh
        D = -0.5 * flow.density * flow.compressibility * np.sum(g_te * wn * ds)
        return float(D / (0.5 * flow.density * flow.speed ** 2 * lat.ref_area))


class FluidTape:
    """Fluid fixed point recorded at ``(w, z, alpha)``.

    Provides the transposed partial derivatives used by the coupled
    adjoint; objectives are weighted sums of C_L and C_D.
    """

    def __init__(self, solver: VlmSolver, w, z, alpha):
        self.solver = solver
        self.tape, self.values = record(solver.fixed_point, np.asarray(w, float),
                                        np.asarray(z, float), float(alpha))
        self._c = None

    def _seeds(self, wbar, fbar, jw):
        nw = self.values[0].shape
        return (np.zeros(nw) if wbar is None else wbar,
                np.zeros(self.values[1].shape) if fbar is None else fbar,
                float(jw[0]), float(jw[1]))

    def adjoint_w(self, fbar, jw, wbar0=None, tol=1e-14, max_iter=500):
        """Iterate ``wbar = dJ/dw + (dF/dw)^T wbar + (dF_f/dw)^T fbar``."""
        c = vjp(self.tape, self._seeds(None, fbar, jw), wrt=0)
        theta = self.solver.flow.relaxation
        if theta == 1.0:
            return c
        wb = c.copy() if wbar0 is None else np.array(wbar0, float)
        for _ in range(max_iter):
            new = c + vjp(self.tape, self._seeds(wb, None, (0.0, 0.0)), wrt=0)
            done = np.linalg.norm(new - wb) <= tol * max(np.linalg.norm(new), 1e-300)
            wb = new
            if done:
                break
        return wb

    def adjoint_z(self, wbar, fbar, jw):
        """``(dJ/dz + (dF/dz)^T wbar + (dF_f/dz)^T fbar)`` and the alpha analogue."""
        return vjp(self.tape, self._seeds(wbar, fbar, jw), wrt=(1, 2))
