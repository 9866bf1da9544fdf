"""Free-form deformation with a trivariate Bernstein (Bezier) volume.

Design variables are vertical displacements of the non-frozen control
points, ordered with the chordwise index fastest. Embedded points move by
``W[:, free] @ dv`` where ``W`` holds tensor Bernstein weights, so the
surface-to-design gradient projection is the exact transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .fileio import FormatError, fmt, read_sections


class EmbeddingError(ValueError):
    """A point could not be located inside the FFD volume."""


def bernstein(order: int, t):
    """Bernstein polynomials ``B_{i,order}(t)``, shape ``(len(t), order + 1)``."""
    t = np.atleast_1d(np.asarray(t, float))
    i = np.arange(order + 1)
    return comb(order, i) * t[:, None] ** i * (1.0 - t[:, None]) ** (order - i)


def bernstein_derivative(order: int, t):
    t = np.atleast_1d(np.asarray(t, float))
    if order == 0:
        return np.zeros((len(t), 1))
    low = bernstein(order - 1, t)
    out = np.zeros((len(t), order + 1))
    out[:, 1:] += order * low
    out[:, :-1] -= order * low
    return out


@dataclass
class FfdBox:
    """Control lattice ``(l+1, m+1, n+1, 3)`` and frozen flags."""

    control_points: np.ndarray
    frozen: np.ndarray | None = None

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, float)
        if self.control_points.ndim != 4 or self.control_points.shape[3] != 3:
            raise ValueError("control points must have shape (l+1, m+1, n+1, 3)")
        if self.frozen is None:
            self.frozen = np.zeros(self.control_points.shape[:3], bool)
        self.frozen = np.asarray(self.frozen, bool).reshape(self.control_points.shape[:3])

    @classmethod
    def box(cls, lower, upper, orders=(4, 4, 1), freeze_plane_y=None):
        """Regular box between two corners; optionally freeze CPs on ``y = const``."""
        lo, hi = np.asarray(lower, float), np.asarray(upper, float)
        axes = [np.linspace(lo[d], hi[d], orders[d] + 1) for d in range(3)]
        cp = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        frozen = None
        if freeze_plane_y is not None:
            frozen = np.isclose(cp[..., 1], freeze_plane_y)
        return cls(cp, frozen)

    @property
    def orders(self):
        return tuple(s - 1 for s in self.control_points.shape[:3])

    @property
    def n_cp(self) -> int:
        return int(np.prod(self.control_points.shape[:3]))

    def flat_index(self, i, j, k) -> int:
        l1, m1, _ = self.control_points.shape[:3]
        return i + l1 * (j + m1 * k)

    def flat_points(self) -> np.ndarray:
        """Control points as ``(n_cp, 3)`` with the first index fastest."""
        return self.control_points.transpose(2, 1, 0, 3).reshape(-1, 3)

    def flat_frozen(self) -> np.ndarray:
        return self.frozen.transpose(2, 1, 0).reshape(-1)

    @property
    def free_indices(self) -> np.ndarray:
        return np.nonzero(~self.flat_frozen())[0]

    @property
    def n_design(self) -> int:
        return len(self.free_indices)

    # ------------------------------------------------------------------
    def weights(self, params) -> np.ndarray:
        """Tensor Bernstein weights ``(n_points, n_cp)`` (first index fastest)."""
        params = np.atleast_2d(params)
        l, m, n = self.orders
        Bu, Bv, Bw = bernstein(l, params[:, 0]), bernstein(m, params[:, 1]), bernstein(n, params[:, 2])
        W = Bw[:, :, None, None] * Bv[:, None, :, None] * Bu[:, None, None, :]
        return W.reshape(len(params), -1)

    def evaluate(self, params) -> np.ndarray:
        return self.weights(params) @ self.flat_points()

    def _jacobian(self, p):
        l, m, n = self.orders
        B = [bernstein(l, p[0])[0], bernstein(m, p[1])[0], bernstein(n, p[2])[0]]
        D = [bernstein_derivative(l, p[0])[0], bernstein_derivative(m, p[1])[0],
             bernstein_derivative(n, p[2])[0]]
        cp = self.control_points
        J = np.empty((3, 3))
        J[:, 0] = np.einsum("i,j,k,ijkd->d", D[0], B[1], B[2], cp)
        J[:, 1] = np.einsum("i,j,k,ijkd->d", B[0], D[1], B[2], cp)
        J[:, 2] = np.einsum("i,j,k,ijkd->d", B[0], B[1], D[2], cp)
        return J

    def invert_point(self, x, tol=1e-10, max_iter=50, margin=1e-9):
        """Parametric coordinates of ``x`` by Newton iteration.

        Converges to ``tol`` times the box diagonal; raises
        :class:`EmbeddingError` if the point lies outside the volume.
        """
        x = np.asarray(x, float)
        cp = self.control_points
        lo, hi = cp.reshape(-1, 3).min(axis=0), cp.reshape(-1, 3).max(axis=0)
        diag = np.linalg.norm(hi - lo)
        span = np.where(hi > lo, hi - lo, 1.0)
        p = np.clip((x - lo) / span, 0.0, 1.0)
        for _ in range(max_iter):
            r = self.evaluate(p)[0] - x
            if np.linalg.norm(r) <= tol * diag:
                break
            try:
                step = np.linalg.solve(self._jacobian(p), r)
            except np.linalg.LinAlgError:
                raise EmbeddingError(f"singular FFD map near {x}") from None
            p = p - step
        else:
            raise EmbeddingError(f"point inversion did not converge for {x}")
        if np.any(p < -margin) or np.any(p > 1 + margin):
            raise EmbeddingError(f"point {x} lies outside the FFD volume (params {p})")
        return np.clip(p, 0.0, 1.0)

    def embed(self, points) -> "Embedding":
        pts = np.asarray(points, float).reshape(-1, 3)
        params = np.array([self.invert_point(x) for x in pts]).reshape(-1, 3)
        return Embedding(self, params)


class Embedding:
    """Points embedded in an FFD box, with their design displacement map."""

    def __init__(self, box: FfdBox, params):
        self.box = box
        self.params = np.asarray(params, float)
        W = box.weights(self.params)
        self.W = W
        self.Wd = W[:, box.free_indices]

    def displace_surface(self, dv) -> np.ndarray:
        """Displacements ``(n_points, 3)``: only z moves; frozen CPs contribute zero."""
        out = np.zeros((len(self.params), 3))
        out[:, 2] = self.Wd @ np.asarray(dv, float)
        return out

    def project_gradient(self, g, mask=None) -> np.ndarray:
        """Design gradient from a point gradient ``(n_points, 3)`` (z component used).

        ``mask`` optionally flags points whose sensitivity is discarded.
        """
        gz = np.asarray(g, float).reshape(len(self.params), -1)
        gz = gz[:, 2] if gz.shape[1] == 3 else gz[:, 0]
        if mask is not None:
            gz = np.where(mask, 0.0, gz)
        return self.Wd.T @ gz


# ----------------------------------------------------------------------
def quad_normals(nodes, quads):
    n = np.cross(nodes[quads[:, 2]] - nodes[quads[:, 0]], nodes[quads[:, 3]] - nodes[quads[:, 1]])
    return n / np.linalg.norm(n, axis=1)[:, None]


def sharp_edge_mask(nodes, quads, threshold_deg=60.0) -> np.ndarray:
    """Nodes within one ring of edges whose dihedral angle exceeds the threshold.

    The dihedral angle is the angle between the normals of the two faces
    sharing an edge; boundary edges of an open surface are not sharp.
    """
    nodes = np.asarray(nodes, float)
    quads = np.asarray(quads, int)
    normals = quad_normals(nodes, quads)
    faces_of = {}
    for f, q in enumerate(quads):
        for a, b in zip(q, np.roll(q, -1)):
            faces_of.setdefault((min(a, b), max(a, b)), []).append(f)
    cos_t = np.cos(np.deg2rad(threshold_deg))
    sharp = np.zeros(len(nodes), bool)
    for (a, b), fs in faces_of.items():
        if len(fs) == 2 and normals[fs[0]] @ normals[fs[1]] < cos_t:
            sharp[[a, b]] = True
    ring = sharp.copy()
    for (a, b) in faces_of:
        if sharp[a] or sharp[b]:
            ring[[a, b]] = True
    return ring


def mask_sharp_edges(nodes, quads, gradient, threshold_deg=60.0):
    """Zero gradient rows of nodes near sharp edges; returns ``(gradient, mask)``."""
    mask = sharp_edge_mask(nodes, quads, threshold_deg)
    g = np.array(gradient, float)
    g[mask] = 0.0
    return g, mask


def closed_surface(lattice):
    """Closed quad surface around a lattice with a thickness distribution.

    Returns ``(nodes, quads, camber_map)``; ``camber_map[k]`` lists the
    surface nodes that belong to camber node ``k``. Leading- and
    trailing-edge rows are shared by the upper and lower skins.
    """
    P = lattice.nodes
    t = lattice.thickness
    nc, ns = lattice.nc, lattice.ns
    n1 = ns + 1
    up = P.copy()
    lo = P.copy()
    up[..., 2] += 0.5 * t
    lo[..., 2] -= 0.5 * t
    idx_up = np.arange((nc + 1) * n1).reshape(nc + 1, n1)
    idx_lo = idx_up.copy()
    inner = (nc - 1) * n1
    idx_lo[1:nc] = (nc + 1) * n1 + np.arange(inner).reshape(nc - 1, n1)
    nodes = np.concatenate([up.reshape(-1, 3), lo[1:nc].reshape(-1, 3)])
    quads = []
    for i in range(nc):
        for j in range(ns):
            quads.append([idx_up[i, j], idx_up[i + 1, j], idx_up[i + 1, j + 1], idx_up[i, j + 1]])
            quads.append([idx_lo[i, j], idx_lo[i, j + 1], idx_lo[i + 1, j + 1], idx_lo[i + 1, j]])
    cmap = [sorted({int(a), int(b)}) for a, b in zip(idx_up.reshape(-1), idx_lo.reshape(-1))]
    return nodes, np.array(quads), cmap


# ----------------------------------------------------------------------
class ThicknessConstraints:
    """Maximum thickness-to-chord ratio at spanwise stations.

    Upper and lower skins are given on the lattice grid ``(nc+1, ns+1, 3)``.
    Each station is a cut at constant ``y``; thickness is the largest
    vertical gap over 200 chordwise samples and chord is the streamwise
    extent of the cut.
    """

    def __init__(self, stations_y, minima, n_samples=200):
        self.stations = np.asarray(stations_y, float)
        self.minima = np.asarray(minima, float)
        self.n_samples = n_samples

    def _cut(self, S, y):
        # per chordwise row, linear interpolation along the span
        out = np.empty((S.shape[0], 3))
        for i in range(S.shape[0]):
            ys = S[i, :, 1]
            order = np.argsort(ys)
            for d in range(3):
                out[i, d] = np.interp(y, ys[order], S[i, order, d])
        return out

    def ratios(self, upper, lower) -> np.ndarray:
        res = []
        for y in self.stations:
            cu, cl = self._cut(upper, y), self._cut(lower, y)
            x0, x1 = cu[0, 0], cu[-1, 0]
            xs = np.linspace(x0, x1, self.n_samples)
            zu = np.interp(xs, cu[:, 0], cu[:, 2])
            zl = np.interp(xs, cl[:, 0], cl[:, 2])
            res.append(np.max(zu - zl) / (x1 - x0))
        return np.array(res)

    def values(self, upper, lower) -> np.ndarray:
        """Constraint values ``t/c - minimum`` (feasible when >= 0)."""
        return self.ratios(upper, lower) - self.minima


def thickness_constraints(constraints: ThicknessConstraints, upper_emb: Embedding,
                          lower_emb: Embedding, upper0, lower0, dv, ref_chord, map_fn=map):
    """Constraint values and their central-difference Jacobian w.r.t. ``dv``.

    ``map_fn`` evaluates the Jacobian columns; pass an executor's ``map``
    to spread them over threads (results keep their order).
    """
    shape = np.asarray(upper0).shape

    def evaluate(x):
        up = upper0 + upper_emb.displace_surface(x).reshape(shape)
        lo = lower0 + lower_emb.displace_surface(x).reshape(shape)
        return constraints.values(up, lo)

    dv = np.asarray(dv, float)
    c = evaluate(dv)
    h = 1e-6 * ref_chord

    def column(k):
        e = np.zeros_like(dv)
        e[k] = h
        return (evaluate(dv + e) - evaluate(dv - e)) / (2 * h)

    cols = list(map_fn(column, range(len(dv))))
    J = np.column_stack(cols) if cols else np.zeros((len(c), 0))
    return c, J


# ----------------------------------------------------------------------
# text format
def format_ffd(box: FfdBox, stations=None) -> str:
    l, m, n = box.orders
    lines = ["# FFD volume", "ORDER", f"{l} {m} {n}", "CONTROL_POINTS"]
    for p in box.flat_points():
        lines.append(f"{fmt(p[0])} {fmt(p[1])} {fmt(p[2])}")
    lines.append("FROZEN")
    fr = np.nonzero(box.flat_frozen())[0]
    for k in range(0, len(fr), 16):
        lines.append(" ".join(str(v) for v in fr[k:k + 16]))
    if stations is not None:
        lines.append("STATIONS")
        lines += format_stations(stations).splitlines()
    return "\n".join(lines) + "\n"


def format_stations(stations) -> str:
    ys, mins = stations
    return "\n".join(f"{fmt(y)} {fmt(t)}" for y, t in zip(ys, mins)) + "\n"


def parse_stations(rows, source="<string>"):
    ys, mins = [], []
    for ln, tok in rows:
        if len(tok) != 2:
            raise FormatError(f"{source}:{ln}: STATIONS expects 'y min_thickness_ratio'")
        ys.append(float(tok[0]))
        mins.append(float(tok[1]))
    return np.array(ys), np.array(mins)


def parse_ffd(text: str, source="<string>"):
    """Returns ``(box, stations)``; stations is ``None`` when absent."""
    sec = read_sections(text, ("ORDER", "CONTROL_POINTS", "FROZEN", "STATIONS"), source)
    if "ORDER" not in sec or len(sec["ORDER"]) != 1 or len(sec["ORDER"][0][1]) != 3:
        raise FormatError(f"{source}: ORDER expects one line 'l m n'")
    l, m, n = (int(v) for v in sec["ORDER"][0][1])
    pts = []
    for ln, tok in sec.get("CONTROL_POINTS", []):
        if len(tok) != 3:
            raise FormatError(f"{source}:{ln}: control point expects 'x y z'")
        pts.append([float(v) for v in tok])
    count = (l + 1) * (m + 1) * (n + 1)
    if len(pts) != count:
        raise FormatError(f"{source}: expected {count} control points, found {len(pts)}")
    cp = np.array(pts).reshape(n + 1, m + 1, l + 1, 3).transpose(2, 1, 0, 3)
    frozen = np.zeros(count, bool)
    for ln, tok in sec.get("FROZEN", []):
        for v in tok:
            k = int(v)
            if not 0 <= k < count:
                raise FormatError(f"{source}:{ln}: frozen index {k} out of range")
            frozen[k] = True
    box = FfdBox(cp, frozen.reshape(n + 1, m + 1, l + 1).transpose(2, 1, 0))
    stations = parse_stations(sec["STATIONS"], source) if "STATIONS" in sec else None
    return box, stations


def read_ffd(path):
    with open(path) as fh:
        return parse_ffd(fh.read(), str(path))


def write_ffd(box, path, stations=None):
    with open(path, "w") as fh:
        fh.write(format_ffd(box, stations))


def read_stations(path):
    with open(path) as fh:
        text = fh.read()
    sec = read_sections(text, ("STATIONS",), str(path))
    if "STATIONS" not in sec:
        raise FormatError(f"{path}: missing STATIONS section")
    return parse_stations(sec["STATIONS"], str(path))
