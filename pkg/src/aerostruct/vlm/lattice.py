"""Vortex-lattice geometry, flow conditions and wake construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fileio import FormatError, fmt, read_sections


@dataclass
class FlowConditions:
    speed: float = 50.0
    alpha: float = np.deg2rad(2.0)     # angle of attack [rad]
    density: float = 1.225
    mach: float = 0.0
    relaxation: float = 1.0            # fluid fixed-point relaxation
    wake_ratio: float = 1.2
    wake_length: float = 25.0          # minimum, in reference chords
    wake_span_factor: float = 50.0     # minimum, in full spans
    core_factor: float = 1e-6          # core radius / reference chord

    def freestream(self, alpha=None) -> np.ndarray:
        a = self.alpha if alpha is None else alpha
        return self.speed * np.array([np.cos(a), 0.0, np.sin(a)])

    @property
    def compressibility(self) -> float:
        if not 0.0 <= self.mach < 0.7:
            raise ValueError("Prandtl-Glauert factor needs 0 <= Mach < 0.7")
        return 1.0 / np.sqrt(1.0 - self.mach ** 2)


@dataclass
class VortexLattice:
    """Structured camber-surface lattice.

    ``nodes`` has shape ``(nc + 1, ns + 1, 3)``: chordwise index first
    (leading edge to trailing edge), spanwise index second. Row ``nc`` is
    the trailing edge. With ``symmetric`` set the lattice is a half wing
    mirrored in ``y = 0``. ``thickness`` optionally gives the section
    thickness at each node, defining a closed surface around the lattice.
    """

    nodes: np.ndarray
    symmetric: bool = False
    ref_chord: float | None = None
    ref_area: float | None = None
    thickness: np.ndarray | None = None
    node_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, float)
        if self.nodes.ndim != 3 or self.nodes.shape[2] != 3 or min(self.nodes.shape[:2]) < 2:
            raise ValueError("lattice nodes must have shape (nc+1, ns+1, 3)")
        P = self.nodes
        if self.ref_chord is None:
            self.ref_chord = float(np.mean(np.linalg.norm(P[-1] - P[0], axis=1)))
        if self.ref_area is None:
            self.ref_area = float(np.sum(self.panel_areas()))
        if self.thickness is not None:
            self.thickness = np.asarray(self.thickness, float).reshape(P.shape[:2])
        if self.node_ids is None:
            self.node_ids = np.arange(1, self.n_bound + 1)

    nc = property(lambda self: self.nodes.shape[0] - 1)
    ns = property(lambda self: self.nodes.shape[1] - 1)
    n_bound = property(lambda self: self.nodes.shape[0] * self.nodes.shape[1])
    n_panels = property(lambda self: self.nc * self.ns)

    def panel_areas(self):
        P = self.nodes
        d1 = P[1:, 1:] - P[:-1, :-1]
        d2 = P[:-1, 1:] - P[1:, :-1]
        return 0.5 * np.linalg.norm(np.cross(d1, d2), axis=-1)

    @property
    def span(self) -> float:
        y = self.nodes[..., 1]
        b = float(y.max() - y.min())
        return 2.0 * b if self.symmetric else b

    def te_indices(self) -> np.ndarray:
        return self.nc * (self.ns + 1) + np.arange(self.ns + 1)

    def panel_corners(self) -> np.ndarray:
        """Node indices of each panel, counter-clockwise seen from the suction side."""
        n1 = self.ns + 1
        i, j = np.meshgrid(np.arange(self.nc), np.arange(self.ns), indexing="ij")
        k = (i * n1 + j).reshape(-1)
        return np.stack([k, k + n1, k + n1 + 1, k + 1], axis=1)


def wake_stations(flow: FlowConditions, ref_chord: float, nc: int, span: float = 0.0):
    """Cumulative distances of the wake rows from the trailing edge.

    The first spacing equals the mean chordwise panel length and spacings
    grow geometrically until the wake is at least ``wake_length`` chords and
    ``wake_span_factor`` spans long.
    """
    h0 = ref_chord / nc
    target = max(flow.wake_length * ref_chord, flow.wake_span_factor * span)
    s = [0.0]
    h = h0
    while s[-1] < target:
        s.append(s[-1] + h)
        h *= flow.wake_ratio
    return np.array(s)


def build_wake(te_nodes, alpha, stations) -> np.ndarray:
    """Wake nodes ``(R + 1, ns + 1, 3)`` along the freestream; row 0 is the TE."""
    d = np.array([np.cos(alpha), 0.0, np.sin(alpha)])
    return np.asarray(te_nodes)[None, :, :] + stations[:, None, None] * d


# ----------------------------------------------------------------------
# text format: GRID, NODES, PANELS, TE and optional THICKNESS sections
def format_lattice(lat: VortexLattice) -> str:
    ids = lat.node_ids
    lines = ["# vortex lattice", "GRID",
             f"{lat.nc} {lat.ns} {int(lat.symmetric)} {fmt(lat.ref_chord)} {fmt(lat.ref_area)}",
             "NODES"]
    for k, x in zip(ids, lat.nodes.reshape(-1, 3)):
        lines.append(f"{k} {fmt(x[0])} {fmt(x[1])} {fmt(x[2])}")
    lines.append("PANELS")
    for p, c in enumerate(lat.panel_corners(), start=1):
        lines.append(f"{p} " + " ".join(str(ids[i]) for i in c))
    lines.append("TE")
    lines.append(" ".join(str(ids[i]) for i in lat.te_indices()))
    if lat.thickness is not None:
        lines.append("THICKNESS")
        for k, t in zip(ids, lat.thickness.reshape(-1)):
            lines.append(f"{k} {fmt(t)}")
    return "\n".join(lines) + "\n"


def parse_lattice(text: str, source="<string>") -> VortexLattice:
    sec = read_sections(text, ("GRID", "NODES", "PANELS", "TE", "THICKNESS"), source)
    for name in ("GRID", "NODES", "PANELS", "TE"):
        if name not in sec:
            raise FormatError(f"{source}: missing section {name}")
    g = sec["GRID"][0][1] if len(sec["GRID"]) == 1 else None
    if g is None or len(g) != 5:
        raise FormatError(f"{source}: GRID expects one line 'nc ns symmetric chord area'")
    nc, ns, sym = int(g[0]), int(g[1]), bool(int(g[2]))
    ids, xyz = [], []
    for ln, tok in sec["NODES"]:
        if len(tok) != 4:
            raise FormatError(f"{source}:{ln}: NODES expects 'id x y z'")
        ids.append(int(tok[0]))
        xyz.append([float(t) for t in tok[1:]])
    if len(ids) != (nc + 1) * (ns + 1):
        raise FormatError(f"{source}: expected {(nc + 1) * (ns + 1)} nodes, found {len(ids)}")
    lookup = {k: i for i, k in enumerate(ids)}
    lat = VortexLattice(np.array(xyz).reshape(nc + 1, ns + 1, 3), sym, float(g[3]),
                        float(g[4]), node_ids=np.array(ids))
    corners = lat.panel_corners()
    if len(sec["PANELS"]) != len(corners):
        raise FormatError(f"{source}: expected {len(corners)} panels")
    for (ln, tok), c in zip(sec["PANELS"], corners):
        try:
            got = [lookup[int(t)] for t in tok[1:]]
        except KeyError:
            raise FormatError(f"{source}:{ln}: unknown node in panel") from None
        if got != list(c):
            raise FormatError(f"{source}:{ln}: panel does not follow the structured ordering")
    te = [lookup.get(int(t), -1) for _, tok in sec["TE"] for t in tok]
    if te != list(lat.te_indices()):
        raise FormatError(f"{source}: TE nodes must be the last chordwise row")
    if "THICKNESS" in sec:
        t = np.zeros(len(ids))
        for ln, tok in sec["THICKNESS"]:
            t[lookup[int(tok[0])]] = float(tok[1])
        lat.thickness = t.reshape(nc + 1, ns + 1)
    return lat


def read_lattice(path) -> VortexLattice:
    with open(path) as fh:
        return parse_lattice(fh.read(), str(path))


def write_lattice(lat: VortexLattice, path):
    with open(path, "w") as fh:
        fh.write(format_lattice(lat))
