"""Structural model: 6-DOF beam nodes, beam elements and rigid links."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fileio import FormatError, fmt, read_sections

DOF_PER_NODE = 6


@dataclass
class StructuralSettings:
    load_steps: int = 10
    newton_tol: float = 1e-9
    max_newton: int = 50
    # penalty stiffness of rigid links relative to the largest diagonal entry
    # of the linear beam stiffness (translational and rotational separately)
    penalty_factor: float = 1.0


@dataclass
class StructuralModel:
    """Beam/rigid-link model in the jig configuration.

    Node coordinates are ``(n, 3)``; beams are index pairs with properties
    ``[E, G, A, Iy, Iz, J]``; rigid links are ``(master, slave)`` pairs;
    ``fixed`` is an ``(n, 6)`` boolean array of clamped DOFs.
    """

    coords: np.ndarray
    beams: np.ndarray
    props: np.ndarray
    rigid: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    fixed: np.ndarray | None = None
    node_ids: np.ndarray | None = None
    beam_ids: np.ndarray | None = None
    rigid_ids: np.ndarray | None = None
    stiffness_scale: float = 1.0

    def __post_init__(self):
        self.coords = np.asarray(self.coords, float).reshape(-1, 3)
        n = len(self.coords)
        self.beams = np.asarray(self.beams, int).reshape(-1, 2)
        self.props = np.asarray(self.props, float).reshape(-1, 6)
        self.rigid = np.asarray(self.rigid, int).reshape(-1, 2)
        if self.fixed is None:
            self.fixed = np.zeros((n, DOF_PER_NODE), bool)
        self.fixed = np.asarray(self.fixed, bool).reshape(n, DOF_PER_NODE)
        if self.node_ids is None:
            self.node_ids = np.arange(1, n + 1)
        if self.beam_ids is None:
            self.beam_ids = np.arange(1, len(self.beams) + 1)
        if self.rigid_ids is None:
            self.rigid_ids = np.arange(1, len(self.rigid) + 1)
        if len(self.beams) != len(self.props):
            raise ValueError("one property row is needed per beam")
        for a, b in self.beams:
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"invalid beam connectivity ({a}, {b})")
        self._geometry()

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_dof(self) -> int:
        return DOF_PER_NODE * self.n_nodes

    @property
    def free(self) -> np.ndarray:
        return ~self.fixed.reshape(-1)

    def _geometry(self):
        X = self.coords
        a, b = self.beams[:, 0], self.beams[:, 1]
        dX = X[b] - X[a]
        L0 = np.linalg.norm(dX, axis=1)
        if np.any(L0 == 0):
            raise ValueError("zero-length beam")
        e1 = dX / L0[:, None]
        up = np.tile([0.0, 0.0, 1.0], (len(e1), 1))
        near = np.abs(e1[:, 2]) > 0.99
        up[near] = [1.0, 0.0, 0.0]
        e3 = up - np.sum(up * e1, axis=1)[:, None] * e1
        e3 /= np.linalg.norm(e3, axis=1)[:, None]
        e2 = np.cross(e3, e1)
        self.dX, self.L0 = dX, L0
        self.frame = np.stack([e1, e2, e3], axis=1)        # (nb, 3, 3), rows are axes
        E, G, A, Iy, Iz, J = (self.props * [self.stiffness_scale, self.stiffness_scale,
                                            1, 1, 1, 1]).T
        self.kbeam = np.stack([E * A / L0, G * J / L0, E * Iy / L0, E * Iz / L0], axis=1)
        self.edofs = np.concatenate([DOF_PER_NODE * a[:, None] + np.arange(6),
                                     DOF_PER_NODE * b[:, None] + np.arange(6)], axis=1)
        m, s = self.rigid[:, 0], self.rigid[:, 1]
        self.r0 = X[s] - X[m]
        self.rdofs = np.concatenate([DOF_PER_NODE * m[:, None] + np.arange(6),
                                     DOF_PER_NODE * s[:, None] + np.arange(6)], axis=1)

    def scaled(self, factor: float) -> "StructuralModel":
        """Copy with Young's and shear moduli multiplied by ``factor``."""
        return StructuralModel(self.coords, self.beams, self.props, self.rigid, self.fixed,
                               self.node_ids, self.beam_ids, self.rigid_ids,
                               self.stiffness_scale * factor)

    def node_index(self, node_id) -> int:
        hit = np.nonzero(self.node_ids == node_id)[0]
        if len(hit) == 0:
            raise KeyError(f"unknown node id {node_id}")
        return int(hit[0])


# ----------------------------------------------------------------------
# text format
def parse_structure(text: str, source: str = "<string>") -> StructuralModel:
    """Parse the NODES / BEAMS / RIGID / BC text format."""
    sec = read_sections(text, ("NODES", "BEAMS", "RIGID", "BC"), source)
    nodes = sec.get("NODES", [])
    if not nodes:
        raise FormatError(f"{source}: NODES section is empty")
    ids, xyz = [], []
    for ln, tok in nodes:
        if len(tok) != 4:
            raise FormatError(f"{source}:{ln}: NODES expects 'id x y z'")
        ids.append(int(tok[0]))
        xyz.append([float(t) for t in tok[1:]])
    ids = np.array(ids)
    if len(set(ids.tolist())) != len(ids):
        raise FormatError(f"{source}: duplicate node id")
    lookup = {int(k): i for i, k in enumerate(ids)}

    def node(ln, tok):
        try:
            return lookup[int(tok)]
        except KeyError:
            raise FormatError(f"{source}:{ln}: unknown node id {tok}") from None

    bids, conn, props = [], [], []
    for ln, tok in sec.get("BEAMS", []):
        if len(tok) != 9:
            raise FormatError(f"{source}:{ln}: BEAMS expects 'id n1 n2 E G A Iy Iz J'")
        bids.append(int(tok[0]))
        conn.append([node(ln, tok[1]), node(ln, tok[2])])
        props.append([float(t) for t in tok[3:]])
    rids, rig = [], []
    for ln, tok in sec.get("RIGID", []):
        if len(tok) != 3:
            raise FormatError(f"{source}:{ln}: RIGID expects 'id master slave'")
        rids.append(int(tok[0]))
        rig.append([node(ln, tok[1]), node(ln, tok[2])])
    fixed = np.zeros((len(ids), DOF_PER_NODE), bool)
    for ln, tok in sec.get("BC", []):
        if len(tok) != 7 or any(t not in ("0", "1") for t in tok[1:]):
            raise FormatError(f"{source}:{ln}: BC expects 'node f1 .. f6' with 0/1 flags")
        fixed[node(ln, tok[0])] = [t == "1" for t in tok[1:]]
    return StructuralModel(np.array(xyz), np.array(conn, int).reshape(-1, 2),
                           np.array(props).reshape(-1, 6), np.array(rig, int).reshape(-1, 2),
                           fixed, ids, np.array(bids, int), np.array(rids, int))


def format_structure(model: StructuralModel) -> str:
    lines = ["# structural mesh", "NODES"]
    for i, x in zip(model.node_ids, model.coords):
        lines.append(f"{i} {fmt(x[0])} {fmt(x[1])} {fmt(x[2])}")
    lines.append("BEAMS")
    for k, (a, b), p in zip(model.beam_ids, model.beams, model.props):
        lines.append(f"{k} {model.node_ids[a]} {model.node_ids[b]} " + " ".join(fmt(v) for v in p))
    lines.append("RIGID")
    for k, (m, s) in zip(model.rigid_ids, model.rigid):
        lines.append(f"{k} {model.node_ids[m]} {model.node_ids[s]}")
    lines.append("BC")
    for i, row in zip(model.node_ids, model.fixed):
        if row.any():
            lines.append(f"{i} " + " ".join("1" if f else "0" for f in row))
    return "\n".join(lines) + "\n"


def read_structure(path) -> StructuralModel:
    with open(path) as fh:
        return parse_structure(fh.read(), str(path))


def write_structure(model: StructuralModel, path):
    with open(path, "w") as fh:
        fh.write(format_structure(model))
