"""Reference wing cases assembled from the library building blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beam import BeamSolver, StructuralModel, StructuralSettings
from .coupler import AeroStructuralProblem, CouplerSettings
from .ffd import Embedding, FfdBox, ThicknessConstraints
from .spline import InterfaceSpline, SplineSettings, structural_coupling
from .vlm import FlowConditions, VlmSolver, VortexLattice


def naca_thickness(x, ratio=0.12):
    """Full thickness of a symmetric four-digit section with a closed trailing edge."""
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    return 10.0 * ratio * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x ** 2
                           + 0.2843 * x ** 3 - 0.1036 * x ** 4)


def rectangular_lattice(nc, ns, semispan, chord, symmetric=True, thickness_ratio=None,
                        spacing="uniform"):
    """Flat rectangular camber lattice from the root (y = 0) to the tip."""
    x = np.linspace(0.0, chord, nc + 1)
    if spacing == "cosine":
        x = 0.5 * chord * (1 - np.cos(np.linspace(0, np.pi, nc + 1)))
    y = np.linspace(0.0, semispan, ns + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    nodes = np.stack([X, Y, np.zeros_like(X)], axis=-1)
    t = None if thickness_ratio is None else chord * naca_thickness(X / chord, thickness_ratio)
    return VortexLattice(nodes, symmetric, thickness=t)


def wing_structure(n_beam, semispan, chord, ea_fraction, props, thickness_ratio=0.12,
                   trace=True, skin_fraction=0.3):
    """Straight beam along the elastic axis with rigid links to section trace points.

    Each station gets leading-edge, trailing-edge, upper and lower slave nodes;
    the skin points sit at ``skin_fraction`` of the chord. The root is clamped.
    """
    y = np.linspace(0.0, semispan, n_beam)
    xe = ea_fraction * chord
    xs = skin_fraction * chord
    h = 0.5 * chord * naca_thickness(skin_fraction, thickness_ratio)
    coords = [np.c_[np.full(n_beam, xe), y, np.zeros(n_beam)]]
    rigid = []
    if trace:
        offsets = [(-xe, 0.0), (chord - xe, 0.0), (xs - xe, h), (xs - xe, -h)]
        for k, (dx, dz) in enumerate(offsets):
            coords.append(np.c_[np.full(n_beam, xe + dx), y, np.full(n_beam, dz)])
            rigid += [(s, (k + 1) * n_beam + s) for s in range(n_beam)]
    coords = np.concatenate(coords)
    beams = np.c_[np.arange(n_beam - 1), np.arange(1, n_beam)]
    fixed = np.zeros((len(coords), 6), bool)
    fixed[0] = True
    return StructuralModel(coords, beams, np.tile(props, (n_beam - 1, 1)),
                           np.array(rigid, int).reshape(-1, 2), fixed)


@dataclass
class WingCase:
    lattice: VortexLattice
    flow: FlowConditions
    structure: StructuralModel
    spline: InterfaceSpline
    ffd: FfdBox
    camber: Embedding
    upper: Embedding
    lower: Embedding
    upper0: np.ndarray
    lower0: np.ndarray
    constraints: ThicknessConstraints
    target_cl: float
    structural_settings: StructuralSettings
    coupler_settings: CouplerSettings
    coupling: object = None      # precomputed DOF-to-surface matrix, else from ``spline``

    def problem(self, stiffness_scale=1.0, settings=None) -> AeroStructuralProblem:
        model = self.structure if stiffness_scale == 1.0 else self.structure.scaled(stiffness_scale)
        beam = BeamSolver(model, self.structural_settings)
        H = self.coupling if self.coupling is not None else \
            structural_coupling(self.spline, model.n_dof)
        return AeroStructuralProblem(VlmSolver(self.lattice, self.flow), beam, H,
                                     settings or self.coupler_settings)

    def surfaces(self, dv):
        """Displaced upper and lower skins for design vector ``dv``."""
        shape = self.upper0.shape
        return (self.upper0 + self.upper.displace_surface(dv).reshape(shape),
                self.lower0 + self.lower.displace_surface(dv).reshape(shape))


def build_wing_case(lattice, structure, flow, ffd, stations, minima=None, target_cl=0.5,
                    spline_settings=None, structural_settings=None, coupler_settings=None):
    """Embed a lattice (with thickness) and a structure into a coupled case."""
    donors = structure.coords
    spline = InterfaceSpline(donors, lattice.nodes.reshape(-1, 3), spline_settings)
    P = lattice.nodes
    t = lattice.thickness if lattice.thickness is not None else np.zeros(P.shape[:2])
    upper0 = P.copy()
    lower0 = P.copy()
    upper0[..., 2] += 0.5 * t
    lower0[..., 2] -= 0.5 * t
    camber = ffd.embed(P.reshape(-1, 3))
    upper = ffd.embed(upper0.reshape(-1, 3))
    lower = ffd.embed(lower0.reshape(-1, 3))
    stations = np.asarray(stations, float)
    cons = ThicknessConstraints(stations, np.zeros(len(stations)))
    cons.minima = cons.ratios(upper0, lower0) if minima is None else np.asarray(minima, float)
    return WingCase(lattice, flow, structure, spline, ffd, camber, upper, lower, upper0, lower0,
                    cons, target_cl, structural_settings or StructuralSettings(),
                    coupler_settings or CouplerSettings())


def desk_wing(nc=12, ns=20, n_beam=20, semispan=4.0, chord=1.0, ea_fraction=0.4,
              thickness_ratio=0.12, target_cl=0.3, flexibility=1.0, orders=(4, 4, 1)):
    """Rectangular aspect-ratio-8 wing with a flexible spar behind the aerodynamic centre.

    ``flexibility`` divides the bending and torsion stiffness.
    """
    lat = rectangular_lattice(nc, ns, semispan, chord, True, thickness_ratio)
    E, G = 70e9, 27e9
    props = np.array([E, G, 1e-3, 1.2e-6 / flexibility, 1e-5, 1.0e-6 / flexibility])
    structure = wing_structure(n_beam, semispan, chord, ea_fraction, props, thickness_ratio)
    flow = FlowConditions(speed=50.0, alpha=np.deg2rad(4.0), density=1.225)
    half = 0.5 * chord * thickness_ratio
    ffd = FfdBox.box([-0.02 * chord, 0.0, -1.3 * half], [1.02 * chord, semispan, 1.3 * half],
                     orders, freeze_plane_y=0.0)
    stations = semispan * np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    return build_wing_case(lat, structure, flow, ffd, stations, target_cl=target_cl)
