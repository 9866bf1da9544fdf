"""Geometrically nonlinear corotational beam structures."""

from .energy import beam_energy, rigid_energy, rotation_matrix
from .model import (DOF_PER_NODE, StructuralModel, StructuralSettings, format_structure,
                    parse_structure, read_structure, write_structure)
from .solver import BeamSolver, NonConvergenceError, StructuralFixedPoint

__all__ = ["DOF_PER_NODE", "StructuralModel", "StructuralSettings", "format_structure",
           "parse_structure", "read_structure", "write_structure", "BeamSolver",
           "NonConvergenceError", "StructuralFixedPoint", "beam_energy", "rigid_energy",
           "rotation_matrix"]
