"""Vortex-lattice aerodynamics with a differentiable fluid fixed point."""

from .lattice import (FlowConditions, VortexLattice, build_wake, format_lattice, parse_lattice,
                      read_lattice, wake_stations, write_lattice)
from .solver import FlowSolution, FluidTape, VlmSolver

__all__ = ["FlowConditions", "VortexLattice", "build_wake", "format_lattice", "parse_lattice",
           "read_lattice", "wake_stations", "write_lattice", "FlowSolution", "FluidTape",
           "VlmSolver"]
