"""Coupled aero-structural analysis, adjoint sensitivities and flying-shape optimization."""

__version__ = "0.1.0"
