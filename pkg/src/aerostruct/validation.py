"""Coupled-adjoint design gradients checked against central differences.

The check runs at a fixed angle of attack: the objective is the
coupled C_D (or C_L) as a function of the vertical displacements of the
free FFD control points, with every finite-difference probe converged
tightly from the baseline state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cases import WingCase
from .coupler import CouplerSettings
from .fileio import fmt

OBJECTIVES = {"drag": (0.0, 1.0), "lift": (1.0, 0.0)}


@dataclass
class GradientCheck:
    component: int
    control_point: int        # flat FFD index (first index fastest)
    adjoint: float
    steps: tuple
    finite_difference: tuple

    @property
    def relative_errors(self):
        return tuple(abs(self.adjoint - fd) / abs(fd) if fd != 0 else abs(self.adjoint - fd)
                     for fd in self.finite_difference)

    @property
    def max_relative_error(self):
        return max(self.relative_errors)


@dataclass
class ValidationResult:
    objective: str
    alpha: float
    value: float
    gradient: np.ndarray
    checks: list

    @property
    def max_relative_error(self):
        return max(c.max_relative_error for c in self.checks)


def pick_components(gradient, count, floor=0.05):
    """``count`` components spread evenly over those with ``|g| >= floor * max|g|``.

    Components with a negligible gradient make relative errors meaningless.
    """
    g = np.abs(np.asarray(gradient))
    cand = np.nonzero(g >= floor * g.max())[0]
    if len(cand) <= count:
        return cand
    pos = np.round(np.linspace(0, len(cand) - 1, count)).astype(int)
    return cand[pos]


def validate_gradient(case: WingCase, components=None, steps=(1e-4, 1e-5, 1e-6), count=10,
                      objective="drag", stiffness_scale=1.0, alpha=None,
                      settings: CouplerSettings | None = None, map_fn=map) -> ValidationResult:
    """Adjoint design gradient and central differences over a step sweep."""
    weights = OBJECTIVES[objective]
    st = settings or replace(case.coupler_settings, tol=1e-13, max_iter=200, adj_tol=1e-13,
                             adj_max_iter=400)
    prob = case.problem(stiffness_scale=stiffness_scale, settings=st)
    alpha = case.flow.alpha if alpha is None else float(alpha)
    base = prob.solve_primal(alpha=alpha)
    g_surf, _ = prob.gradient(base, weights)
    grad = case.camber.project_gradient(g_surf.reshape(-1, 3))
    comps = pick_components(grad, count) if components is None or len(components) == 0 \
        else np.asarray(components, int)
    if np.any(comps < 0) or np.any(comps >= len(grad)):
        raise ValueError(f"design components must lie in [0, {len(grad)})")

    def probe(job):
        k, h = job
        e = np.zeros(len(grad))
        e[k] = h
        s = prob.solve_primal(case.camber.displace_surface(e), alpha, warm=base)
        return weights[0] * s.cl + weights[1] * s.cd

    jobs = [(int(k), sgn * h) for k in comps for h in steps for sgn in (1.0, -1.0)]
    vals = list(map_fn(probe, jobs))
    free = case.ffd.free_indices
    checks = []
    n = 0
    for k in comps:
        fd = []
        for h in steps:
            fd.append((vals[n] - vals[n + 1]) / (2.0 * h))
            n += 2
        checks.append(GradientCheck(int(k), int(free[k]), float(grad[k]), tuple(steps), tuple(fd)))
    value = weights[0] * base.cl + weights[1] * base.cd
    return ValidationResult(objective, alpha, value, grad, checks)


def format_validation(result: ValidationResult) -> str:
    """One block per component: the adjoint row, then one FD row per step.

    The adjoint row carries the largest relative error over the sweep and
    each FD row the error of the adjoint against that difference.
    """
    lines = ["component,control_point,method,step,sensitivity,relative_error_to_FD"]
    for c in result.checks:
        lines.append(f"{c.component},{c.control_point},AD,--,{fmt(c.adjoint)},"
                     f"{fmt(c.max_relative_error)}")
        for h, fd, err in zip(c.steps, c.finite_difference, c.relative_errors):
            lines.append(f"{c.component},{c.control_point},FD,{fmt(h)},{fmt(fd)},{fmt(err)}")
    return "\n".join(lines) + "\n"


def parse_validation(text: str):
    """Rows of a validation table as tuples (component, cp, method, step, value, error)."""
    rows = []
    lines = text.strip().splitlines()
    for ln in lines[1:]:
        c, cp, m, h, v, e = ln.split(",")
        rows.append((int(c), int(cp), m, None if h == "--" else float(h), float(v), float(e)))
    return rows
