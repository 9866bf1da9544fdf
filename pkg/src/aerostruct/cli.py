"""Command-line front end: ``aerostruct <mode> --config PATH [--output DIR] [--threads N]``.

Modes and the files they write into the output directory:

analyze
    ``summary.txt`` (key = value), ``history.csv`` (coupling iterations),
    ``flying_lattice.txt`` (deformed surface in the lattice format).
adjoint
    ``adjoint_report.txt``, ``gradient_cp.csv`` (dJ/dCP per free control
    point), ``gradient_surface.csv`` (dJ/dx per surface node).
validate-gradient
    ``validation.csv`` (adjoint row and one FD row per step for each
    component) and ``validation_report.txt``.
optimize
    ``history.csv``, ``report.txt``, ``design.txt``.
compare
    ``comparison.csv``; runs both optimizations first (into ``aswso/`` and
    ``awso/``) unless ``compare.aswso_design`` and ``compare.awso_design``
    point at existing designs.

Exit codes: 0 success, 1 module failure, 2 optimizer stopped at the
iteration limit, 3 evaluator failure inside the optimizer, 4 bad
configuration, 5 gradient validation above tolerance.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .config import MODES, ConfigError, RunConfig, load_case, parse_config
from .fileio import fmt, format_key_values, format_vector, parse_vector
from .optimize import (CONVERGED, MAX_ITERATIONS, DriverSettings, OptimizationError,
                       OptimizationProblem, compare_flying_shapes, format_comparison,
                       format_history, format_report, optimize)
from .validation import format_validation, validate_gradient
from .vlm import VortexLattice, format_lattice

EXIT_OK, EXIT_FAILURE, EXIT_MAX_ITER, EXIT_EVALUATOR, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2, 3, 4, 5


class RunError(RuntimeError):
    """A pipeline step failed; names the module, the operation and the iterate."""

    def __init__(self, module, operation, message, context="", exit_code=EXIT_FAILURE):
        self.module, self.operation, self.context = module, operation, context
        self.exit_code = exit_code
        where = f" [{context}]" if context else ""
        super().__init__(f"{module}.{operation}: {message}{where}")


def _context(exc) -> str:
    state = getattr(exc, "state", None)
    if state is not None and hasattr(state, "iterations"):
        return f"iteration {state.iterations}, alpha {np.rad2deg(state.alpha):.6g} deg"
    if hasattr(exc, "iteration"):
        return f"optimizer iteration {exc.iteration}"
    if hasattr(exc, "history"):
        return f"after {len(exc.history)} Newton residual evaluations"
    if hasattr(exc, "receiver"):
        return f"receiver {exc.receiver}"
    return ""


@contextmanager
def stage(module, operation):
    try:
        yield
    except (RunError, ConfigError):
        raise
    except OptimizationError as exc:
        raise RunError(module, operation, str(exc), _context(exc), EXIT_EVALUATOR) from exc
    except Exception as exc:
        raise RunError(module, operation, f"{type(exc).__name__}: {exc}", _context(exc)) from exc


def _write(out: Path, name, text):
    (out / name).write_text(text)


def _driver_settings(cfg: RunConfig, threads) -> DriverSettings:
    o = cfg.section("optimizer")
    o.pop("mode")
    return DriverSettings(threads=threads, **o)


# ----------------------------------------------------------------------
def run_analyze(cfg, case, out, threads):
    with stage("coupler", "build"):
        prob = case.problem(stiffness_scale=cfg["structure.stiffness_scale"])
    if cfg["analysis.trim"]:
        with stage("coupler", "trim_to_cl"):
            s = prob.trim_to_cl(case.target_cl)
    else:
        with stage("coupler", "solve_primal"):
            s = prob.solve_primal()
    e_s = float(s.u_s @ s.f_s)
    e_f = float(np.sum(s.u_f * s.f_f))
    res = prob.residuals(s)
    items = [("mode", "analyze"), ("converged", s.converged), ("iterations", s.iterations),
             ("alpha_deg", float(np.rad2deg(s.alpha))), ("C_L", float(s.cl)), ("C_D", float(s.cd)),
             ("tip_deflection", prob.tip_deflection(s.u_s)),
             ("interface_work.structure", e_s), ("interface_work.fluid", e_f)]
    items += [(f"residual.{k}", v) for k, v in res.items()]
    _write(out, "summary.txt", format_key_values(items))
    _write(out, "history.csv", s.history_csv())
    lat = case.lattice
    flying = VortexLattice(lat.nodes + s.u_tot.reshape(lat.nodes.shape), lat.symmetric,
                           lat.ref_chord, lat.ref_area, lat.thickness, lat.node_ids)
    _write(out, "flying_lattice.txt", format_lattice(flying))
    return EXIT_OK


def run_adjoint(cfg, case, out, threads):
    weights = {"drag": (0.0, 1.0), "lift": (1.0, 0.0)}[cfg["adjoint.objective"]]
    with stage("coupler", "build"):
        prob = case.problem(stiffness_scale=cfg["structure.stiffness_scale"])
    trimmed = cfg["adjoint.trimmed"]
    with stage("coupler", "trim_to_cl" if trimmed else "solve_primal"):
        s = prob.trim_to_cl(case.target_cl) if trimmed else prob.solve_primal()
    with stage("coupler", "solve_adjoint"):
        if trimmed:
            if cfg["adjoint.objective"] != "drag":
                raise ValueError("the trimmed gradient is defined for the drag objective only")
            g, info = prob.trimmed_gradient(s)
            dalpha = 0.0
        else:
            adj = prob.solve_adjoint(s, weights)
            g, dalpha = prob.total_gradient(adj)
    g = np.asarray(g).reshape(-1, 3)
    with stage("ffd", "project_gradient"):
        gcp = case.camber.project_gradient(g)
    value = weights[0] * s.cl + weights[1] * s.cd
    items = [("mode", "adjoint"), ("objective", cfg["adjoint.objective"]), ("trimmed", trimmed),
             ("value", float(value)), ("alpha_deg", float(np.rad2deg(s.alpha))),
             ("C_L", float(s.cl)), ("C_D", float(s.cd)), ("dJ_dalpha", float(dalpha))]
    if not trimmed:
        items.append(("adjoint_iterations", adj.iterations))
    _write(out, "adjoint_report.txt", format_key_values(items))
    box = case.ffd
    l1, m1, _ = box.control_points.shape[:3]
    lines = ["component,control_point,i,j,k,dJ_dCPz"]
    for n, (f, v) in enumerate(zip(box.free_indices, gcp)):
        i, j, k = f % l1, (f // l1) % m1, f // (l1 * m1)
        lines.append(f"{n},{f},{i},{j},{k},{fmt(v)}")
    _write(out, "gradient_cp.csv", "\n".join(lines) + "\n")
    lines = ["node_id,dJ_dx,dJ_dy,dJ_dz"]
    for nid, row in zip(case.lattice.node_ids, g):
        lines.append(f"{nid},{fmt(row[0])},{fmt(row[1])},{fmt(row[2])}")
    _write(out, "gradient_surface.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def run_validate(cfg, case, out, threads):
    from dataclasses import replace
    st = replace(case.coupler_settings, tol=1e-13, max_iter=max(200, cfg["coupler.max_iter"]),
                 adj_tol=1e-13, adj_max_iter=max(400, cfg["coupler.adjoint_max_iter"]))
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        with stage("validation", "validate_gradient"):
            r = validate_gradient(case, cfg["validate.components"], cfg["validate.steps"],
                                  cfg["validate.count"], cfg["adjoint.objective"],
                                  cfg["structure.stiffness_scale"], settings=st,
                                  map_fn=pool.map if pool else map)
    finally:
        if pool:
            pool.shutdown()
    _write(out, "validation.csv", format_validation(r))
    ok = r.max_relative_error <= cfg["validate.tolerance"]
    items = [("mode", "validate-gradient"), ("objective", r.objective),
             ("alpha_deg", float(np.rad2deg(r.alpha))), ("value", float(r.value)),
             ("components", " ".join(str(c.component) for c in r.checks)),
             ("steps", " ".join(fmt(h) for h in cfg["validate.steps"])),
             ("max_relative_error", float(r.max_relative_error)),
             ("tolerance", float(cfg["validate.tolerance"])), ("passed", ok)]
    _write(out, "validation_report.txt", format_key_values(items))
    return EXIT_OK if ok else EXIT_VALIDATION


def _optimize(cfg, case, out, threads, mode):
    with stage("opt-driver", "setup"):
        prob = OptimizationProblem.for_case(case, mode, _driver_settings(cfg, threads))
    try:
        with stage("opt-driver", "optimize"):
            res = optimize(prob)
    except RunError as exc:
        cause = exc.__cause__
        if isinstance(cause, OptimizationError) and cause.history:
            _write(out, "history.csv", format_history(cause.history))
        raise
    _write(out, "history.csv", format_history(res.history))
    _write(out, "report.txt", format_report(res, mode))
    _write(out, "design.txt", format_vector(res.dv, "design"))
    return res


def _status_code(status):
    return {CONVERGED: EXIT_OK, MAX_ITERATIONS: EXIT_MAX_ITER}.get(status, EXIT_FAILURE)


def run_optimize(cfg, case, out, threads):
    res = _optimize(cfg, case, out, threads, cfg["optimizer.mode"])
    return _status_code(res.status)


def run_compare(cfg, case, out, threads):
    designs = {}
    for mode, key, sub in (("flexible", "compare.aswso_design", "aswso"),
                           ("rigid", "compare.awso_design", "awso")):
        if cfg[key]:
            with stage("cli-io", "read_design"):
                dv = parse_vector(Path(cfg[key]).read_text(), cfg[key])
                if len(dv) != case.ffd.n_design:
                    raise ValueError(f"{cfg[key]} has {len(dv)} values, the FFD box has "
                                     f"{case.ffd.n_design} design variables")
            designs[sub] = dv
        else:
            d = out / sub
            d.mkdir(parents=True, exist_ok=True)
            designs[sub] = _optimize(cfg, case, d, threads, mode).dv
    with stage("opt-driver", "compare_flying_shapes"):
        rows = compare_flying_shapes(case, designs["aswso"], designs["awso"],
                                     _driver_settings(cfg, threads))
    _write(out, "comparison.csv", format_comparison(rows))
    return EXIT_OK


RUNNERS = {"analyze": run_analyze, "adjoint": run_adjoint, "validate-gradient": run_validate,
           "optimize": run_optimize, "compare": run_compare}


def run(cfg: RunConfig, output, threads=1) -> int:
    """Execute ``cfg.mode`` and write its artifacts into ``output``; returns the exit code."""
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    with stage("cli-io", "load_case"):
        case = load_case(cfg)
    return RUNNERS[cfg.mode](cfg, case, out, threads)


def build_parser():
    p = argparse.ArgumentParser(prog="aerostruct",
                                description="Coupled aero-structural analysis and wing shape "
                                            "optimization.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, metavar="PATH", help="run configuration file")
    p.add_argument("--output", default="output", metavar="DIR",
                   help="directory for reports and histories (default: output)")
    p.add_argument("--threads", type=int, default=1, metavar="N",
                   help="worker threads for finite-difference probes (default: 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config)
        cfg.mode, cfg.threads = args.mode, args.threads
        return run(cfg, args.output, args.threads)
    except ConfigError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunError as exc:
        if isinstance(exc.__cause__, ConfigError):
            print(f"error: configuration: {exc.__cause__}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
