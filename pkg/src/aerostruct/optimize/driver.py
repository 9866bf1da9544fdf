"""Trimmed-drag shape optimization of a wing case, flexible or quasi-rigid.

The flexible mode keeps the structure in the loop (aerostructural shape
optimization); the rigid mode scales every structural stiffness by
``RIGID_SCALE`` so the same pipeline runs with negligible deflection
(aerodynamic shape optimization). Both modes minimize C_D at the target
C_L; trim is solved inside each evaluation and never seen by the
optimizer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..cases import WingCase
from ..coupler import CouplerSettings
from ..fileio import fmt
from ..ffd import closed_surface, sharp_edge_mask, thickness_constraints
from .sqp import (CONVERGED, EVALUATOR_FAILURE, MAX_ITERATIONS, EvaluatorError, SqpSettings,
                  minimize)

RIGID_SCALE = 1e9
MODES = ("flexible", "rigid")
HISTORY_COLUMNS = ("iteration", "C_D", "C_L", "max_violation", "gradient_norm", "step_norm",
                   "alpha_trim_deg", "tip_deflection")


@dataclass
class DriverSettings:
    max_iter: int = 25
    gradient_tol: float = 1e-5          # on the KKT residual of C_D / C_D(dv0)
    constraint_tol: float = 1e-8
    bound: float = 0.05                 # design box half-width, metres
    fsi_tol: float = 1e-10
    adjoint_tol: float = 1e-10
    trim_tol: float = 1e-9
    mask_sharp_edges: bool = False
    sharp_edge_deg: float = 60.0
    fd_check_components: int = 3
    fd_check_step: float = 1e-5
    fd_check_tol: float = 1e-4
    fd_check_seed: int = 20240501
    probe_tol: float = 1e-12            # FSI and trim tolerance of FD probes
    threads: int = 1


@dataclass
class DesignEvaluation:
    dv: np.ndarray
    mode: str
    cd: float
    cl: float
    alpha: float
    tip_deflection: float
    constraints: np.ndarray
    constraint_jacobian: np.ndarray | None = None
    gradient: np.ndarray | None = None
    trim_info: dict = field(default_factory=dict)
    state: object = None
    adjoints: tuple = ()


class DesignEvaluator:
    """``evaluate_design(dv, mode)`` with warm starts anchored at accepted iterates.

    Every evaluation starts from the anchor state, so its result depends
    only on ``dv`` and the anchor; evaluating the same design twice gives
    bitwise identical outputs.
    """

    def __init__(self, case: WingCase, mode="flexible", settings: DriverSettings | None = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.case = case
        self.mode = mode
        self.settings = settings or DriverSettings()
        st = self.settings
        self.coupler_settings = replace(case.coupler_settings, tol=st.fsi_tol, adj_tol=st.adjoint_tol,
                                        trim_tol=st.trim_tol)
        scale = 1.0 if mode == "flexible" else RIGID_SCALE
        self.problem = case.problem(stiffness_scale=scale, settings=self.coupler_settings)
        self.anchor: DesignEvaluation | None = None
        self._cache: dict = {}
        self.mask = self._camber_mask() if st.mask_sharp_edges else None
        self.n_evaluations = 0

    @property
    def n_design(self):
        return self.case.ffd.n_design

    def _camber_mask(self):
        nodes, quads, cmap = closed_surface(self.case.lattice)
        sharp = sharp_edge_mask(nodes, quads, self.settings.sharp_edge_deg)
        return np.array([sharp[c].any() for c in cmap])

    def _u_design(self, dv):
        return self.case.camber.displace_surface(dv)

    def _trim(self, dv, settings):
        a = self.anchor
        alpha0 = self.case.flow.alpha if a is None else a.alpha
        warm = None if a is None else a.state
        slope = None if a is None else a.trim_info.get("dcl_dalpha")
        return self.problem.trim_to_cl(self.case.target_cl, self._u_design(dv), alpha0, warm,
                                       settings, slope)

    def constraints(self, dv, jacobian=True, map_fn=map):
        c = self.case
        if not jacobian:
            up, lo = c.surfaces(dv)
            return c.constraints.values(up, lo), None
        return thickness_constraints(c.constraints, c.upper, c.lower, c.upper0, c.lower0, dv,
                                     c.lattice.ref_chord, map_fn)

    def evaluate(self, dv, gradient=True) -> DesignEvaluation:
        dv = np.array(dv, float)
        key = dv.tobytes()
        hit = self._cache.get(key)
        if hit is not None and (hit.gradient is not None or not gradient):
            return hit
        if hit is None:
            state = self._trim(dv, self.coupler_settings)
            cons, _ = self.constraints(dv, jacobian=False)
            hit = DesignEvaluation(dv, self.mode, state.cd, state.cl, state.alpha,
                                   self.problem.tip_deflection(state.u_s), cons, state=state)
            self.n_evaluations += 1
        if gradient:
            p = self.problem
            a = self.anchor
            warm = a.adjoints if a is not None and a.adjoints else (None, None)
            ad_d = p.solve_adjoint(hit.state, (0.0, 1.0), warm=warm[0])
            ad_l = p.solve_adjoint(hit.state, (1.0, 0.0), warm=warm[1])
            gd, dd = p.total_gradient(ad_d)
            gl, dl = p.total_gradient(ad_l)
            lam = dd / dl
            g_surf = (gd - lam * gl).reshape(-1, 3)
            hit.gradient = self.case.camber.project_gradient(g_surf, self.mask)
            hit.trim_info = {"dcd_dalpha": dd, "dcl_dalpha": dl, "multiplier": lam}
            hit.adjoints = (ad_d, ad_l)
            _, hit.constraint_jacobian = self.constraints(dv, jacobian=True)
        if len(self._cache) > 8:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = hit
        return hit

    def accept(self, dv):
        """Move the warm-start anchor to an evaluated design."""
        ev = self._cache.get(np.asarray(dv, float).tobytes())
        if ev is None:
            ev = self.evaluate(dv)
        self.anchor = ev
        self._cache = {ev.dv.tobytes(): ev}

    def probe_cd(self, dv) -> float:
        """Trimmed C_D with tight tolerances, for finite-difference checks."""
        st = replace(self.coupler_settings, tol=self.settings.probe_tol,
                     trim_tol=self.settings.probe_tol, max_iter=200, trim_max_iter=60)
        return self._trim(np.asarray(dv, float), st).cd


def evaluate_design(case: WingCase, dv, mode="flexible", settings=None) -> DesignEvaluation:
    """One-shot evaluation: trimmed C_D, C_L, constraints and the design gradient."""
    return DesignEvaluator(case, mode, settings).evaluate(dv)


# ----------------------------------------------------------------------
@dataclass
class OptimizationProblem:
    evaluator: DesignEvaluator
    dv0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    settings: DriverSettings

    def __post_init__(self):
        self.dv0 = np.asarray(self.dv0, float)
        self.lower = np.asarray(self.lower, float)
        self.upper = np.asarray(self.upper, float)
        if np.any(self.evaluator.case.constraints.minima <= 0):
            raise ValueError("thickness minima must be positive")
        if np.any(self.dv0 < self.lower) or np.any(self.dv0 > self.upper):
            raise ValueError("bounds do not contain the initial design")

    @classmethod
    def for_case(cls, case: WingCase, mode="flexible", settings: DriverSettings | None = None):
        st = settings or DriverSettings()
        n = case.ffd.n_design
        return cls(DesignEvaluator(case, mode, st), np.zeros(n), np.full(n, -st.bound),
                   np.full(n, st.bound), st)


@dataclass
class FdCheck:
    iteration: int
    component: int
    adjoint: float
    finite_difference: float
    relative_error: float


@dataclass
class OptimizationOutcome:
    dv: np.ndarray
    history: list
    status: int
    message: str
    kkt: float
    baseline: DesignEvaluation
    final: DesignEvaluation
    fd_checks: list

    @property
    def reduction_percent(self):
        return 100.0 * (self.baseline.cd - self.final.cd) / self.baseline.cd


def spot_check(evaluator: DesignEvaluator, ev: DesignEvaluation, iteration, components, step,
               map_fn=map):
    """Central differences of the trimmed C_D against the adjoint gradient."""
    def probe(args):
        k, sgn = args
        x = ev.dv.copy()
        x[k] += sgn * step
        return evaluator.probe_cd(x)

    jobs = [(int(k), s) for k in components for s in (1.0, -1.0)]
    vals = list(map_fn(probe, jobs))
    scale = np.abs(ev.gradient).max()
    out = []
    for n, k in enumerate(components):
        fd = (vals[2 * n] - vals[2 * n + 1]) / (2 * step)
        g = float(ev.gradient[k])
        out.append(FdCheck(iteration, int(k), g, fd, abs(fd - g) / max(abs(g), 1e-3 * scale)))
    return out


def optimize(problem: OptimizationProblem) -> OptimizationOutcome:
    """SQP on the trimmed drag; returns the optimum design and its history."""
    st = problem.settings
    ev = problem.evaluator
    pool = ThreadPoolExecutor(st.threads) if st.threads > 1 else None
    map_fn = pool.map if pool is not None else map
    try:
        base = ev.evaluate(problem.dv0)
        ev.accept(problem.dv0)
        scale = 1.0 / base.cd
        rng = np.random.default_rng(st.fd_check_seed)
        comps = np.sort(rng.choice(ev.n_design, size=min(st.fd_check_components, ev.n_design),
                                   replace=False))
        checks = spot_check(ev, base, 0, comps, st.fd_check_step, map_fn)
        history = []

        def fun(x):
            e = ev.evaluate(x, gradient=False)
            return e.cd * scale, e.constraints

        def grad(x):
            e = ev.evaluate(x, gradient=True)
            return e.gradient * scale, e.constraint_jacobian

        def callback(rec):
            ev.accept(rec["x"])
            e = ev.anchor
            history.append((rec["iteration"], e.cd, e.cl, rec["max_violation"],
                            float(np.linalg.norm(e.gradient)), rec["step_norm"],
                            float(np.rad2deg(e.alpha)), e.tip_deflection))

        sq = SqpSettings(max_iter=st.max_iter, gradient_tol=st.gradient_tol,
                         constraint_tol=st.constraint_tol)
        try:
            res = minimize(fun, grad, problem.dv0, problem.lower, problem.upper, sq, callback)
        except EvaluatorError as exc:
            raise OptimizationError(str(exc), history, exc.iteration, exc.x) from exc
        final = ev.evaluate(res.x)
        if res.iterations > 0:
            checks += spot_check(ev, final, res.iterations, comps, st.fd_check_step, map_fn)
    finally:
        if pool is not None:
            pool.shutdown()
    return OptimizationOutcome(res.x, history, res.status, res.message, res.kkt, base, final, checks)


class OptimizationError(RuntimeError):
    """An evaluation failed inside the optimizer; exit status 3."""

    exit_code = EVALUATOR_FAILURE

    def __init__(self, message, history, iteration, x):
        super().__init__(message)
        self.history = history
        self.iteration = iteration
        self.x = x


# ----------------------------------------------------------------------
def format_history(rows) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for r in rows:
        lines.append(",".join([str(int(r[0]))] + [fmt(v) for v in r[1:]]))
    return "\n".join(lines) + "\n"


def parse_history(text: str):
    lines = text.strip().splitlines()
    if tuple(lines[0].split(",")) != HISTORY_COLUMNS:
        raise ValueError(f"unexpected history header {lines[0]!r}")
    return [(int(p[0]),) + tuple(float(v) for v in p[1:]) for p in (ln.split(",") for ln in lines[1:])]


def format_report(outcome: OptimizationOutcome, mode: str) -> str:
    """Final report as ``key = value`` lines."""
    o = outcome
    items = [
        ("mode", mode),
        ("status", {CONVERGED: "converged", MAX_ITERATIONS: "max_iterations"}.get(o.status, "failed")),
        ("exit_code", str(o.status)),
        ("message", o.message),
        ("iterations", str(o.history[-1][0] if o.history else 0)),
        ("kkt_residual", fmt(o.kkt)),
        ("baseline.C_D", fmt(o.baseline.cd)),
        ("baseline.C_L", fmt(o.baseline.cl)),
        ("baseline.alpha_deg", fmt(np.rad2deg(o.baseline.alpha))),
        ("final.C_D", fmt(o.final.cd)),
        ("final.C_L", fmt(o.final.cl)),
        ("final.alpha_deg", fmt(np.rad2deg(o.final.alpha))),
        ("final.tip_deflection", fmt(o.final.tip_deflection)),
        ("final.min_constraint", fmt(o.final.constraints.min())),
        ("reduction_percent", fmt(o.reduction_percent)),
        ("dv", " ".join(fmt(v) for v in o.dv)),
    ]
    for c in o.fd_checks:
        items.append((f"fd_check.{c.iteration}.{c.component}",
                      f"{fmt(c.adjoint)} {fmt(c.finite_difference)} {fmt(c.relative_error)}"))
    return "".join(f"{k} = {v}\n" for k, v in items)


# ----------------------------------------------------------------------
@dataclass
class ComparisonRow:
    configuration: str
    cd: float
    diff_percent: float | None


def compare_flying_shapes(case: WingCase, dv_aswso, dv_awso, settings: DriverSettings | None = None):
    """Flexible trimmed C_D of both optima and the baseline.

    Differences are percentages above the aerostructural optimum.
    """
    ev = DesignEvaluator(case, "flexible", settings)
    n = case.ffd.n_design
    rows = []
    for name, dv in (("ASWSO optimum", dv_aswso), ("AWSO optimum", dv_awso),
                     ("Original", np.zeros(n))):
        rows.append((name, ev.evaluate(dv, gradient=False).cd))
    return comparison_rows(rows)


def comparison_rows(pairs):
    ref = pairs[0][1]
    return [ComparisonRow(name, cd, None if i == 0 else 100.0 * (cd - ref) / ref)
            for i, (name, cd) in enumerate(pairs)]


def format_comparison(rows) -> str:
    lines = ["Configuration,C_D,Diff. %"]
    for r in rows:
        lines.append(f"{r.configuration},{fmt(r.cd)},{'--' if r.diff_percent is None else fmt(r.diff_percent)}")
    return "\n".join(lines) + "\n"
