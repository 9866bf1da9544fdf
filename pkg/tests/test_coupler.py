from dataclasses import replace

import numpy as np
import pytest

from aerostruct.coupler import CouplingError, parse_history_csv
from aerostruct.vlm import VlmSolver


def test_converged_state_satisfies_all_fixed_points(small_case):
    prob = small_case.problem(settings=replace(small_case.coupler_settings, tol=1e-12))
    s = prob.solve_primal()
    res = prob.residuals(s)
    scale = np.linalg.norm(s.u_f)
    for name in ("fluid", "surface", "spline", "load_transfer", "loads"):
        assert res[name] <= 1e-9 * max(1.0, np.linalg.norm(s.f_f)), name
    assert res["mesh"] <= 1e-10 * max(scale, 1.0)
    assert res["structure"] <= 1e-9 * scale


@pytest.mark.parametrize("omega", [0.5, 1.0])
def test_relaxation_does_not_change_the_solution(small_case, omega):
    tol = 1e-8
    ref = small_case.problem(settings=replace(small_case.coupler_settings, omega=0.7, tol=tol,
                                              max_iter=200)).solve_primal()
    s = small_case.problem(settings=replace(small_case.coupler_settings, omega=omega, tol=tol,
                                            max_iter=200)).solve_primal()
    assert np.linalg.norm(s.u_f - ref.u_f) <= 10 * tol * np.linalg.norm(ref.u_f)
    assert s.cl == pytest.approx(ref.cl, rel=10 * tol)


def test_rigid_limit_matches_standalone_aerodynamics(small_case):
    s = small_case.problem(stiffness_scale=1e9).solve_primal()
    f = VlmSolver(small_case.lattice, small_case.flow).solve_flow()
    assert abs(s.cl - f.cl) <= 1e-6 * abs(f.cl)
    assert abs(s.cd - f.cd) <= 1e-6 * abs(f.cd)


def test_flexibility_changes_the_loads(small_case):
    flex = small_case.problem().solve_primal()
    rigid = small_case.problem(stiffness_scale=1e9).solve_primal()
    assert abs(flex.cl - rigid.cl) > 1e-3 * abs(rigid.cl)
    assert flex.u_s.any()


@pytest.mark.parametrize("target", [0.2, 0.45])
def test_trim_reaches_target(small_case, target):
    s = small_case.problem().trim_to_cl(target)
    assert abs(s.cl - target) <= 1e-6


def test_nonconvergence_carries_state(small_case):
    prob = small_case.problem(settings=replace(small_case.coupler_settings, max_iter=2))
    with pytest.raises(CouplingError) as err:
        prob.solve_primal()
    assert err.value.state.iterations == 2
    quiet = replace(small_case.coupler_settings, max_iter=2, raise_on_failure=False)
    assert not small_case.problem(settings=quiet).solve_primal().converged


def test_history_csv_round_trip(small_case):
    s = small_case.problem().solve_primal()
    rows = parse_history_csv(s.history_csv())
    assert rows == [tuple(float(v) if i else int(v) for i, v in enumerate(r)) for r in s.history]
    assert s.history_csv().splitlines()[0] == "iteration,residual,C_L,C_D,tip_deflection"


@pytest.fixture(scope="module")
def tight(small_case):
    st = replace(small_case.coupler_settings, tol=1e-13, max_iter=200, adj_tol=1e-13,
                 adj_max_iter=400, omega=1.0)
    prob = small_case.problem(settings=st)
    return prob, prob.solve_primal()


def test_coupled_adjoint_matches_finite_differences(small_case, tight, rng):
    prob, base = tight
    g, ga = prob.gradient(base, (0.0, 1.0))
    g = g.reshape(-1, 3)
    h = 1e-6
    for _ in range(4):
        k, c = rng.integers(prob.nb), 2
        e = np.zeros((prob.nb, 3))
        e[k, c] = h
        fd = (prob.solve_primal(e, warm=base).cd - prob.solve_primal(-e, warm=base).cd) / (2 * h)
        assert g[k, c] == pytest.approx(fd, rel=1e-5, abs=1e-7 * np.abs(g).max())
    a = base.alpha
    fa = (prob.solve_primal(None, a + h, warm=base).cd
          - prob.solve_primal(None, a - h, warm=base).cd) / (2 * h)
    assert ga == pytest.approx(fa, rel=1e-6)


def test_lift_adjoint_and_trimmed_gradient(small_case, tight):
    prob, base = tight
    gd, info = prob.trimmed_gradient(base)
    gl, al = prob.gradient(base, (1.0, 0.0))
    assert info["dcl_dalpha"] == pytest.approx(al)
    # lift sensitivity to one surface displacement
    e = np.zeros((prob.nb, 3))
    e[-1, 2] = 1e-6
    dcl = (prob.solve_primal(e, warm=base).cl - base.cl) / 1e-6
    assert dcl == pytest.approx(gl.reshape(-1, 3)[-1, 2], rel=1e-4)
