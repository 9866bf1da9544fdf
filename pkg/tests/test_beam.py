import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from aerostruct.beam import (BeamSolver, StructuralModel, StructuralSettings, format_structure,
                             parse_structure)
from aerostruct.cases import desk_wing
from aerostruct.fileio import FormatError

E, G, A, I, J = 70e9, 27e9, 1e-3, 1e-7, 2e-7
L = 2.0


def cantilever(n_el=20, rigid=False):
    x = np.linspace(0.0, L, n_el + 1)
    coords = np.c_[x, np.zeros_like(x), np.zeros_like(x)]
    beams = np.c_[np.arange(n_el), np.arange(1, n_el + 1)]
    props = np.tile([E, G, A, I, I, J], (n_el, 1))
    fixed = np.zeros((n_el + 1, 6), bool)
    fixed[0] = True
    rig = np.zeros((0, 2), int)
    if rigid:
        coords = np.vstack([coords, [L, 0.1, 0.05]])
        rig = np.array([[n_el, n_el + 1]])
        fixed = np.vstack([fixed, np.zeros(6, bool)])
    return StructuralModel(coords, beams, props, rig, fixed)


def tip_load(model, P, node=None):
    f = np.zeros(model.n_dof)
    node = len(model.beams) if node is None else node
    f[6 * node + 2] = P
    return f


def elastica_tip(alpha):
    """Vertical tip deflection / L of a cantilever under a dead end load.

    Shooting on theta'' = -alpha cos(theta) with theta(0) = 0, theta'(1) = 0.
    """
    def shoot(k0):
        sol = solve_ivp(lambda s, y: [y[1], -alpha * np.cos(y[0]), np.sin(y[0])],
                        (0, 1), [0.0, k0, 0.0], rtol=1e-12, atol=1e-12)
        return sol.y[:, -1]
    k0 = brentq(lambda k: shoot(k)[1], 0.0, alpha + 1.0, xtol=1e-14)
    return shoot(k0)[2]


def test_linear_tip_deflection():
    m = cantilever()
    P = 1e-3 * 3 * E * I / L ** 3          # tip deflection 1e-3 L: linear regime
    u, _ = BeamSolver(m).solve(tip_load(m, P))
    exact = P * L ** 3 / (3 * E * I)
    assert u[6 * 20 + 2] == pytest.approx(exact, rel=5e-3)


def test_elastica_large_deflection():
    m = cantilever(40)
    alpha = 2.0
    P = alpha * E * I / L ** 2
    u, info = BeamSolver(m, StructuralSettings(load_steps=10)).solve(tip_load(m, P))
    assert u[6 * 40 + 2] / L == pytest.approx(elastica_tip(alpha), rel=1e-2)
    assert info.iterations > 10


def test_elastica_oracle_small_load_limit():
    # independent check of the quadrature oracle itself
    assert elastica_tip(1e-4) == pytest.approx(1e-4 / 3, rel=1e-3)


def random_state(model, rng, amp=0.05, rot=0.3):
    u = np.zeros(model.n_dof)
    u.reshape(-1, 6)[:, :3] = amp * rng.standard_normal((model.n_nodes, 3))
    u.reshape(-1, 6)[:, 3:] = rot * rng.standard_normal((model.n_nodes, 3))
    u[~model.free] = 0.0
    return u


@pytest.mark.parametrize("which", ["cantilever", "wing"])
def test_tangent_matches_finite_differences(which, rng):
    model = cantilever(6, rigid=True) if which == "cantilever" else \
        desk_wing(nc=2, ns=2, n_beam=4).structure
    solver = BeamSolver(model)
    worst = 0.0
    for _ in range(20 if which == "cantilever" else 5):
        u = random_state(model, rng)
        _, K = solver.force_and_tangent(u)
        Kfd = np.zeros_like(K)
        h = 1e-6
        for k in range(model.n_dof):
            e = np.zeros(model.n_dof)
            e[k] = h
            Kfd[:, k] = (solver.internal_force(u + e) - solver.internal_force(u - e)) / (2 * h)
        worst = max(worst, np.linalg.norm(K - Kfd) / np.linalg.norm(K))
        assert np.allclose(K, K.T, rtol=0, atol=1e-9 * np.abs(K).max())
    assert worst <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1.2, 1.2), min_size=3, max_size=3),
       st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_rigid_body_motion_is_stress_free(rotvec, shift):
    m = cantilever(5, rigid=True)
    m.fixed[:] = False
    R = Rotation.from_rotvec(rotvec)
    u = np.zeros(m.n_dof).reshape(-1, 6)
    u[:, :3] = R.apply(m.coords) - m.coords + np.array(shift)
    u[:, 3:] = rotvec
    f = BeamSolver(m).internal_force(u.reshape(-1))
    scale = E * A / (L / 5)
    assert np.abs(f).max() <= 1e-8 * scale


def test_residual_is_zero_at_clamped_dofs():
    m = cantilever(4)
    s = BeamSolver(m)
    r = s.residual(np.zeros(m.n_dof), tip_load(m, 1.0))
    assert np.all(r[:6] == 0)


def test_structure_file_round_trip():
    m = desk_wing(nc=2, ns=2, n_beam=5).structure
    text = format_structure(m)
    m2 = parse_structure(text)
    for a in ("coords", "beams", "props", "rigid", "fixed", "node_ids", "beam_ids", "rigid_ids"):
        np.testing.assert_array_equal(getattr(m, a), getattr(m2, a))
    assert format_structure(m2) == text


@pytest.mark.parametrize("text,fragment", [
    ("NODES\n1 0 0\n", "NODES expects"),
    ("NODES\n1 0 0 0\n2 1 0 0\nBEAMS\n1 1 3 1 1 1 1 1 1\n", "unknown node id 3"),
    ("NODES\n1 0 0 0\nBC\n1 1 1 1 1 1 2\n", "0/1 flags"),
    ("1 0 0 0\n", "before the first section"),
])
def test_structure_format_errors(text, fragment):
    with pytest.raises(FormatError, match=fragment):
        parse_structure(text)


def test_fixed_point_adjoint_against_tape():
    # the analytic adjoint step agrees with the recorded S on free DOFs
    m = cantilever(6)
    s = BeamSolver(m)
    f = tip_load(m, 50.0)
    u, _ = s.solve(f)
    fp = s.fixed_point(u, f)
    rng = np.random.default_rng(1)
    ub = rng.standard_normal(m.n_dof)
    rhs = rng.standard_normal(m.n_dof)
    new, fbar = fp.adjoint_step(ub, rhs)
    du_bar, _ = fp.vjp(ub)
    free = m.free
    assert np.abs(du_bar[free]).max() <= 1e-6 * np.abs(ub).max()
    # dS/df is the frozen inverse tangent on free DOFs
    Kf = s.tangent(u)[np.ix_(free, free)]
    np.testing.assert_allclose(fbar[free], np.linalg.solve(Kf.T, rhs[free]), rtol=1e-9,
                               atol=1e-12 * np.abs(fbar).max())
    np.testing.assert_array_equal(fbar[~free], 0.0)
