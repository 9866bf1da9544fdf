"""Interface spline, spring-analogy mesh deformation and FFD parametrization."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from aerostruct.cases import desk_wing, naca_thickness
from aerostruct.ffd import (EmbeddingError, FfdBox, ThicknessConstraints, closed_surface,
                            format_ffd, parse_ffd, sharp_edge_mask)
from aerostruct.fileio import FormatError, format_matrix_coo, parse_matrix_coo
from aerostruct.meshdef import LatticeDeformer, SpringMesh
from aerostruct.spline import ConditioningError, InterfaceSpline, structural_coupling
from aerostruct.vlm import VlmSolver


@pytest.fixture(scope="module")
def wing():
    return desk_wing(nc=4, ns=6, n_beam=7)


# ---------------------------------------------------------------- spline
def test_rows_sum_to_one_and_reproduce_affine_fields(wing):
    H = wing.spline.H
    np.testing.assert_allclose(np.asarray(H.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    donors, recv = wing.spline.donors, wing.spline.receivers
    Aff = np.array([[0.1, -0.2, 0.3], [0.05, 0.4, -0.1], [0.2, 0.1, 0.7]])
    c = np.array([0.01, -0.02, 0.03])
    np.testing.assert_allclose(H @ (donors @ Aff.T + c), recv @ Aff.T + c, atol=1e-10)


def test_coincident_receiver_is_a_selector():
    donors = np.random.default_rng(0).standard_normal((15, 3))
    s = InterfaceSpline(donors, donors[[3, 7]])
    np.testing.assert_array_equal(s.H.toarray()[0], np.eye(15)[3])


def test_degenerate_donor_cloud_is_reported():
    donors = np.c_[np.linspace(0, 1, 8), np.zeros(8), np.zeros(8)]
    with pytest.raises(ConditioningError) as err:
        InterfaceSpline(donors, [[0.5, 0.3, 0.0]])
    assert err.value.receiver == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_virtual_work_is_conserved(seed):
    w = desk_wing(nc=2, ns=3, n_beam=4)
    H = structural_coupling(w.spline, w.structure.n_dof)
    r = np.random.default_rng(seed)
    u_s, f_f = r.standard_normal(H.shape[1]), r.standard_normal(H.shape[0])
    lhs, rhs = u_s @ (H.T @ f_f), (H @ u_s) @ f_f
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * np.abs(f_f).sum())


def test_coupling_matrix_round_trip(wing):
    H = structural_coupling(wing.spline, wing.structure.n_dof)
    H2 = parse_matrix_coo(format_matrix_coo(H))
    assert H2.shape == H.shape
    assert (H2 != H).nnz == 0


# ---------------------------------------------------------------- spring mesh
def test_spring_mesh_reproduces_rigid_translation():
    x, y = np.meshgrid(np.arange(5.0), np.arange(4.0), indexing="ij")
    nodes = np.c_[x.ravel(), y.ravel(), np.zeros(20)]
    idx = np.arange(20).reshape(5, 4)
    edges = np.r_[np.c_[idx[:-1].ravel(), idx[1:].ravel()], np.c_[idx[:, :-1].ravel(), idx[:, 1:].ravel()]]
    boundary = np.r_[idx[0], idx[-1], idx[1:-1, 0], idx[1:-1, -1]]
    m = SpringMesh(nodes, edges, boundary)
    u = m.deform(np.tile([0.1, -0.2, 0.3], (len(boundary), 1)))
    np.testing.assert_allclose(u, np.tile([0.1, -0.2, 0.3], (20, 1)), atol=1e-12)


def test_spring_mesh_rejects_disconnected_nodes():
    nodes = np.array([[0, 0, 0], [1, 0, 0], [5, 5, 0], [6, 5, 0]], float)
    with pytest.raises(ValueError, match="without a path"):
        SpringMesh(nodes, [[0, 1], [2, 3]], [0])


def test_lattice_deformer_adjoint_is_transpose(wing, rng):
    d = LatticeDeformer(VlmSolver(wing.lattice, wing.flow))
    u = rng.standard_normal((d.vlm.nb, 3))
    zb = rng.standard_normal((d.vlm.n_nodes, 3))
    z = d.deform(u, wing.flow.alpha) - d.deform(np.zeros_like(u), wing.flow.alpha)
    assert np.sum(z * zb) == pytest.approx(np.sum(u * d.adjoint(zb)), rel=1e-12)


# ---------------------------------------------------------------- FFD
def test_point_inversion_and_linear_precision(rng):
    box = FfdBox.box([0, 0, -1], [2, 3, 1], (3, 2, 2))
    pts = rng.uniform([0, 0, -1], [2, 3, 1], (40, 3))
    emb = box.embed(pts)
    np.testing.assert_allclose(box.evaluate(emb.params), pts, atol=1e-9)
    # uniform control-point shift moves every embedded point by the same amount
    dv = np.full(box.n_design, 0.25)
    np.testing.assert_allclose(emb.displace_surface(dv)[:, 2], 0.25, atol=1e-12)


def test_points_outside_volume_are_rejected():
    box = FfdBox.box([0, 0, 0], [1, 1, 1])
    with pytest.raises(EmbeddingError):
        box.embed([[1.5, 0.5, 0.5]])


def test_frozen_control_points_do_not_move_root(wing):
    box = wing.ffd
    assert box.n_design < box.n_cp
    dv = np.random.default_rng(3).standard_normal(box.n_design)
    u = wing.camber.displace_surface(dv).reshape(wing.lattice.nodes.shape)
    np.testing.assert_allclose(u[:, 0], 0.0, atol=1e-14)


def test_gradient_projection_is_transpose_of_displacement(wing, rng):
    dv = rng.standard_normal(wing.ffd.n_design)
    g = rng.standard_normal((wing.lattice.n_bound, 3))
    lhs = np.sum(g * wing.camber.displace_surface(dv))
    assert lhs == pytest.approx(dv @ wing.camber.project_gradient(g), rel=1e-12)


def test_ffd_file_round_trip(wing):
    stations = (wing.constraints.stations, wing.constraints.minima)
    text = format_ffd(wing.ffd, stations)
    box, (ys, mins) = parse_ffd(text)
    np.testing.assert_array_equal(box.control_points, wing.ffd.control_points)
    np.testing.assert_array_equal(box.frozen, wing.ffd.frozen)
    np.testing.assert_array_equal(ys, stations[0])
    np.testing.assert_array_equal(mins, stations[1])
    assert format_ffd(box, (ys, mins)) == text


def test_ffd_format_errors():
    with pytest.raises(FormatError, match="expected 8 control points"):
        parse_ffd("ORDER\n1 1 1\nCONTROL_POINTS\n0 0 0\n")
    with pytest.raises(FormatError, match="out of range"):
        parse_ffd("ORDER\n0 0 0\nCONTROL_POINTS\n0 0 0\nFROZEN\n4\n")


def test_thickness_ratio_of_baseline(wing):
    # piecewise-linear section through the lattice nodes, sampled at 200 points
    r = wing.constraints.ratios(wing.upper0, wing.lower0)
    xn = np.linspace(0.0, 1.0, wing.lattice.nc + 1)
    oracle = np.interp(np.linspace(0, 1, 200), xn, naca_thickness(xn, 0.12)).max()
    np.testing.assert_allclose(r, oracle, rtol=1e-12)
    np.testing.assert_allclose(wing.constraints.values(wing.upper0, wing.lower0), 0.0, atol=1e-15)


def test_twist_about_leading_edge_keeps_thickness():
    c = ThicknessConstraints([0.5], [0.0])
    x = np.linspace(0, 1, 11)
    up = np.stack(np.meshgrid(x, [0.0, 1.0], indexing="ij"), -1)
    up = np.concatenate([up, 0.05 * np.ones(up.shape[:2] + (1,))], -1)
    lo = up.copy()
    lo[..., 2] = -0.05
    base = c.ratios(up, lo)
    shift = -0.1 * up[..., 0]
    up2, lo2 = up.copy(), lo.copy()
    up2[..., 2] += shift
    lo2[..., 2] += shift
    np.testing.assert_allclose(c.ratios(up2, lo2), base, rtol=1e-12)


def test_sharp_edges_of_closed_surface(wing):
    nodes, quads, cmap = closed_surface(wing.lattice)
    sharp = sharp_edge_mask(nodes, quads, 60.0)
    assert sharp.any() and not sharp.all()
    assert len(cmap) == wing.lattice.n_bound
