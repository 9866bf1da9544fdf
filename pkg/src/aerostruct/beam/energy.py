"""Strain energies of corotational beam elements and penalty rigid links.

Both functions are written against :mod:`aerostruct.autodiff.ops`, so they
run on plain (real or complex) arrays or on tape values. Element DOF vectors
have shape ``(..., n_el, 12)``: node a ``[u, psi]`` then node b ``[u, psi]``,
where ``psi`` is the total rotation vector of the node.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ops as ad

_EYE = np.eye(3)


def _coefficients(psi):
    """Rodrigues coefficients sin(t)/t and (1 - cos t)/t^2 of |psi| = t."""
    t2 = ad.dot(psi, psi)
    small = np.real(ad.value_of(t2)) < 1e-4
    t2s = ad.where(small, 1.0, t2)
    t = ad.sqrt(t2s)
    s = ad.sin(0.5 * t)
    a_ex = ad.sin(t) / t
    b_ex = 2.0 * s * s / t2s
    a_se = 1.0 + t2 * (-1.0 / 6.0 + t2 * (1.0 / 120.0 - t2 / 5040.0))
    b_se = 0.5 + t2 * (-1.0 / 24.0 + t2 * (1.0 / 720.0 - t2 / 40320.0))
    return ad.where(small, a_se, a_ex), ad.where(small, b_se, b_ex)


def rotate_delta(psi, v, coef=None):
    """Return ``(R(psi) - I) v`` without forming ``R``."""
    a, b = _coefficients(psi) if coef is None else coef
    c1 = ad.cross(psi, v)
    return a[..., None] * c1 + b[..., None] * ad.cross(psi, c1)


def rotation_matrix(psi):
    """Plain numpy rotation matrix of a rotation vector (for post-processing)."""
    psi = np.asarray(psi, float)
    return np.stack([_EYE[k] + rotate_delta(psi, _EYE[k]) for k in range(3)], axis=-1)


def _local_rotations(e1, e2, e3, t1, t2, t3):
    return (0.5 * (ad.dot(e3, t2) - ad.dot(e2, t3)),
            0.5 * (ad.dot(e1, t3) - ad.dot(e3, t1)),
            0.5 * (ad.dot(e2, t1) - ad.dot(e1, t2)))


def beam_energy(q, dX, L0, frame, kbeam):
    """Per-element strain energy, shape ``q.shape[:-1]``.

    ``frame[e]`` holds the reference axes as rows; ``kbeam[e]`` is
    ``[EA/L, GJ/L, EIy/L, EIz/L]``.
    """
    da, pa, db, pb = q[..., 0:3], q[..., 3:6], q[..., 6:9], q[..., 9:12]
    dd = db - da
    dl2 = 2.0 * ad.dot(dd, dX) + ad.dot(dd, dd)       # l^2 - L0^2 without cancellation
    l = ad.sqrt(L0 * L0 + dl2)
    ul = dl2 / (l + L0)
    e1 = (dX + dd) / l[..., None]

    ca, cb = _coefficients(pa), _coefficients(pb)
    E = [frame[:, k, :] for k in range(3)]
    ta = [E[k] + rotate_delta(pa, E[k], ca) for k in range(3)]
    tb = [E[k] + rotate_delta(pb, E[k], cb) for k in range(3)]
    p = 0.5 * (ta[1] + tb[1])
    c = ad.cross(e1, p)
    e3 = c / ad.norm(c)[..., None]
    e2 = ad.cross(e3, e1)
    a1, a2, a3 = _local_rotations(e1, e2, e3, *ta)
    b1, b2, b3 = _local_rotations(e1, e2, e3, *tb)

    k_ax, k_t, k_y, k_z = kbeam[:, 0], kbeam[:, 1], kbeam[:, 2], kbeam[:, 3]
    tw = b1 - a1
    return (0.5 * k_ax * ul * ul + 0.5 * k_t * tw * tw
            + 2.0 * k_y * (a2 * a2 + a2 * b2 + b2 * b2)
            + 2.0 * k_z * (a3 * a3 + a3 * b3 + b3 * b3))


def rigid_energy(q, r0, k_trans, k_rot):
    """Penalty energy of rigid links (master DOFs first, then slave DOFs)."""
    dm, pm, ds, ps = q[..., 0:3], q[..., 3:6], q[..., 6:9], q[..., 9:12]
    cm, cs = _coefficients(pm), _coefficients(ps)
    gap = (ds - dm) - rotate_delta(pm, r0, cm)
    mis = 0.0
    for k in range(3):
        dm_k = rotate_delta(pm, _EYE[k], cm)
        ds_k = rotate_delta(ps, _EYE[k], cs)
        mis = mis + ad.cross(_EYE[k], ds_k) + ad.cross(dm_k, _EYE[k]) + ad.cross(dm_k, ds_k)
    mis = 0.5 * mis
    return 0.5 * k_trans * ad.dot(gap, gap) + 0.5 * k_rot * ad.dot(mis, mis)
