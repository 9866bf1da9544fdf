"""Biot-Savart kernels for straight vortex segments and their adjoints.

A segment from ``a`` to ``b`` with unit circulation induces at ``p``

    v = (r1 x r2) s / (4 pi (|r1 x r2|^2 + delta^2 s^2 / 4)),
    s = r0 . (r1/|r1| - r2/|r2|)

with ``r1 = p - a``, ``r2 = p - b``, ``r0 = b - a`` and core radius
``delta``. Beside the segment ``s`` is close to ``2 |r0|`` and the core
acts like a Rankine core of radius ``delta``. Beyond the ends ``s``
vanishes quadratically with the distance to the axis, so points on the
extension of a segment keep the unregularized velocity, which is smooth
and linear in the offset. There ``s`` is evaluated as ``K |r1 x r2|^2``
with

    K = (1/|r2|^2 - 1/|r1|^2) / (|r0| (cos b1 + cos b2)),

which avoids the cancellation in ``r1/|r1| - r2/|r2|`` and stays exact
on the axis itself. Points lying on the segment get zero velocity. With
``sym`` set, every segment has a mirror image in the ``y = 0`` plane
traversed in the opposite direction.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_INV4PI = 1.0 / (4.0 * np.pi)
_ON_SEGMENT = 1e-10      # relative angle below which a point beside a segment is on it


@njit(cache=True)
def _outside(e1, e2, n1, n2, lo):
    """True when the point projects beyond an end, well away from the side."""
    return e1 * e2 > 0.0 and abs(e1 / n1 + e2 / n2) > lo


@njit(cache=True)
def _vel(a0, a1, a2, b0, b1, b2, p0, p1, p2, core2):
    r10 = p0 - a0
    r11 = p1 - a1
    r12 = p2 - a2
    r20 = p0 - b0
    r21 = p1 - b1
    r22 = p2 - b2
    c0 = r11 * r22 - r12 * r21
    c1 = r12 * r20 - r10 * r22
    c2 = r10 * r21 - r11 * r20
    n1 = np.sqrt(r10 * r10 + r11 * r11 + r12 * r12)
    n2 = np.sqrt(r20 * r20 + r21 * r21 + r22 * r22)
    if n1 == 0.0 or n2 == 0.0:
        return 0.0, 0.0, 0.0
    o0 = b0 - a0
    o1 = b1 - a1
    o2 = b2 - a2
    lo = np.sqrt(o0 * o0 + o1 * o1 + o2 * o2)
    if lo == 0.0:
        return 0.0, 0.0, 0.0
    cc = c0 * c0 + c1 * c1 + c2 * c2
    e1 = o0 * r10 + o1 * r11 + o2 * r12
    e2 = o0 * r20 + o1 * r21 + o2 * r22
    if _outside(e1, e2, n1, n2, lo):
        S = (e1 / n1 + e2 / n2) / lo
        K = (1.0 / (n2 * n2) - 1.0 / (n1 * n1)) / (lo * S)
        k = _INV4PI * K / (1.0 + 0.25 * core2 * K * K * cc)
        return k * c0, k * c1, k * c2
    if cc <= (_ON_SEGMENT * n1 * n2) ** 2:
        return 0.0, 0.0, 0.0
    s = (o0 * (r10 / n1 - r20 / n2) + o1 * (r11 / n1 - r21 / n2)
         + o2 * (r12 / n1 - r22 / n2))
    den = cc + 0.25 * core2 * s * s
    k = _INV4PI * s / den
    return k * c0, k * c1, k * c2


@njit(cache=True)
def _vel_vjp(a0, a1, a2, b0, b1, b2, p0, p1, p2, core2, y0, y1, y2, out):
    """Adjoints w.r.t. r1 and r2 of ``y . v``; stored in out[0:3], out[3:6]."""
    x0 = p0 - a0
    x1 = p1 - a1
    x2 = p2 - a2
    q0 = p0 - b0
    q1 = p1 - b1
    q2 = p2 - b2
    o0 = x0 - q0
    o1 = x1 - q1
    o2 = x2 - q2
    c0 = x1 * q2 - x2 * q1
    c1 = x2 * q0 - x0 * q2
    c2 = x0 * q1 - x1 * q0
    n1 = np.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    n2 = np.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
    lo = np.sqrt(o0 * o0 + o1 * o1 + o2 * o2)
    for i in range(6):
        out[i] = 0.0
    if n1 == 0.0 or n2 == 0.0 or lo == 0.0:
        return
    cc = c0 * c0 + c1 * c1 + c2 * c2
    kap = 0.25 * core2
    g = y0 * c0 + y1 * c1 + y2 * c2
    e1 = o0 * x0 + o1 * x1 + o2 * x2
    e2 = o0 * q0 + o1 * q1 + o2 * q2
    if _outside(e1, e2, n1, n2, lo):
        S = (e1 / n1 + e2 / n2) / lo
        D = 1.0 / (n2 * n2) - 1.0 / (n1 * n1)
        K = D / (lo * S)
        Q = 1.0 + kap * K * K * cc
        phi = _INV4PI * K / Q
        # y.v = g phi(K, cc)
        dcc = -_INV4PI * kap * K * K * K / (Q * Q)
        Kb = _INV4PI * g * (1.0 - kap * K * K * cc) / (Q * Q)
        cb0 = phi * y0 + 2.0 * g * dcc * c0
        cb1 = phi * y1 + 2.0 * g * dcc * c1
        cb2 = phi * y2 + 2.0 * g * dcc * c2
        Db = Kb / (lo * S)
        Lb = -Kb * K / lo
        Sb = -Kb * K / S
        # S = (e1/n1 + e2/n2) / lo
        e1b = Sb / (lo * n1)
        e2b = Sb / (lo * n2)
        Lb -= Sb * S / lo
        n1b = -Sb * e1 / (lo * n1 * n1) + Db * 2.0 / (n1 * n1 * n1)
        n2b = -Sb * e2 / (lo * n2 * n2) - Db * 2.0 / (n2 * n2 * n2)
        # e1 = o.r1, e2 = o.r2, o = r1 - r2
        out[0] = q1 * cb2 - q2 * cb1 + e1b * (x0 + o0) + e2b * q0 + n1b * x0 / n1 + Lb * o0 / lo
        out[1] = q2 * cb0 - q0 * cb2 + e1b * (x1 + o1) + e2b * q1 + n1b * x1 / n1 + Lb * o1 / lo
        out[2] = q0 * cb1 - q1 * cb0 + e1b * (x2 + o2) + e2b * q2 + n1b * x2 / n1 + Lb * o2 / lo
        out[3] = cb1 * x2 - cb2 * x1 - e1b * x0 + e2b * (o0 - q0) + n2b * q0 / n2 - Lb * o0 / lo
        out[4] = cb2 * x0 - cb0 * x2 - e1b * x1 + e2b * (o1 - q1) + n2b * q1 / n2 - Lb * o1 / lo
        out[5] = cb0 * x1 - cb1 * x0 - e1b * x2 + e2b * (o2 - q2) + n2b * q2 / n2 - Lb * o2 / lo
        return
    if cc <= (_ON_SEGMENT * n1 * n2) ** 2:
        return
    u10 = x0 / n1
    u11 = x1 / n1
    u12 = x2 / n1
    u20 = q0 / n2
    u21 = q1 / n2
    u22 = q2 / n2
    s = o0 * (u10 - u20) + o1 * (u11 - u21) + o2 * (u12 - u22)
    den = cc + kap * s * s
    f = _INV4PI / den
    t = 2.0 * g * s / den
    cb0 = f * (y0 * s - t * c0)
    cb1 = f * (y1 * s - t * c1)
    cb2 = f * (y2 * s - t * c2)
    sb = f * g * (1.0 - 2.0 * kap * s * s / den)
    ob0 = sb * (u10 - u20)
    ob1 = sb * (u11 - u21)
    ob2 = sb * (u12 - u22)
    d1 = sb * (o0 * u10 + o1 * u11 + o2 * u12)
    d2 = sb * (o0 * u20 + o1 * u21 + o2 * u22)
    # d(c . cbar)/dr1 = r2 x cbar ; d/dr2 = cbar x r1
    out[0] = q1 * cb2 - q2 * cb1 + ob0 + (sb * o0 - d1 * u10) / n1
    out[1] = q2 * cb0 - q0 * cb2 + ob1 + (sb * o1 - d1 * u11) / n1
    out[2] = q0 * cb1 - q1 * cb0 + ob2 + (sb * o2 - d1 * u12) / n1
    out[3] = cb1 * x2 - cb2 * x1 - ob0 - (sb * o0 - d2 * u20) / n2
    out[4] = cb2 * x0 - cb0 * x2 - ob1 - (sb * o1 - d2 * u21) / n2
    out[5] = cb0 * x1 - cb1 * x0 - ob2 - (sb * o2 - d2 * u22) / n2


@njit(cache=True)
def _pair(A, B, P, s, c, sym, core2):
    vx, vy, vz = _vel(A[s, 0], A[s, 1], A[s, 2], B[s, 0], B[s, 1], B[s, 2],
                      P[c, 0], P[c, 1], P[c, 2], core2)
    if sym:
        wx, wy, wz = _vel(A[s, 0], -A[s, 1], A[s, 2], B[s, 0], -B[s, 1], B[s, 2],
                          P[c, 0], P[c, 1], P[c, 2], core2)
        vx -= wx
        vy -= wy
        vz -= wz
    return vx, vy, vz


@njit(cache=True)
def _pair_vjp(A, B, P, s, c, sym, core2, y0, y1, y2, Abar, Bbar, Pbar, buf):
    _vel_vjp(A[s, 0], A[s, 1], A[s, 2], B[s, 0], B[s, 1], B[s, 2],
             P[c, 0], P[c, 1], P[c, 2], core2, y0, y1, y2, buf)
    for k in range(3):
        Abar[s, k] -= buf[k]
        Bbar[s, k] -= buf[3 + k]
        Pbar[c, k] += buf[k] + buf[3 + k]
    if sym:
        _vel_vjp(A[s, 0], -A[s, 1], A[s, 2], B[s, 0], -B[s, 1], B[s, 2],
                 P[c, 0], P[c, 1], P[c, 2], core2, -y0, -y1, -y2, buf)
        for k in range(3):
            sg = -1.0 if k == 1 else 1.0
            Abar[s, k] -= sg * buf[k]
            Bbar[s, k] -= sg * buf[3 + k]
            Pbar[c, k] += buf[k] + buf[3 + k]


@njit(cache=True)
def normalwash(A, B, P, N, sym, core2):
    """``M[c, s] = N[c] . v_s(P[c])`` for unit-strength segments."""
    nc, ns = P.shape[0], A.shape[0]
    M = np.empty((nc, ns))
    for c in range(nc):
        for s in range(ns):
            vx, vy, vz = _pair(A, B, P, s, c, sym, core2)
            M[c, s] = N[c, 0] * vx + N[c, 1] * vy + N[c, 2] * vz
    return M


@njit(cache=True)
def normalwash_vjp(A, B, P, N, sym, core2, Mbar):
    nc, ns = P.shape[0], A.shape[0]
    Abar = np.zeros_like(A)
    Bbar = np.zeros_like(B)
    Pbar = np.zeros_like(P)
    Nbar = np.zeros_like(N)
    buf = np.empty(6)
    for c in range(nc):
        for s in range(ns):
            m = Mbar[c, s]
            if m == 0.0:
                continue
            vx, vy, vz = _pair(A, B, P, s, c, sym, core2)
            Nbar[c, 0] += m * vx
            Nbar[c, 1] += m * vy
            Nbar[c, 2] += m * vz
            _pair_vjp(A, B, P, s, c, sym, core2, m * N[c, 0], m * N[c, 1], m * N[c, 2],
                      Abar, Bbar, Pbar, buf)
    return Abar, Bbar, Pbar, Nbar


@njit(cache=True)
def induced(A, B, P, G, sym, core2):
    """``V[m] = sum_s G[s] v_s(P[m])``."""
    nm, ns = P.shape[0], A.shape[0]
    V = np.zeros((nm, 3))
    for m in range(nm):
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for s in range(ns):
            g = G[s]
            if g == 0.0:
                continue
            vx, vy, vz = _pair(A, B, P, s, m, sym, core2)
            sx += g * vx
            sy += g * vy
            sz += g * vz
        V[m, 0] = sx
        V[m, 1] = sy
        V[m, 2] = sz
    return V


@njit(cache=True)
def induced_vjp_strength(A, B, P, sym, core2, Vbar):
    nm, ns = P.shape[0], A.shape[0]
    Gbar = np.zeros(ns)
    for m in range(nm):
        for s in range(ns):
            vx, vy, vz = _pair(A, B, P, s, m, sym, core2)
            Gbar[s] += Vbar[m, 0] * vx + Vbar[m, 1] * vy + Vbar[m, 2] * vz
    return Gbar


@njit(cache=True)
def induced_vjp_geometry(A, B, P, G, sym, core2, Vbar):
    nm, ns = P.shape[0], A.shape[0]
    Abar = np.zeros_like(A)
    Bbar = np.zeros_like(B)
    Pbar = np.zeros_like(P)
    buf = np.empty(6)
    for m in range(nm):
        for s in range(ns):
            g = G[s]
            if g == 0.0:
                continue
            _pair_vjp(A, B, P, s, m, sym, core2, g * Vbar[m, 0], g * Vbar[m, 1],
                      g * Vbar[m, 2], Abar, Bbar, Pbar, buf)
    return Abar, Bbar, Pbar
