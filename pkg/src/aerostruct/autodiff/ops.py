"""Differentiable array operations.

Each function accepts plain numpy arrays or :class:`Active` values. With no
active argument it simply returns the numpy result, so model code written
against this module runs unrecorded at numpy speed. With an active argument
it records one node per call.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .tape import Active, ContractError, DomainError, Tape


def value_of(x):
    return x.value if isinstance(x, Active) else x


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Active):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ContractError("operands belong to different tapes")
    return tape


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _make(tape, value, args, partials, op):
    """Append a node; ``partials[k]`` is the vjp closure of ``args[k]``."""
    parents, vjps = [], []
    for a, fn in zip(args, partials):
        if isinstance(a, Active) and fn is not None:
            parents.append(a.index)
            vjps.append(fn)
    idx = tape._push(np.asarray(value), parents, vjps, op)
    return Active(tape, idx)


def _check(tape, cond, op, msg):
    if np.any(cond):
        raise DomainError(tape.next_index(), op, msg)


# ----------------------------------------------------------------------
# elementwise binary
def add(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av + bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(g, sa), lambda g: unbroadcast(g, sb)), "add")


def subtract(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av - bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(g, sa), lambda g: -unbroadcast(g, sb)), "sub")


def multiply(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av * bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(g * bv, sa), lambda g: unbroadcast(g * av, sb)), "mul")


def divide(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if tape is None:
        return av / bv
    _check(tape, np.asarray(bv) == 0, "div", "division by zero")
    out = av / bv
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(g / bv, sa),
                  lambda g: unbroadcast(-g * out / bv, sb)), "div")


def power(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if tape is None:
        return av ** bv
    bconst = not isinstance(b, Active)
    if bconst and np.all(np.asarray(bv) == np.round(np.real(bv))):
        pass
    else:
        _check(tape, np.real(av) < 0, "pow", "negative base with non-integer exponent")
    out = av ** bv
    sa, sb = np.shape(av), np.shape(bv)

    def ga(g):
        return unbroadcast(g * bv * av ** (bv - 1), sa)

    def gb(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(np.asarray(av) == 0, 0.0, np.log(np.where(av == 0, 1.0, av)))
        return unbroadcast(g * out * lg, sb)

    return _make(tape, out, (a, b), (ga, gb), "pow")


def atan2(y, x):
    tape = _tape_of(y, x)
    yv, xv = value_of(y), value_of(x)
    out = np.arctan2(yv, xv)
    if tape is None:
        return out
    _check(tape, (np.asarray(xv) == 0) & (np.asarray(yv) == 0), "atan2", "atan2(0, 0)")
    r2 = xv * xv + yv * yv
    sy, sx = np.shape(yv), np.shape(xv)
    return _make(tape, out, (y, x),
                 (lambda g: unbroadcast(g * xv / r2, sy),
                  lambda g: unbroadcast(-g * yv / r2, sx)), "atan2")


def minimum(a, b):
    """Elementwise minimum; ties send the adjoint to the left operand."""
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = np.minimum(av, bv)
    if tape is None:
        return out
    left = np.real(av) <= np.real(bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(np.where(left, g, 0.0), sa),
                  lambda g: unbroadcast(np.where(left, 0.0, g), sb)), "min")


def maximum(a, b):
    """Elementwise maximum; ties send the adjoint to the left operand."""
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = np.maximum(av, bv)
    if tape is None:
        return out
    left = np.real(av) >= np.real(bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(np.where(left, g, 0.0), sa),
                  lambda g: unbroadcast(np.where(left, 0.0, g), sb)), "max")


# ----------------------------------------------------------------------
# elementwise unary
def _unary(x, fn, dfn, op, domain=None):
    tape = _tape_of(x)
    xv = value_of(x)
    if tape is None:
        return fn(xv)
    if domain is not None:
        _check(tape, domain[0](xv), op, domain[1])
    out = fn(xv)
    return _make(tape, out, (x,), (lambda g: g * dfn(xv, out),), op)


def negative(x):
    return _unary(x, np.negative, lambda v, o: -1.0, "neg")


def sin(x):
    return _unary(x, np.sin, lambda v, o: np.cos(v), "sin")


def cos(x):
    return _unary(x, np.cos, lambda v, o: -np.sin(v), "cos")


def tan(x):
    return _unary(x, np.tan, lambda v, o: 1.0 + o * o, "tan")


def exp(x):
    return _unary(x, np.exp, lambda v, o: o, "exp")


def log(x):
    return _unary(x, np.log, lambda v, o: 1.0 / v, "log",
                  (lambda v: np.real(v) <= 0, "logarithm of a non-positive argument"))


def sqrt(x):
    return _unary(x, np.sqrt, lambda v, o: 0.5 / o, "sqrt",
                  (lambda v: np.real(v) < 0, "square root of a negative argument"))


def absolute(x):
    """Absolute value; the subgradient at zero is taken as zero."""
    return _unary(x, np.abs, lambda v, o: np.sign(v), "abs")


def square(x):
    return multiply(x, x)


# ----------------------------------------------------------------------
# reductions and shape manipulation
def sum(x, axis=None, keepdims=False):  # noqa: A001
    tape = _tape_of(x)
    xv = value_of(x)
    out = np.sum(xv, axis=axis, keepdims=keepdims)
    if tape is None:
        return out
    shape = np.shape(xv)

    def g_(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = (axis,) if np.isscalar(axis) else tuple(axis)
            axes = tuple(a % len(shape) for a in axes)
            for a in sorted(axes):
                g = np.expand_dims(g, a)
        return np.broadcast_to(g, shape).copy()

    return _make(tape, out, (x,), (g_,), "sum")


def reshape(x, shape):
    tape = _tape_of(x)
    xv = value_of(x)
    out = np.reshape(xv, shape)
    if tape is None:
        return out
    s0 = np.shape(xv)
    return _make(tape, out, (x,), (lambda g: np.reshape(g, s0),), "reshape")


def transpose(x, axes=None):
    tape = _tape_of(x)
    xv = value_of(x)
    out = np.transpose(xv, axes)
    if tape is None:
        return out
    inv = None if axes is None else np.argsort(axes)
    return _make(tape, out, (x,), (lambda g: np.transpose(g, inv),), "transpose")


def broadcast_to(x, shape):
    tape = _tape_of(x)
    xv = value_of(x)
    out = np.broadcast_to(xv, shape)
    if tape is None:
        return out
    s0 = np.shape(xv)
    return _make(tape, out, (x,), (lambda g: unbroadcast(g, s0),), "broadcast")


def _is_basic(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def getitem(x, idx):
    tape = _tape_of(x)
    xv = value_of(x)
    if isinstance(idx, Active):
        raise ContractError("indices must be constant")
    out = xv[idx]
    if tape is None:
        return out
    basic = _is_basic(idx)

    def g_(g):
        z = np.zeros(xv.shape, dtype=np.result_type(xv, g))
        if basic:
            z[idx] += g
        else:
            np.add.at(z, idx, g)
        return z

    return _make(tape, np.array(out), (x,), (g_,), "getitem")


def take(x, indices, axis=0):
    """Gather along ``axis`` with integer ``indices`` (repeats allowed)."""
    tape = _tape_of(x)
    xv = value_of(x)
    out = np.take(xv, indices, axis=axis)
    if tape is None:
        return out
    shape = xv.shape

    def g_(g):
        z = np.zeros(shape, dtype=np.result_type(xv, g))
        zm = np.moveaxis(z, axis, 0)
        gm = np.moveaxis(np.asarray(g), axis, 0) if np.ndim(indices) == 1 else g
        np.add.at(zm, indices, gm)
        return z

    return _make(tape, out, (x,), (g_,), "take")


def scatter_add(n, indices, values):
    """Return ``z`` of leading length ``n`` with ``z[indices] += values``."""
    tape = _tape_of(values)
    vv = value_of(values)
    z = np.zeros((n,) + np.shape(vv)[np.ndim(indices):], dtype=np.asarray(vv).dtype)
    np.add.at(z, indices, vv)
    if tape is None:
        return z
    return _make(tape, z, (values,), (lambda g: np.asarray(g)[indices],), "scatter")


def stack(xs, axis=0):
    tape = _tape_of(*xs)
    vals = [value_of(x) for x in xs]
    out = np.stack(vals, axis=axis)
    if tape is None:
        return out
    fns = []
    for k, v in enumerate(vals):
        fns.append(lambda g, k=k, s=np.shape(v): unbroadcast(np.take(g, k, axis=axis), s))
    return _make(tape, out, xs, fns, "stack")


def concatenate(xs, axis=0):
    tape = _tape_of(*xs)
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [np.shape(v)[axis] for v in vals])
    fns = []
    for k in range(len(vals)):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(bounds[k], bounds[k + 1])
        fns.append(lambda g, sl=tuple(sl): np.asarray(g)[sl])
    return _make(tape, out, xs, fns, "concat")


def where(cond, a, b):
    """Select with a constant mask; both branches must be finite."""
    cond = np.asarray(value_of(cond))
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = np.where(cond, av, bv)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(np.where(cond, g, 0.0), sa),
                  lambda g: unbroadcast(np.where(cond, 0.0, g), sb)), "where")


# ----------------------------------------------------------------------
# products and linear algebra
def dot(a, b):
    """Inner product over the last axis."""
    return sum(multiply(a, b), axis=-1)


def cross(a, b):
    """Cross product over the last axis."""
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = np.cross(av, bv)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return _make(tape, out, (a, b),
                 (lambda g: unbroadcast(np.cross(bv, g), sa),
                  lambda g: unbroadcast(np.cross(g, av), sb)), "cross")


def norm(x):
    """Euclidean norm over the last axis."""
    return sqrt(dot(x, x))


def matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    if tape is None:
        return out
    a2 = np.asarray(av)
    b2 = np.asarray(bv)

    def ga(g):
        if b2.ndim == 1:
            r = np.multiply.outer(g, b2) if a2.ndim >= 2 else g * b2
        else:
            gg = g[..., None, :] if a2.ndim == 1 else g
            r = gg @ np.swapaxes(b2, -1, -2)
            if a2.ndim == 1:
                r = r[..., 0, :]
        return unbroadcast(r, a2.shape)

    def gb(g):
        if a2.ndim == 1:
            r = np.multiply.outer(a2, g) if b2.ndim >= 2 else g * a2
        else:
            gg = g[..., :, None] if b2.ndim == 1 else g
            r = np.swapaxes(a2, -1, -2) @ gg
            if b2.ndim == 1:
                r = r[..., 0]
        return unbroadcast(r, b2.shape)

    return _make(tape, out, (a, b), (ga, gb), "matmul")


def einsum(subscripts, *operands):
    """Einstein summation with explicit output subscripts (``'ij,j->i'``)."""
    tape = _tape_of(*operands)
    vals = [value_of(o) for o in operands]
    out = np.einsum(subscripts, *vals)
    if tape is None:
        return out
    if "->" not in subscripts:
        raise ContractError("einsum needs explicit output subscripts")
    lhs, rhs = subscripts.replace(" ", "").split("->")
    subs = lhs.split(",")
    fns = []
    for k in range(len(vals)):
        others = [s for j, s in enumerate(subs) if j != k]
        ovals = [v for j, v in enumerate(vals) if j != k]
        spec = ",".join([rhs] + others) + "->" + subs[k]
        missing = set(subs[k].replace("...", "")) - set(rhs + "".join(others))
        if missing:
            raise ContractError(f"einsum index {sorted(missing)} appears in one operand only")
        shape = np.shape(vals[k])
        fns.append(lambda g, spec=spec, ovals=ovals, shape=shape:
                   unbroadcast(np.einsum(spec, g, *ovals), shape))
    return _make(tape, out, operands, fns, "einsum")


def solve(A, b):
    """Dense linear solve ``A x = b`` with an LU factorization shared by the sweep."""
    tape = _tape_of(A, b)
    Av, bv = np.asarray(value_of(A)), np.asarray(value_of(b))
    if Av.ndim != 2 or Av.shape[0] != Av.shape[1] or Av.shape[0] != bv.shape[0]:
        raise ContractError(f"solve: incompatible shapes {Av.shape} and {bv.shape}")
    lu = sla.lu_factor(Av, check_finite=False)
    x = sla.lu_solve(lu, bv, check_finite=False)
    if tape is None:
        return x

    def gb(g):
        return sla.lu_solve(lu, g, trans=1, check_finite=False)

    def gA(g):
        bb = gb(g)
        return -np.outer(bb, x) if x.ndim == 1 else -bb @ x.T

    return _make(tape, x, (A, b), (gA, gb), "solve")


def linear_map(M, x, MT=None):
    """Apply a constant (dense or sparse) matrix to the leading axis of ``x``."""
    tape = _tape_of(x)
    xv = value_of(x)
    out = M @ xv
    if tape is None:
        return out
    MT = M.T if MT is None else MT
    return _make(tape, np.asarray(out), (x,), (lambda g: MT @ g,), "linmap")


def primitive(tape_args, value, partials, op="primitive"):
    """Record a user-defined primitive.

    ``tape_args`` are the operands, ``value`` the already computed result
    and ``partials`` one vjp closure (or ``None``) per operand.
    """
    tape = _tape_of(*tape_args)
    if tape is None:
        return value
    return _make(tape, value, tape_args, partials, op)


def joint_primitive(tape_args, value, joint_vjp, op="primitive"):
    """Record a primitive whose adjoints are computed together.

    ``joint_vjp(g)`` returns one adjoint (or ``None``) per operand; it runs
    once per reverse sweep however many operands need it.
    """
    tape = _tape_of(*tape_args)
    if tape is None:
        return value
    cache = {}

    def part(k):
        def fn(g):
            if cache.get("g") is not g:
                cache["g"] = g
                cache["res"] = joint_vjp(g)
            return cache["res"][k]
        return fn

    fns = [part(k) for k in range(len(tape_args))]
    return _make(tape, value, tape_args, fns, op)


def stop_gradient(x):
    return value_of(x)
