"""Reverse-mode operation tape.

Every elementary operation applied to an :class:`Active` value appends one
node to the tape that owns it. A node stores its value, the indices of its
parents and one vector-Jacobian closure per parent. Values may be numpy
arrays of any shape (a 0-d array is an :data:`ActiveScalar`), so a single
node can carry a whole vectorized elementary operation.

The tape is immutable once :func:`record` returns. :func:`vjp` keeps its
adjoint buffers local, so several threads may sweep the same tape at once.
"""

from __future__ import annotations

import numpy as np


class AdError(Exception):
    """Base class for errors raised by the tape."""


class DomainError(AdError, ValueError):
    """An elementary operation received an argument outside its domain."""

    def __init__(self, op_index: int, op: str, message: str):
        self.op_index = op_index
        self.op = op
        super().__init__(f"operation #{op_index} ({op}): {message}")


class ContractError(AdError, ValueError):
    """Adjoint seeds or operands do not match the recorded shapes."""


class _Node:
    __slots__ = ("value", "parents", "vjps", "op", "deps")

    def __init__(self, value, parents, vjps, op, deps):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.op = op
        self.deps = deps


class Tape:
    """Ordered list of recorded operations."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.inputs: list[int] = []
        self.outputs: list[int] = []
        self._out_struct = None
        self._frozen = False

    # ------------------------------------------------------------------
    def _push(self, value, parents, vjps, op):
        if self._frozen:
            raise ContractError("tape is frozen; operations can no longer be recorded")
        deps = 0
        for p in parents:
            deps |= self.nodes[p].deps
        self.nodes.append(_Node(value, tuple(parents), tuple(vjps), op, deps))
        return len(self.nodes) - 1

    def next_index(self) -> int:
        return len(self.nodes)

    def add_input(self, value) -> "Active":
        value = np.asarray(value)
        if not np.issubdtype(value.dtype, np.inexact):
            value = value.astype(float)
        k = len(self.inputs)
        idx = len(self.nodes)
        self.nodes.append(_Node(value, (), (), "input", 1 << k))
        self.inputs.append(idx)
        return Active(self, idx)

    @property
    def operations(self) -> int:
        """Number of recorded elementary operations (inputs excluded)."""
        return sum(1 for n in self.nodes if n.op not in ("input", "const"))

    def op_names(self) -> list[str]:
        return [n.op for n in self.nodes if n.op not in ("input", "const")]

    def reset(self):
        """Drop all recorded nodes so the object can be reused."""
        self.nodes.clear()
        self.inputs.clear()
        self.outputs.clear()
        self._out_struct = None
        self._frozen = False

    def __len__(self):
        return len(self.nodes)


class Active:
    """A value whose history is recorded on a tape."""

    __slots__ = ("tape", "index")
    __array_priority__ = 1000.0

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    size = property(lambda self: self.value.size)
    dtype = property(lambda self: self.value.dtype)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Active(node={self.index}, value={self.value!r})"

    def __float__(self):
        return float(self.value)

    # arithmetic is dispatched to the op library
    def __add__(self, o):
        return _ops.add(self, o)

    def __radd__(self, o):
        return _ops.add(o, self)

    def __sub__(self, o):
        return _ops.subtract(self, o)

    def __rsub__(self, o):
        return _ops.subtract(o, self)

    def __mul__(self, o):
        return _ops.multiply(self, o)

    def __rmul__(self, o):
        return _ops.multiply(o, self)

    def __truediv__(self, o):
        return _ops.divide(self, o)

    def __rtruediv__(self, o):
        return _ops.divide(o, self)

    def __pow__(self, o):
        return _ops.power(self, o)

    def __rpow__(self, o):
        return _ops.power(o, self)

    def __neg__(self):
        return _ops.negative(self)

    def __pos__(self):
        return self

    def __abs__(self):
        return _ops.absolute(self)

    def __matmul__(self, o):
        return _ops.matmul(self, o)

    def __rmatmul__(self, o):
        return _ops.matmul(o, self)

    def __getitem__(self, idx):
        return _ops.getitem(self, idx)

    # comparisons act on values and are not recorded
    def __lt__(self, o):
        return self.value < _ops.value_of(o)

    def __le__(self, o):
        return self.value <= _ops.value_of(o)

    def __gt__(self, o):
        return self.value > _ops.value_of(o)

    def __ge__(self, o):
        return self.value >= _ops.value_of(o)

    @property
    def T(self):
        return _ops.transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return _ops.sum(self, axis=axis, keepdims=keepdims)


#: A 0-d :class:`Active`.
ActiveScalar = Active


def _structure(y):
    if isinstance(y, (tuple, list)):
        return [_structure(v) for v in y]
    return None


def record(f, *x):
    """Evaluate ``f(*x)`` while recording every operation.

    Returns ``(tape, y)`` where ``y`` holds plain numpy values with the same
    nesting (single value or tuple) as the output of ``f``.
    """
    tape = Tape()
    xs = [tape.add_input(v) for v in x]
    y = f(*xs)
    single = not isinstance(y, (tuple, list))
    ys = [y] if single else list(y)
    vals = []
    for v in ys:
        if isinstance(v, Active):
            if v.tape is not tape:
                raise ContractError("output recorded on a foreign tape")
            tape.outputs.append(v.index)
            vals.append(v.value)
        else:
            c = np.asarray(v, dtype=float)
            tape.nodes.append(_Node(c, (), (), "const", 0))
            tape.outputs.append(len(tape.nodes) - 1)
            vals.append(c)
    tape._out_struct = single
    tape._frozen = True
    return tape, (vals[0] if single else tuple(vals))


def vjp(tape: Tape, ybar, wrt=None):
    """Reverse sweep: return input adjoints for output seed ``ybar``.

    ``wrt`` optionally lists the input positions that are wanted; nodes that
    do not depend on them are skipped. The return value mirrors the inputs
    of :func:`record` (a single array for one input, otherwise a tuple).
    """
    outs = tape.outputs
    seeds = [ybar] if tape._out_struct else list(ybar)
    if len(seeds) != len(outs):
        raise ContractError(f"expected {len(outs)} output seeds, got {len(seeds)}")
    nodes = tape.nodes
    adj: list = [None] * len(nodes)
    for o, s in zip(outs, seeds):
        if s is None:
            continue
        s = np.asarray(s)
        if s.shape != nodes[o].value.shape:
            raise ContractError(
                f"seed shape {s.shape} does not match output shape {nodes[o].value.shape}")
        adj[o] = s if adj[o] is None else adj[o] + s

    if wrt is None:
        mask = (1 << len(tape.inputs)) - 1
        wanted = range(len(tape.inputs))
    else:
        wanted = [wrt] if np.isscalar(wrt) else list(wrt)
        mask = 0
        for k in wanted:
            mask |= 1 << k

    input_set = set(tape.inputs)
    for i in range(len(nodes) - 1, -1, -1):
        g = adj[i]
        if g is None:
            continue
        node = nodes[i]
        if not node.deps & mask:
            continue
        for p, fn in zip(node.parents, node.vjps):
            if not nodes[p].deps & mask:
                continue
            c = fn(g)
            adj[p] = c if adj[p] is None else adj[p] + c
        if i not in input_set:
            adj[i] = None

    res = []
    for k, idx in enumerate(tape.inputs):
        a = adj[idx]
        res.append(np.zeros_like(nodes[idx].value) if a is None else a)
    if wrt is not None and np.isscalar(wrt):
        return res[wrt]
    if wrt is not None:
        return tuple(res[k] for k in wanted)
    return res[0] if len(res) == 1 else tuple(res)


from . import ops as _ops  # noqa: E402
