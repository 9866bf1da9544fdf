"""Reverse-mode differentiation of a small linear-algebra program.

The function solves a 3x3 system whose matrix depends on the input and
returns a quadratic form of the solution. One backward sweep gives the
whole gradient; central differences confirm it component by component.
"""

import numpy as np

from aerostruct.autodiff import ops, record, vjp


def program(x):
    A = ops.stack([ops.stack([2.0 + x[0] ** 2, x[1], 0.1]),
                   ops.stack([x[1], 3.0, ops.sin(x[2])]),
                   ops.stack([0.1, ops.sin(x[2]), 4.0 + ops.exp(x[0])])])
    b = ops.stack([1.0, x[0] * x[2], -0.5])
    u = ops.solve(A, b)
    return ops.dot(u, u) + ops.sum(ops.sqrt(1.0 + x * x))


x0 = np.array([0.3, -0.7, 1.1])
tape, y = record(program, x0)
grad = vjp(tape, np.ones(()))
print(f"value      {float(y):.12f}")
print(f"tape       {len(tape.nodes)} recorded operations")

h = 1e-6
for k in range(3):
    e = np.zeros(3)
    e[k] = h
    fd = (program(x0 + e) - program(x0 - e)) / (2 * h)
    print(f"d/dx[{k}]   reverse {grad[k]: .12e}   central FD {float(fd): .12e}")
