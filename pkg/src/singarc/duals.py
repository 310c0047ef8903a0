"""Forward-mode dual-number arithmetic for exact directional derivatives.

Two representations of the same algebra:

* ``Dual`` -- single tangent, nestable.  Components may be floats, numpy
  arrays (for batched sweeps) or further ``Dual`` values; nesting d levels
  deep yields exact d-th order directional derivatives.  This is the
  general-purpose path used by the bracket calculus.
* ``HyperDual`` -- a flattened two-level dual (value, two first-order
  tangents, one cross term), algebraically identical to
  ``Dual(Dual(a, b), Dual(c, d))`` but a single flat object.  Used on hot
  paths where the allocation cost of nested duals dominates.

Components of one expression must stay within one representation; the two
are never mixed in a single evaluation.
"""
from __future__ import annotations

import math

import numpy as np

_NUMERIC = (int, float, np.floating, np.ndarray)


class Dual:
    """Number carrying a value and one tangent (derivative) slot."""

    __slots__ = ("re", "im")
    __array_ufunc__ = None  # force numpy to defer to our reflected ops

    def __init__(self, re, im):
        self.re = re
        self.im = im

    def __repr__(self):
        return f"Dual({self.re!r}, {self.im!r})"

    def __add__(self, o):
        if type(o) is Dual:
            return Dual(self.re + o.re, self.im + o.im)
        return Dual(self.re + o, self.im)

    __radd__ = __add__

    def __sub__(self, o):
        if type(o) is Dual:
            return Dual(self.re - o.re, self.im - o.im)
        return Dual(self.re - o, self.im)

    def __rsub__(self, o):
        return Dual(o - self.re, -self.im)

    def __mul__(self, o):
        if type(o) is Dual:
            return Dual(self.re * o.re, self.re * o.im + self.im * o.re)
        return Dual(self.re * o, self.im * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if type(o) is Dual:
            return Dual(self.re / o.re,
                        (self.im * o.re - self.re * o.im) / (o.re * o.re))
        return Dual(self.re / o, self.im / o)

    def __rtruediv__(self, o):
        return Dual(o / self.re, -o * self.im / (self.re * self.re))

    def __neg__(self):
        return Dual(-self.re, -self.im)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise TypeError("Dual ** requires a non-negative integer")
        if n == 0:
            return Dual(self.re * 0 + 1.0, self.im * 0)
        out = self
        for _ in range(n - 1):
            out = out * self
        return out


class HyperDual:
    """Flat second-order dual: value a, tangents b (eps), c (delta), cross d."""

    __slots__ = ("a", "b", "c", "d")
    __array_ufunc__ = None

    def __init__(self, a, b, c, d):
        self.a = a
        self.b = b
        self.c = c
        self.d = d

    def __repr__(self):
        return f"HyperDual({self.a!r}, {self.b!r}, {self.c!r}, {self.d!r})"

    def __add__(self, o):
        if type(o) is HyperDual:
            return HyperDual(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
        return HyperDual(self.a + o, self.b, self.c, self.d)

    __radd__ = __add__

    def __sub__(self, o):
        if type(o) is HyperDual:
            return HyperDual(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
        return HyperDual(self.a - o, self.b, self.c, self.d)

    def __rsub__(self, o):
        return HyperDual(o - self.a, -self.b, -self.c, -self.d)

    def __mul__(self, o):
        if type(o) is HyperDual:
            return HyperDual(self.a * o.a,
                             self.a * o.b + self.b * o.a,
                             self.a * o.c + self.c * o.a,
                             self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a)
        return HyperDual(self.a * o, self.b * o, self.c * o, self.d * o)

    __rmul__ = __mul__

    def _reciprocal(self):
        ia = 1.0 / self.a
        ia2 = ia * ia
        return HyperDual(ia, -self.b * ia2, -self.c * ia2,
                         2.0 * self.b * self.c * ia2 * ia - self.d * ia2)

    def __truediv__(self, o):
        if type(o) is HyperDual:
            return self * o._reciprocal()
        return HyperDual(self.a / o, self.b / o, self.c / o, self.d / o)

    def __rtruediv__(self, o):
        return o * self._reciprocal()

    def __neg__(self):
        return HyperDual(-self.a, -self.b, -self.c, -self.d)


def sin(v):
    if type(v) is float:
        return math.sin(v)
    if type(v) is Dual:
        return Dual(sin(v.re), cos(v.re) * v.im)
    if type(v) is HyperDual:
        s, co = sin(v.a), cos(v.a)
        return HyperDual(s, v.b * co, v.c * co, v.d * co - v.b * v.c * s)
    return np.sin(v)


def cos(v):
    if type(v) is float:
        return math.cos(v)
    if type(v) is Dual:
        return Dual(cos(v.re), -sin(v.re) * v.im)
    if type(v) is HyperDual:
        s, co = sin(v.a), cos(v.a)
        return HyperDual(co, -v.b * s, -v.c * s, -v.d * s - v.b * v.c * co)
    return np.cos(v)


def value(v):
    """Strip all derivative structure, returning the underlying value."""
    while True:
        if type(v) is Dual:
            v = v.re
        elif type(v) is HyperDual:
            v = v.a
        else:
            return v


def seed(x, v):
    """Lift point x along direction v: list of Dual(x_i, v_i)."""
    return [Dual(xi, vi) for xi, vi in zip(x, v)]


def tangent(ys):
    """Tangent parts of a list of Dual values."""
    return [y.im if type(y) is Dual else y * 0.0 for y in ys]


def gauss_solve(A, B):
    """Solve A X = B over the dual algebra by elimination with partial pivoting.

    A: n x n nested list, B: n x m nested list; returns X as nested lists.
    Pivoting compares stripped values, so components must be scalar (the
    batched-array path uses the closed 2x2 form instead).  Raises
    LinearSolveFailure on a vanishing pivot.
    """
    from .errors import LinearSolveFailure

    n = len(A)
    m = len(B[0])
    rows = [list(A[i]) + list(B[i]) for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(value(rows[r][col])))
        if abs(value(rows[piv][col])) < 1e-300:
            raise LinearSolveFailure("singular system in gauss_solve")
        if piv != col:
            rows[col], rows[piv] = rows[piv], rows[col]
        inv = 1.0 / rows[col][col]
        for r in range(n):
            if r == col:
                continue
            factor = rows[r][col] * inv
            rows[r] = [rows[r][k] - factor * rows[col][k] for k in range(n + m)]
    return [[rows[i][n + j] / rows[i][i] for j in range(m)] for i in range(n)]
