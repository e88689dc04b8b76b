"""Truncated bivariate Taylor-series arithmetic (forward-mode derivatives).

A :class:`Taylor2` holds the coefficients c[i, j] = D^(i,j) f / (i! j!) of a
function of two real variables about a fixed expansion point, truncated at
total degree ``order``.  Arithmetic on these jets propagates all mixed
derivatives up to that degree in a single evaluation, which is how the model
kernels expose exact high-order derivatives without symbolic work.

Analytic primitives (exp, sqrt, powers, reciprocal) are built by composing
the 1-d Maclaurin series of the outer function with the nilpotent part of the
jet, which terminates exactly at the truncation order.
"""

import math

import numpy as np

__all__ = ["Taylor2", "seed_variables"]


class Taylor2:
    """Jet of a smooth function of two variables, truncated at total degree n.

    Coefficients are stored in a dense (n+1, n+1) complex array; entries with
    i + j > n are kept at zero and ignored.
    """

    __slots__ = ("c", "order")

    def __init__(self, c, order):
        self.c = c
        self.order = order

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, value, order):
        c = np.zeros((order + 1, order + 1), dtype=complex)
        c[0, 0] = value
        return cls(c, order)

    def copy(self):
        return Taylor2(self.c.copy(), self.order)

    @property
    def value(self):
        return self.c[0, 0]

    def deriv(self, b1, b2):
        """Return D^(b1,b2) f at the expansion point."""
        if b1 + b2 > self.order:
            raise ValueError("derivative order exceeds jet truncation")
        return self.c[b1, b2] * (math.factorial(b1) * math.factorial(b2))

    # -- ring operations ---------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Taylor2):
            return other
        return Taylor2.constant(other, self.order)

    def __add__(self, other):
        other = self._coerce(other)
        return Taylor2(self.c + other.c, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Taylor2(-self.c, self.order)

    def __sub__(self, other):
        other = self._coerce(other)
        return Taylor2(self.c - other.c, self.order)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Taylor2):
            return Taylor2(self.c * other, self.order)
        n = self.order
        out = np.zeros_like(self.c)
        # convolve, dropping terms beyond total degree n
        for i in range(n + 1):
            row = self.c[i]
            for j in range(n + 1 - i):
                a = row[j]
                if a == 0.0:
                    continue
                out[i:, j:] += a * other.c[: n + 1 - i, : n + 1 - j]
        _mask_total_degree(out, n)
        return Taylor2(out, n)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Taylor2):
            return Taylor2(self.c / other, self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    # -- analytic primitives ----------------------------------------------

    def _compose(self, outer):
        """Sum_k outer[k] * (self - value)^k, truncated (Horner's scheme)."""
        q = self.copy()
        q.c[0, 0] = 0.0
        acc = Taylor2.constant(outer[-1], self.order)
        for k in range(len(outer) - 2, -1, -1):
            acc = acc * q
            acc.c[0, 0] += outer[k]
        return acc

    def exp(self):
        a0 = self.value
        n = self.order
        outer = [np.exp(a0) / math.factorial(k) for k in range(n + 1)]
        return self._compose(outer)

    def power(self, alpha):
        """self**alpha for real alpha; constant term must be real positive."""
        a0 = self.value
        if not (a0.imag == 0.0 and a0.real > 0.0):
            raise ValueError("power() needs a positive real constant term")
        a0 = a0.real
        n = self.order
        outer = []
        binom = 1.0
        for k in range(n + 1):
            outer.append(binom * a0 ** (alpha - k))
            binom *= (alpha - k) / (k + 1)
        return self._compose(outer)

    def sqrt(self):
        return self.power(0.5)

    def reciprocal(self):
        a0 = self.value
        if a0 == 0.0:
            raise ZeroDivisionError("reciprocal of a jet with zero value")
        n = self.order
        outer = [(-1.0) ** k / a0 ** (k + 1) for k in range(n + 1)]
        return self._compose(outer)


def _mask_total_degree(c, n):
    for i in range(n + 1):
        c[i, n + 1 - i :] = 0.0


def seed_variables(x0, y0, order):
    """Jets of the coordinate functions (x, y) about the point (x0, y0)."""
    x = Taylor2.constant(x0, order)
    y = Taylor2.constant(y0, order)
    if order >= 1:
        x.c[1, 0] = 1.0
        y.c[0, 1] = 1.0
    return x, y
