"""First-order dual numbers for exact forward-mode differentiation.

The stabilizing-function recursion consumes partial derivatives of the
previous stage, so derivatives must be exact; finite differences would
compound error through the recursion.  Components may themselves be
``Dual`` (nested seeding), which yields exact mixed partials.
"""

import math


class Dual:
    """Number of the form a + b*eps with eps^2 = 0; a and b may nest."""

    __slots__ = ("re", "eps")

    def __init__(self, re, eps=0.0):
        self.re = re
        self.eps = eps

    def __repr__(self):
        return f"Dual({self.re!r}, {self.eps!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.eps + other.eps)
        return Dual(self.re + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.eps - other.eps)
        return Dual(self.re - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.eps + self.eps * other.re)
        return Dual(self.re * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re / other.re,
                        (self.eps * other.re - self.re * other.eps) / (other.re * other.re))
        return Dual(self.re / other, self.eps / other)

    def __rtruediv__(self, other):
        return Dual(other / self.re, -other * self.eps / (self.re * self.re))

    def __neg__(self):
        return Dual(-self.re, -self.eps)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise TypeError("Dual supports nonnegative integer powers only")
        if k == 0:
            return Dual(_one_like(self.re), 0.0)
        out = self
        for _ in range(k - 1):
            out = out * self
        return out


def _one_like(v):
    return 1.0 if not isinstance(v, Dual) else Dual(_one_like(v.re), 0.0)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.eps)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.eps)
    return math.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.eps)
    return math.exp(x)


def value(x):
    """Strip all dual layers, returning the underlying float."""
    while isinstance(x, Dual):
        x = x.re
    return x


def partial(f, args, slot):
    """Exact d f / d args[slot], where f maps a sequence to a scalar.

    Every argument already carrying dual layers is lifted into the new
    (outermost) layer before seeding, so nested calls keep their
    directions distinct.  For that to be sound, f must read every
    differentiation-relevant input from ``args``; dual-carrying values
    captured from an enclosing scope would bypass the lift.
    """
    seeded = [Dual(a, 0.0) if isinstance(a, Dual) else a for a in args]
    seeded[slot] = Dual(args[slot], 1.0)
    out = f(seeded)
    return out.eps if isinstance(out, Dual) else 0.0
