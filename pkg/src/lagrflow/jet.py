"""Second-order forward-mode jets in one variable (time).

A :class:`Jet` carries a value with its first and second derivatives so that
time components can be assembled once and yield A, A' and A'' together.
The helper functions (``sin``, ``sqrt``, ...) accept plain floats as well.
"""
from __future__ import annotations

import math

import numpy as np


class Jet:
    __slots__ = ("v", "d", "dd")

    def __init__(self, v, d=0.0, dd=0.0):
        self.v = float(v)
        self.d = float(d)
        self.dd = float(dd)

    def __repr__(self):
        return f"Jet({self.v!r}, {self.d!r}, {self.dd!r})"

    def __add__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v + o.v, self.d + o.d, self.dd + o.dd)
        return Jet(self.v + o, self.d, self.dd)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.d, -self.dd)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v * o.v,
                       self.d * o.v + self.v * o.d,
                       self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd)
        return Jet(self.v * o, self.d * o, self.dd * o)

    __rmul__ = __mul__

    def reciprocal(self):
        r = 1.0 / self.v
        return Jet(r, -self.d * r * r, (2.0 * self.d * self.d * r - self.dd) * r * r)

    def __truediv__(self, o):
        if isinstance(o, Jet):
            return self * o.reciprocal()
        return Jet(self.v / o, self.d / o, self.dd / o)

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, n: int):
        n = int(n)
        if n == 0:
            return Jet(1.0)
        if n < 0:
            return (self ** (-n)).reciprocal()
        f0 = self.v ** n
        f1 = n * self.v ** (n - 1)
        f2 = n * (n - 1) * self.v ** (n - 2) if n >= 2 else 0.0
        return self._chain(f0, f1, f2)

    def _chain(self, f0, f1, f2):
        # (f o x)' = f1 x',  (f o x)'' = f2 x'^2 + f1 x''
        return Jet(f0, f1 * self.d, f2 * self.d * self.d + f1 * self.dd)


def value(x) -> float:
    return x.v if isinstance(x, Jet) else float(x)


def sin(x):
    if isinstance(x, Jet):
        s, c = math.sin(x.v), math.cos(x.v)
        return x._chain(s, c, -s)
    return math.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = math.sin(x.v), math.cos(x.v)
        return x._chain(c, -s, -c)
    return math.cos(x)


def tan(x):
    if isinstance(x, Jet):
        t = math.tan(x.v)
        sec2 = 1.0 + t * t
        return x._chain(t, sec2, 2.0 * t * sec2)
    return math.tan(x)


def exp(x):
    if isinstance(x, Jet):
        e = math.exp(x.v)
        return x._chain(e, e, e)
    return math.exp(x)


def log(x):
    if isinstance(x, Jet):
        return x._chain(math.log(x.v), 1.0 / x.v, -1.0 / (x.v * x.v))
    return math.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        r = math.sqrt(x.v)
        return x._chain(r, 0.5 / r, -0.25 / (r * x.v))
    return math.sqrt(x)


def cbrt(x):
    """Real cube root."""
    if isinstance(x, Jet):
        r = float(np.cbrt(x.v))
        f1 = 1.0 / (3.0 * r * r)
        return x._chain(r, f1, -2.0 * f1 / (3.0 * x.v))
    return float(np.cbrt(x))


def stack(entries) -> tuple:
    """Split a nested list of jets/floats into (value, d, dd) arrays."""
    arr = np.asarray(entries, dtype=object)
    v = np.vectorize(lambda e: e.v if isinstance(e, Jet) else float(e), otypes=[float])(arr)
    d = np.vectorize(lambda e: e.d if isinstance(e, Jet) else 0.0, otypes=[float])(arr)
    dd = np.vectorize(lambda e: e.dd if isinstance(e, Jet) else 0.0, otypes=[float])(arr)
    return v, d, dd
