"""Truncated multivariate Taylor jets for exact Wirtinger derivatives.

A :class:`Jet` stores the Taylor coefficients of a function of ``nvars``
independent complex variables up to a fixed total order, vectorised over a
batch of base points.  Holomorphic and antiholomorphic variables are simply
separate slots (``z`` and ``zb``), so partial derivatives in a slot are
Wirtinger derivatives.

Example::

    z, zb = Jet.variables([z0, np.conj(z0)], order=2)
    lg = (2.0 / (1 - z * zb) ** 2).log()
    lg.partial((1, 1))      # d^2/dz dzbar log g at z0
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np

MAX_ORDER = 4


class JetOrderError(ValueError):
    """Raised when a derivative beyond the jet's truncation order is requested."""


@lru_cache(maxsize=None)
def _monomials(nvars: int, order: int):
    exps = [e for e in product(range(order + 1), repeat=nvars) if sum(e) <= order]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    index = {e: k for k, e in enumerate(exps)}
    return tuple(exps), index


@lru_cache(maxsize=None)
def _mult_table(nvars: int, order: int):
    exps, index = _monomials(nvars, order)
    ia, ib, ic = [], [], []
    for a, ea in enumerate(exps):
        for b, eb in enumerate(exps):
            ec = tuple(x + y for x, y in zip(ea, eb))
            if sum(ec) <= order:
                ia.append(a)
                ib.append(b)
                ic.append(index[ec])
    return np.array(ia), np.array(ib), np.array(ic)


@lru_cache(maxsize=None)
def _shift_table(nvars: int, order: int, var: int):
    """Index map for d/d(var): new jet of order-1 from a jet of ``order``."""
    exps, index = _monomials(nvars, order)
    new_exps, _ = _monomials(nvars, order - 1)
    src, fac = [], []
    for e in new_exps:
        up = list(e)
        up[var] += 1
        src.append(index[tuple(up)])
        fac.append(up[var])
    return np.array(src), np.array(fac, dtype=float)


class Jet:
    """Taylor jet with coefficient array of shape (n_monomials, batch)."""

    __array_priority__ = 1000

    def __init__(self, coef: np.ndarray, nvars: int, order: int):
        self.coef = coef
        self.nvars = nvars
        self.order = order

    # construction -------------------------------------------------------
    @classmethod
    def variables(cls, values, order: int = MAX_ORDER):
        """Return one jet per independent variable, seeded at ``values``."""
        if order > MAX_ORDER:
            raise JetOrderError(f"order {order} exceeds supported depth {MAX_ORDER}")
        values = [np.atleast_1d(np.asarray(v, dtype=complex)) for v in values]
        nvars = len(values)
        batch = np.broadcast_shapes(*(v.shape for v in values))
        exps, index = _monomials(nvars, order)
        out = []
        for k, v in enumerate(values):
            c = np.zeros((len(exps),) + batch, dtype=complex)
            c[0] = v
            if order >= 1:
                e = [0] * nvars
                e[k] = 1
                c[index[tuple(e)]] = 1.0
            out.append(cls(c, nvars, order))
        return out

    def _const(self, value):
        exps, _ = _monomials(self.nvars, self.order)
        c = np.zeros((len(exps),) + self.coef.shape[1:], dtype=complex)
        c[0] = value
        return Jet(c, self.nvars, self.order)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable sets")
            return other
        return self._const(other)

    @staticmethod
    def _align(a: "Jet", b: "Jet"):
        order = min(a.order, b.order)
        return a.truncate(order), b.truncate(order)

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        n = len(_monomials(self.nvars, order)[0])
        return Jet(self.coef[:n], self.nvars, order)

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        a, b = self._align(self, self._coerce(other))
        return Jet(a.coef + b.coef, a.nvars, a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef, self.nvars, self.order)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coef * other, self.nvars, self.order)
        a, b = self._align(self, other)
        ia, ib, ic = _mult_table(a.nvars, a.order)
        out = np.zeros_like(a.coef)
        np.add.at(out, ic, a.coef[ia] * b.coef[ib])
        return Jet(out, a.nvars, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coef / other, self.nvars, self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            return (self.log() * n).exp()
        out = self._const(1.0)
        for _ in range(n):
            out = out * self
        return out

    # elementary functions through Taylor composition ---------------------
    def _compose(self, derivs) -> "Jet":
        """f(self) given derivs[k] = f^(k)(value) for k = 0..order."""
        delta = Jet(self.coef.copy(), self.nvars, self.order)
        delta.coef[0] = 0.0
        out = self._const(derivs[0])
        power = self._const(1.0)
        for k in range(1, self.order + 1):
            power = power * delta
            out = out + power * (derivs[k] / factorial(k))
        return out

    def exp(self):
        e = np.exp(self.coef[0])
        return self._compose([e] * (self.order + 1))

    def log(self):
        x = self.coef[0]
        d = [np.log(x)]
        for k in range(1, self.order + 1):
            d.append((-1) ** (k - 1) * factorial(k - 1) / x**k)
        return self._compose(d)

    def reciprocal(self):
        x = self.coef[0]
        d = [(-1) ** k * factorial(k) / x ** (k + 1) for k in range(self.order + 1)]
        return self._compose(d)

    def sqrt(self):
        x = self.coef[0]
        d, c = [], 1.0
        for k in range(self.order + 1):
            d.append(c * x ** (0.5 - k))
            c *= 0.5 - k
        return self._compose(d)

    # derivatives --------------------------------------------------------
    def d(self, var: int, times: int = 1) -> "Jet":
        """Jet of the partial derivative in variable slot ``var``."""
        out = self
        for _ in range(times):
            if out.order < 1:
                raise JetOrderError("derivative requested beyond jet order")
            src, fac = _shift_table(out.nvars, out.order, var)
            coef = out.coef[src] * fac.reshape((-1,) + (1,) * (out.coef.ndim - 1))
            out = Jet(coef, out.nvars, out.order - 1)
        return out

    def partial(self, multi_index) -> np.ndarray:
        """Value of the mixed partial derivative at the base points."""
        multi_index = tuple(multi_index)
        if sum(multi_index) > self.order:
            raise JetOrderError(
                f"derivative of total order {sum(multi_index)} exceeds jet order {self.order}"
            )
        _, index = _monomials(self.nvars, self.order)
        scale = np.prod([factorial(k) for k in multi_index])
        return self.coef[index[multi_index]] * scale

    @property
    def value(self) -> np.ndarray:
        return self.coef[0]


def exp(x):
    """Exponential for jets or plain arrays."""
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def log(x):
    """Principal logarithm for jets or plain arrays."""
    return x.log() if isinstance(x, Jet) else np.log(x)


def sqrt(x):
    """Principal square root for jets or plain arrays."""
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)
