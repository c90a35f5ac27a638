"""Truncated bivariate Taylor arithmetic.

A Jet of order K stores the Taylor coefficients c_ij (i + j <= K) of a function of
(t, theta) around a set of base points, one numpy array per coefficient.  The
arithmetic operators and the common numpy ufuncs act on jets, so a surface
evaluator written with plain numpy expressions returns exact partial
derivatives up to order K when fed jet arguments.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np


@lru_cache(maxsize=None)
def _indices(order: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, d - i) for d in range(order + 1) for i in range(d, -1, -1))


@lru_cache(maxsize=None)
def _position(order: int) -> dict:
    return {ij: k for k, ij in enumerate(_indices(order))}


@lru_cache(maxsize=None)
def _product_table(order: int) -> tuple[tuple[int, int, int], ...]:
    idx = _indices(order)
    pos = _position(order)
    table = []
    for k, (i, j) in enumerate(idx):
        for a in range(i + 1):
            for b in range(j + 1):
                table.append((k, pos[(a, b)], pos[(i - a, j - b)]))
    return tuple(table)


class Jet:
    __array_priority__ = 1000

    def __init__(self, coeffs, order: int):
        self.order = order
        self.c = coeffs  # list of arrays, ordered as _indices(order)

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        zero = np.zeros_like(value)
        return cls([value] + [zero] * (len(_indices(order)) - 1), order)

    @classmethod
    def variable(cls, value, axis: int, order: int) -> "Jet":
        jet = cls.constant(value, order)
        if order >= 1:
            one = np.ones_like(jet.c[0])
            jet.c[_position(order)[(1, 0) if axis == 0 else (0, 1)]] = one
        return jet

    @classmethod
    def from_derivatives(cls, derivs: dict, order: int) -> "Jet":
        """Build from partial derivatives {(i, j): d^{i+j} f / dt^i dtheta^j}."""
        coeffs = []
        for i, j in _indices(order):
            coeffs.append(np.asarray(derivs[(i, j)], dtype=float) / (factorial(i) * factorial(j)))
        return cls(coeffs, order)

    # access -------------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def deriv(self, i: int, j: int) -> np.ndarray:
        """Partial derivative d^{i+j}/dt^i dtheta^j at the base points."""
        return self.c[_position(self.order)[(i, j)]] * (factorial(i) * factorial(j))

    def d(self, axis: int) -> "Jet":
        """Jet of the partial derivative along axis 0 (t) or 1 (theta); order drops by one."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        pos = _position(self.order)
        coeffs = []
        for i, j in _indices(self.order - 1):
            if axis == 0:
                coeffs.append((i + 1) * self.c[pos[(i + 1, j)]])
            else:
                coeffs.append((j + 1) * self.c[pos[(i, j + 1)]])
        return Jet(coeffs, self.order - 1)

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.c[: len(_indices(order))], order)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order)

    def _match(self, other):
        other = self._coerce(other)
        k = min(self.order, other.order)
        return self.truncate(k), other.truncate(k)

    def __add__(self, other):
        a, b = self._match(other)
        return Jet([x + y for x, y in zip(a.c, b.c)], a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-x for x in self.c], self.order)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet([x * other for x in self.c], self.order)
        a, b = self._match(other)
        out = [None] * len(a.c)
        for k, p, q in _product_table(a.order):
            term = a.c[p] * b.c[q]
            out[k] = term if out[k] is None else out[k] + term
        return Jet(out, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = Jet.constant(np.ones_like(self.value), self.order)
            for _ in range(int(p)):
                out = out * self
            return out
        x = self.value
        derivs = [x**p]
        coef = 1.0
        for m in range(1, self.order + 1):
            coef *= p - m + 1
            derivs.append(coef * x ** (p - m))
        return self._compose(derivs)

    # composition with univariate functions --------------------------------
    def _compose(self, derivs) -> "Jet":
        """f(self) from the derivatives f^(m)(value), m = 0..order."""
        delta = Jet([np.zeros_like(self.c[0])] + list(self.c[1:]), self.order)
        out = Jet.constant(derivs[0], self.order)
        power = None
        for m in range(1, self.order + 1):
            power = delta if power is None else power * delta
            out = out + power * (derivs[m] / factorial(m))
        return out

    def reciprocal(self) -> "Jet":
        x = self.value
        derivs = [(-1.0) ** m * factorial(m) / x ** (m + 1) for m in range(self.order + 1)]
        return self._compose(derivs)

    def _periodic(self, cycle):
        return self._compose([cycle[m % len(cycle)] for m in range(self.order + 1)])

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._periodic([s, c, -s, -c])

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._periodic([c, -s, -c, s])

    def exp(self):
        e = np.exp(self.value)
        return self._compose([e] * (self.order + 1))

    def sinh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self._periodic([s, c])

    def cosh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self._periodic([c, s])

    def tanh(self):
        # derivatives as polynomials in T = tanh and S = sech, with T' = S^2 and S' = -S T;
        # avoids the cancellation in 1 - T^2 far out on the tails
        T = np.tanh(self.value)
        S = 1.0 / np.cosh(self.value)
        poly = {(1, 0): 1.0}  # monomials T^p S^q
        derivs = [T]
        for _ in range(self.order):
            nxt = {}
            for (p, q), c in poly.items():
                if p:
                    nxt[(p - 1, q + 2)] = nxt.get((p - 1, q + 2), 0.0) + c * p
                if q:
                    nxt[(p + 1, q)] = nxt.get((p + 1, q), 0.0) - c * q
            poly = nxt
            derivs.append(sum(c * T**p * S**q for (p, q), c in poly.items()))
        return self._compose(derivs)

    def sqrt(self):
        return self ** 0.5

    def log(self):
        x = self.value
        derivs = [np.log(x)] + [(-1.0) ** (m - 1) * factorial(m - 1) / x**m for m in range(1, self.order + 1)]
        return self._compose(derivs)

    _UFUNCS = {
        np.add: lambda a, b: a + b,
        np.subtract: lambda a, b: a - b,
        np.multiply: lambda a, b: a * b,
        np.true_divide: lambda a, b: a / b,
        np.power: lambda a, b: a**b,
        np.negative: lambda a: -a,
        np.sin: lambda a: a.sin(),
        np.cos: lambda a: a.cos(),
        np.exp: lambda a: a.exp(),
        np.sinh: lambda a: a.sinh(),
        np.cosh: lambda a: a.cosh(),
        np.tanh: lambda a: a.tanh(),
        np.sqrt: lambda a: a.sqrt(),
        np.log: lambda a: a.log(),
    }

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs or ufunc not in self._UFUNCS:
            return NotImplemented
        fn = self._UFUNCS[ufunc]
        if len(inputs) == 1:
            return fn(inputs[0])
        a, b = inputs
        if not isinstance(a, Jet):
            # keep the jet on the left where the operation is not symmetric
            if ufunc is np.subtract:
                return b.__rsub__(a)
            if ufunc is np.true_divide:
                return b.__rtruediv__(a)
            if ufunc is np.power:
                return NotImplemented
            return fn(b, a)
        return fn(a, b)


def value_of(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)
