"""Polynomial phase-space symbols and derivative jets.

A :class:`Symbol` is a polynomial in (Q, P) with complex coefficients, so all
its partial derivatives are exact.  A :class:`Jet` stores a function together
with all its partial derivatives up to a total order, sampled on a grid, and
supports the Leibniz product; it is the common currency of the coefficient
formulas in :mod:`qrevdiff.semiclassical`.
"""

from math import comb
from numbers import Number

import numpy as np
from numpy.polynomial import polynomial as npoly


class Symbol:
    """Polynomial ``sum_ij c[i, j] Q**i P**j``."""

    __array_priority__ = 100

    def __init__(self, coeffs):
        c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        self.coeffs = _trim(c)

    @classmethod
    def Q(cls) -> "Symbol":
        return cls([[0.0], [1.0]])

    @classmethod
    def P(cls) -> "Symbol":
        return cls([[0.0, 1.0]])

    @classmethod
    def const(cls, value) -> "Symbol":
        return cls([[value]])

    @classmethod
    def from_terms(cls, terms: dict) -> "Symbol":
        """Build from ``{(i, j): coefficient}``."""
        if not terms:
            return cls.const(0.0)
        ni = max(i for i, _ in terms) + 1
        nj = max(j for _, j in terms) + 1
        c = np.zeros((ni, nj), complex)
        for (i, j), v in terms.items():
            c[i, j] += v
        return cls(c)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Symbol):
            return other
        if isinstance(other, Number):
            return Symbol.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a, b = self.coeffs, other.coeffs
        out = np.zeros((max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])), complex)
        out[: a.shape[0], : a.shape[1]] += a
        out[: b.shape[0], : b.shape[1]] += b
        return Symbol(out)

    __radd__ = __add__

    def __neg__(self):
        return Symbol(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Symbol(self.coeffs * other)
        if not isinstance(other, Symbol):
            return NotImplemented
        a, b = self.coeffs, other.coeffs
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), complex)
        for i, j in zip(*np.nonzero(a)):
            out[i: i + b.shape[0], j: j + b.shape[1]] += a[i, j] * b
        return Symbol(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Number):
            return NotImplemented
        return Symbol(self.coeffs / other)

    def __pow__(self, n: int):
        out = Symbol.const(1.0)
        for _ in range(int(n)):
            out = out * self
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        d = (self - other).coeffs
        return bool(np.all(d == 0))

    def __repr__(self):
        terms = [f"({v:.6g})Q^{i}P^{j}" for (i, j), v in np.ndenumerate(self.coeffs) if v != 0]
        return "Symbol(" + (" + ".join(terms) or "0") + ")"

    def conj(self) -> "Symbol":
        return Symbol(self.coeffs.conj())

    @property
    def real(self) -> "Symbol":
        return Symbol(self.coeffs.real)

    @property
    def imag(self) -> "Symbol":
        return Symbol(self.coeffs.imag)

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.coeffs.imag == 0))

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coeffs != 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    def derivative(self, dq: int = 0, dp: int = 0) -> "Symbol":
        c = self.coeffs
        if dq:
            c = npoly.polyder(c, dq, axis=0) if c.shape[0] > dq else np.zeros((1, c.shape[1]), complex)
        if dp:
            c = npoly.polyder(c, dp, axis=1) if c.shape[1] > dp else np.zeros((c.shape[0], 1), complex)
        return Symbol(c)

    def __call__(self, Q, P):
        out = npoly.polyval2d(np.asarray(Q, float), np.asarray(P, float), self.coeffs)
        return out.real if self.is_real else out

    def evaluate(self, grid, dq: int = 0, dp: int = 0) -> np.ndarray:
        Qm, Pm = grid.mesh()
        return self.derivative(dq, dp)(Qm, Pm)

    def jet(self, grid, order: int) -> "Jet":
        Qm, Pm = grid.mesh()
        vals = {}
        for i in range(order + 1):
            for j in range(order + 1 - i):
                d = self.derivative(i, j)
                vals[(i, j)] = npoly.polyval2d(Qm, Pm, d.coeffs)
        return Jet(vals, order)


def _trim(c):
    nz = np.argwhere(c != 0)
    if len(nz) == 0:
        return np.zeros((1, 1), complex)
    return c[: nz[:, 0].max() + 1, : nz[:, 1].max() + 1].copy()


class Jet:
    """Values and partial derivatives ``{(i, j): d^i_Q d^j_P f}`` for i + j <= order."""

    def __init__(self, values: dict, order: int):
        self.values = values
        self.order = order

    def __getitem__(self, key):
        return self.values[key]

    @property
    def value(self):
        return self.values[(0, 0)]

    def _keys(self, order):
        return [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]

    @classmethod
    def constant(cls, value, order, shape=()):
        vals = {(i, j): np.zeros(shape) for i in range(order + 1) for j in range(order + 1 - i)}
        vals[(0, 0)] = np.broadcast_to(np.asarray(value), shape).copy() if shape else value
        return cls(vals, order)

    def __add__(self, other):
        if isinstance(other, Jet):
            o = min(self.order, other.order)
            return Jet({k: self.values[k] + other.values[k] for k in self._keys(o)}, o)
        vals = dict(self.values)
        vals[(0, 0)] = vals[(0, 0)] + other
        return Jet(vals, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet({k: -v for k, v in self.values.items()}, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet({k: v * other for k, v in self.values.items()}, self.order)
        o = min(self.order, other.order)
        out = {}
        for a, b in self._keys(o):
            acc = 0
            for i in range(a + 1):
                for j in range(b + 1):
                    acc = acc + comb(a, i) * comb(b, j) * self.values[(i, j)] * other.values[(a - i, b - j)]
            out[(a, b)] = acc
        return Jet(out, o)

    __rmul__ = __mul__

    def conj(self):
        return Jet({k: np.conj(v) for k, v in self.values.items()}, self.order)

    @property
    def real(self):
        return Jet({k: np.real(v) for k, v in self.values.items()}, self.order)

    def d(self, axis: int) -> "Jet":
        """Derivative along axis 0 (Q) or 1 (P); the order drops by one."""
        if self.order < 1:
            raise ValueError("jet has no derivative information left")
        shift = (1, 0) if axis == 0 else (0, 1)
        o = self.order - 1
        return Jet({(i, j): self.values[(i + shift[0], j + shift[1])] for i, j in self._keys(o)}, o)

    def truncate(self, order: int) -> "Jet":
        return Jet({k: self.values[k] for k in self._keys(order)}, order)
