"""Truncated formal power series over double precision reals.

A :class:`TruncatedSeries` of order ``N`` represents ``c_0 + c_1 u + ... + c_N u^N``
modulo ``u^(N+1)``.  Every operation works on the first ``N+1`` coefficients only,
so the results are exact truncations of the true series (up to rounding).

:class:`TruncatedSeries2` is the bivariate analogue, storing ``a[i, j]`` for
``i + j <= N``.  Its main use is to hold a two-type generating function
``rho(s1, s2)`` before collapsing it with :func:`substitute_weighted`.
"""

from __future__ import annotations

import math

import numpy as np

ZERO_TOL = 1e-12


def _as_coeffs(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficients must be a non-empty 1-D sequence")
    return arr


class TruncatedSeries:
    """Univariate power series truncated after the ``u^order`` term."""

    __slots__ = ("_c",)

    def __init__(self, coeffs):
        c = _as_coeffs(coeffs)
        c.setflags(write=False)
        self._c = c

    @classmethod
    def zeros(cls, order: int) -> "TruncatedSeries":
        return cls(np.zeros(order + 1))

    @classmethod
    def constant(cls, value: float, order: int) -> "TruncatedSeries":
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def monomial(cls, power: int, order: int, coeff: float = 1.0) -> "TruncatedSeries":
        c = np.zeros(order + 1)
        if power <= order:
            c[power] = coeff
        return cls(c)

    @classmethod
    def from_poly(cls, coeffs, order: int) -> "TruncatedSeries":
        """Pad or cut a coefficient list to the given order."""
        c = np.zeros(order + 1)
        src = np.asarray(coeffs, dtype=float)[: order + 1]
        c[: src.size] = src
        return cls(c)

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def order(self) -> int:
        return self._c.size - 1

    def __len__(self):
        return self._c.size

    def __getitem__(self, n):
        return self._c[n]

    def __iter__(self):
        return iter(self._c)

    def __repr__(self):
        head = ", ".join(f"{x:.6g}" for x in self._c[:6])
        tail = ", ..." if self._c.size > 6 else ""
        return f"TruncatedSeries(order={self.order}, [{head}{tail}])"

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return other
        if np.isscalar(other):
            return TruncatedSeries.constant(float(other), self.order)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(-self._c)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return add(self, -other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return add(other, -self)

    def __mul__(self, other):
        if np.isscalar(other):
            return TruncatedSeries(self._c * float(other))
        if isinstance(other, TruncatedSeries):
            return mul(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return TruncatedSeries(self._c * float(other))
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return TruncatedSeries(self._c / float(other))
        if isinstance(other, TruncatedSeries):
            return div(self, other)
        return NotImplemented

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return div(other, self)

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = TruncatedSeries.constant(1.0, self.order)
        base = self
        while k:
            if k & 1:
                result = mul(result, base)
            k >>= 1
            if k:
                base = mul(base, base)
        return result

    def sqrt(self) -> "TruncatedSeries":
        return sqrt(self)

    def __call__(self, u: float) -> float:
        return eval_series(self, u)

    def shift_down(self, k: int = 1) -> "TruncatedSeries":
        """Divide by ``u^k``; the first ``k`` coefficients must vanish.

        The top ``k`` coefficients of the result are unknown at this order and
        the order drops by ``k``.
        """
        if k < 0 or k > self.order:
            raise ValueError("shift out of range")
        if k and np.any(np.abs(self._c[:k]) > ZERO_TOL):
            raise ValueError(f"leading {k} coefficients are not zero")
        return TruncatedSeries(self._c[k:])

    def truncate(self, order: int) -> "TruncatedSeries":
        return TruncatedSeries.from_poly(self._c, order)


def _check_orders(a: TruncatedSeries, b: TruncatedSeries):
    if a.order != b.order:
        raise ValueError(f"series order mismatch: {a.order} != {b.order}")


def add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    _check_orders(a, b)
    return TruncatedSeries(a.coeffs + b.coeffs)


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated at the common order."""
    _check_orders(a, b)
    n = a.order + 1
    return TruncatedSeries(np.convolve(a.coeffs, b.coeffs)[:n])


def div(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Quotient ``a / b`` by forward substitution; needs ``b_0 != 0``."""
    _check_orders(a, b)
    b0 = b.coeffs[0]
    if abs(b0) <= ZERO_TOL:
        raise ZeroDivisionError("divisor has a vanishing constant term")
    ac, bc = a.coeffs, b.coeffs
    n = a.order + 1
    c = np.zeros(n)
    for k in range(n):
        # c_k = (a_k - sum_{j=1}^{k} b_j c_{k-j}) / b_0
        acc = np.dot(bc[1 : k + 1], c[k - 1 :: -1][:k]) if k else 0.0
        c[k] = (ac[k] - acc) / b0
    return TruncatedSeries(c)


def sqrt(a: TruncatedSeries) -> TruncatedSeries:
    """Square root on the branch with positive constant term."""
    a0 = a.coeffs[0]
    if not a0 > 0:
        raise ValueError("sqrt needs a positive constant term")
    ac = a.coeffs
    n = a.order + 1
    b = np.zeros(n)
    b[0] = math.sqrt(a0)
    two_b0 = 2.0 * b[0]
    for k in range(1, n):
        acc = np.dot(b[1:k], b[k - 1 : 0 : -1]) if k > 1 else 0.0
        b[k] = (ac[k] - acc) / two_b0
    return TruncatedSeries(b)


def eval_series(a: TruncatedSeries, u: float) -> float:
    """Horner evaluation of the truncated polynomial."""
    acc = 0.0
    for c in a.coeffs[::-1]:
        acc = acc * u + c
    return float(acc)


class TruncatedSeries2:
    """Bivariate power series in ``(s1, s2)`` truncated at total degree ``order``.

    Coefficients live in an ``(order+1, order+1)`` array; entries with
    ``i + j > order`` are held at zero and never read.
    """

    __slots__ = ("_a",)

    def __init__(self, coeffs):
        a = np.array(coeffs, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("bivariate coefficients must be a square 2-D array")
        a = a * _triangle_mask(a.shape[0] - 1)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def zeros(cls, order: int) -> "TruncatedSeries2":
        return cls(np.zeros((order + 1, order + 1)))

    @classmethod
    def from_terms(cls, terms: dict, order: int) -> "TruncatedSeries2":
        """Build from ``{(i, j): coeff}``; terms beyond the order are dropped."""
        a = np.zeros((order + 1, order + 1))
        for (i, j), v in terms.items():
            if i + j <= order:
                a[i, j] += v
        return cls(a)

    @classmethod
    def constant(cls, value: float, order: int) -> "TruncatedSeries2":
        return cls.from_terms({(0, 0): value}, order)

    @classmethod
    def variable(cls, which: int, order: int) -> "TruncatedSeries2":
        """The coordinate series ``s1`` (``which=0``) or ``s2`` (``which=1``)."""
        key = (1, 0) if which == 0 else (0, 1)
        return cls.from_terms({key: 1.0}, order)

    @property
    def coeffs(self) -> np.ndarray:
        return self._a

    @property
    def order(self) -> int:
        return self._a.shape[0] - 1

    def total(self) -> float:
        return float(self._a.sum())

    def __add__(self, other):
        if np.isscalar(other):
            other = TruncatedSeries2.constant(float(other), self.order)
        _check_orders2(self, other)
        return TruncatedSeries2(self._a + other._a)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries2(-self._a)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return TruncatedSeries2(self._a * float(other))
        return mul2(self, other)

    def __rmul__(self, other):
        return TruncatedSeries2(self._a * float(other))

    def __truediv__(self, other):
        if np.isscalar(other):
            return TruncatedSeries2(self._a / float(other))
        return div2(self, other)

    def __rtruediv__(self, other):
        return div2(TruncatedSeries2.constant(float(other), self.order), self)

    def __call__(self, s1: float, s2: float) -> float:
        n = self.order + 1
        p1 = s1 ** np.arange(n)
        p2 = s2 ** np.arange(n)
        return float(p1 @ self._a @ p2)


def _triangle_mask(order: int) -> np.ndarray:
    idx = np.arange(order + 1)
    return (idx[:, None] + idx[None, :] <= order).astype(float)


def _check_orders2(a: TruncatedSeries2, b: TruncatedSeries2):
    if a.order != b.order:
        raise ValueError(f"series order mismatch: {a.order} != {b.order}")


def mul2(a: TruncatedSeries2, b: TruncatedSeries2) -> TruncatedSeries2:
    _check_orders2(a, b)
    n = a.order
    out = np.zeros((n + 1, n + 1))
    A, B = a.coeffs, b.coeffs
    for i in range(n + 1):
        # row i of the product collects s1^k * s1^(i-k); s2 degree <= n - i
        width = n - i + 1
        row = np.zeros(width)
        for k in range(i + 1):
            row += np.convolve(A[k, :width], B[i - k, :width])[:width]
        out[i, :width] = row
    return TruncatedSeries2(out)


def div2(a: TruncatedSeries2, b: TruncatedSeries2) -> TruncatedSeries2:
    """Quotient treating each series as a series in ``s1`` over series in ``s2``."""
    _check_orders2(a, b)
    n = a.order
    A, B = a.coeffs, b.coeffs
    if abs(B[0, 0]) <= ZERO_TOL:
        raise ZeroDivisionError("divisor has a vanishing constant term")
    rows = []
    for i in range(n + 1):
        width = n - i + 1
        acc = A[i, :width].copy()
        for k in range(1, i + 1):
            acc -= np.convolve(B[k, :width], rows[i - k][:width])[:width]
        rows.append(div(TruncatedSeries(acc), TruncatedSeries(B[0, :width])).coeffs)
    out = np.zeros((n + 1, n + 1))
    for i, r in enumerate(rows):
        out[i, : r.size] = r
    return TruncatedSeries2(out)


def substitute_weighted(a: TruncatedSeries2, weights=(2, 1), order: int | None = None) -> TruncatedSeries:
    """Collapse ``a(s1, s2)`` to the univariate series ``a(u^w1, u^w2)``.

    The result has the same order as ``a`` unless ``order`` is given.  Since
    ``w1*i + w2*j <= N`` implies ``i + j <= N`` for positive weights, every
    coefficient that can reach ``u^N`` is available.
    """
    w1, w2 = (int(w) for w in weights)
    if w1 < 1 or w2 < 1:
        raise ValueError("weights must be positive integers")
    n = a.order if order is None else int(order)
    if n > a.order:
        raise ValueError("requested order exceeds what the bivariate truncation determines")
    out = np.zeros(n + 1)
    A = a.coeffs
    for i in range(a.order + 1):
        base = w1 * i
        if base > n:
            break
        jmax = min(a.order - i, (n - base) // w2)
        js = np.arange(jmax + 1)
        np.add.at(out, base + w2 * js, A[i, : jmax + 1])
    return TruncatedSeries(out)
