"""Independent reference computations used by the tests.

Nothing here calls the series or solver code under test.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def ballot_pmf(p: float, n_max: int) -> np.ndarray:
    """``P(T = 2k+1) = C(2k+1, k+1) p^(k+1) q^k / (2k+1)`` with exact binomials."""
    q = 1.0 - p
    out = np.zeros(n_max + 1)
    k = 0
    while 2 * k + 1 <= n_max:
        n = 2 * k + 1
        out[n] = math.comb(n, k + 1) / n * p ** (k + 1) * q**k
        k += 1
    return out


def ballot_pmf_exact(p: Fraction, n_max: int) -> list:
    q = 1 - p
    out = [Fraction(0)] * (n_max + 1)
    for k in range((n_max - 1) // 2 + 1):
        n = 2 * k + 1
        out[n] = Fraction(math.comb(n, k + 1), n) * p ** (k + 1) * q**k
    return out


def sqrt_one_minus_u(n_max: int) -> list:
    """Exact coefficients of ``sqrt(1 - u)``: ``-(2n-3)!!/(2n)!!`` for ``n >= 1``."""
    out = [Fraction(1)]
    for n in range(1, n_max + 1):
        num = 1
        for j in range(2 * n - 3, 0, -2):
            num *= j
        den = 1
        for j in range(2 * n, 0, -2):
            den *= j
        out.append(Fraction(-num, den))
    return out


def p_recursive_ratio(x: float, n_max: int) -> np.ndarray:
    """Coefficients of ``sqrt((1 - x u)/(1 - u))`` from their three-term recurrence.

    With ``f = sqrt((1-xu)/(1-u))``, ``2 (1-u)(1-xu) f' = (1-x) f``, which gives
    ``2 (n+1) f_{n+1} = (2 (1+x) n + (1-x)) f_n - 2 x (n-1) f_{n-1}``.
    """
    f = np.zeros(n_max + 1)
    f[0] = 1.0
    if n_max >= 1:
        f[1] = (1.0 - x) / 2.0
    for n in range(1, n_max):
        f[n + 1] = ((2 * (1 + x) * n + (1 - x)) * f[n] - 2 * x * (n - 1) * f[n - 1]) / (2 * (n + 1))
    return f


def finite_difference_jacobian(func, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def stay_hitting_bruteforce(p: float, q: float, r: float, n_max: int) -> np.ndarray:
    """``P(T = n)`` by dynamic programming over the walk's position."""
    out = np.zeros(n_max + 1)
    # dist[k] = P(at position -k, not yet hit)
    dist = np.zeros(n_max + 2)
    dist[0] = 1.0
    for n in range(1, n_max + 1):
        out[n] = dist[0] * p
        new = np.zeros_like(dist)
        new[:-1] += dist[:-1] * r
        new[1:] += dist[:-1] * q
        new[:-1] += np.concatenate((dist[1:], [0.0]))[:-1] * p
        dist = new
    return out


def two_one_hitting_bruteforce(p: float, q1: float, q2: float, n_max: int) -> np.ndarray:
    out = np.zeros(n_max + 1)
    depth = 2 * n_max + 3
    dist = np.zeros(depth)
    dist[0] = 1.0
    for n in range(1, n_max + 1):
        out[n] = dist[0] * p
        new = np.zeros_like(dist)
        new[:-1] += dist[1:] * p  # up from -(k+1) to -k
        new[1:] += dist[:-1] * q1
        new[2:] += dist[:-2] * q2
        dist = new
    return out
