"""Generating function of the total progeny ``Y = Z_0 + Z_1 + ...``.

``rho(s)`` is the limit of ``G_{n+1}(s) = s * phi(G_n(s))`` started at
``G_0(s) = s``; for ``0 << s << 1`` the iterates decrease monotonically to the
unique solution of ``u = s * phi(u)``.  Besides the pointwise solver this
module carries the closed forms of the two walk-derived families and truncated
series expansions used to read off exact distributions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, HonestyWarning
from .gwmodel import GWModel, OffspringSpec
from .series import TruncatedSeries, TruncatedSeries2, mul2, div2

ROOT_TOL = 1e-14


@dataclass(frozen=True)
class ProgenyPoint:
    s: np.ndarray
    rho: np.ndarray
    residual: float
    iterations: int


def progeny_pgf_point(model: GWModel, s, tol: float = 1e-12, max_iter: int = 1_000_000) -> ProgenyPoint:
    """Solve ``u = s * phi(u)`` by the monotone iteration from ``u = s``.

    Raises :class:`ConvergenceError` (carrying the last iterate) when the
    sup-norm change is still above ``tol`` after ``max_iter`` steps, which
    happens for ``s`` close to 1 in the critical case.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (model.L,):
        raise ValueError(f"s must have dimension {model.L}")
    if np.any(s <= 0) or np.any(s >= 1):
        raise ValueError("s must lie strictly inside the unit cube")
    if not tol > 0:
        raise ValueError("tol must be positive")

    g = s.copy()
    slack = 1e-15
    for it in range(1, max_iter + 1):
        nxt = s * model.phi(g)
        if np.any(nxt > g + slack):
            raise RuntimeError(f"iterates stopped decreasing at step {it}: monotonicity violated")
        change = float(np.max(np.abs(nxt - g)))
        g = nxt
        if change < tol:
            residual = float(np.max(np.abs(g - s * model.phi(g))))
            return ProgenyPoint(s=s, rho=g, residual=residual, iterations=it)
    raise ConvergenceError(
        f"no convergence to tol={tol:g} after {max_iter} iterations (last change {change:.3g})",
        last=g, iterations=max_iter, change=change,
    )


def _stay_discriminant(a: float, b: float, p: float, q: float) -> float:
    return a * a - 4.0 * p * q * b


def closed_form_stay(p: float, q: float, r: float, s) -> np.ndarray:
    """Total progeny PGF of the two-type process behind the walk with stay.

    Uses the rationalised form ``2 p s1 / (1 - r s2 + sqrt(D))`` of the
    negative-branch root, which avoids cancellation for small ``s1``.
    """
    _check_probs(p, q, r)
    if q > p:
        warnings.warn("q > p: the total progeny is infinite with positive probability", HonestyWarning, stacklevel=2)
    s1, s2 = (float(x) for x in s)
    a = 1.0 - r * s2
    disc = _stay_discriminant(a, s1, p, q)
    if disc < 0:
        raise DomainError("negative discriminant in the stay closed form")
    root = a + math.sqrt(disc)
    rho1 = 2.0 * p * s1 / root if root > 0 else 0.0
    return np.array([rho1, s2])


def _check_probs(*ps):
    if any(not x > 0 for x in ps):
        raise ValueError("probabilities must be positive")
    if abs(sum(ps) - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {sum(ps)!r}, not 1")


def smallest_root_in_unit(f, grid_step: float = 1e-3, tol: float = ROOT_TOL, zero_tol: float = 1e-13) -> float:
    """Smallest root of ``f`` on ``[0, 1]`` given ``f(0) > 0``.

    Sign changes are isolated on a uniform grid, then the first bracket is
    refined by bisection.  Grid points with ``|f| <= zero_tol`` count as
    roots, so a tangential root at 1 (critical drift) is still found.
    """
    lo_val = f(0.0)
    if lo_val <= zero_tol:
        return 0.0
    n = int(round(1.0 / grid_step))
    prev = 0.0
    for k in range(1, n + 1):
        x = k / n
        fx = f(x)
        if fx <= zero_tol:
            lo, hi = prev, x
            if fx > 0:
                return x
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if f(mid) > 0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        prev = x
    raise DomainError("cubic has no real root in [0, 1]")


def closed_form_21(p: float, q1: float, q2: float, u) -> np.ndarray:
    """Total progeny PGF of the two-type process behind the (2-1) walk.

    ``rho1`` is the smallest root in ``[0, 1]`` of
    ``q2 (u2/u1) g^3 + q1 g^2 - g + p u1``; then ``rho2 = rho1^2 u2 / u1``.
    """
    _check_probs(p, q1, q2)
    u1, u2 = (float(x) for x in u)
    if not (0 < u1 <= 1 and 0 < u2 <= 1):
        raise ValueError("u must lie in (0, 1]^2")
    c3 = q2 * u2 / u1
    c0 = p * u1

    def cubic(g):
        return ((c3 * g + q1) * g - 1.0) * g + c0

    g = smallest_root_in_unit(cubic)
    return np.array([g, g * g * u2 / u1])


def progeny_series_stay(p: float, q: float, r: float, N: int) -> TruncatedSeries:
    """Series of ``rho1(u^2, u)``, i.e. ``E(u^(T+1))`` for the walk with stay.

    Built from ``((1 - r u) - sqrt((1 - r u)^2 - 4 p q u^2)) / (2 q)``.
    """
    _check_probs(p, q, r)
    if q > p:
        warnings.warn("q > p: hitting-time law is defective", HonestyWarning, stacklevel=2)
    one_minus_ru = TruncatedSeries.from_poly([1.0, -r], N)
    disc = one_minus_ru * one_minus_ru - TruncatedSeries.monomial(2, N, 4.0 * p * q)
    eta = (one_minus_ru - disc.sqrt()) / (2.0 * q)
    c = eta.coeffs.copy()
    # the two leading coefficients cancel exactly in exact arithmetic
    c[:2] = 0.0
    return TruncatedSeries(c)


def progeny_series_21(p: float, q1: float, q2: float, N: int, method: str = "sweep", check: bool = True) -> TruncatedSeries:
    """Series ``g(s) = s h(s) = E(s^(T+1))`` for the (2-1) walk.

    ``g`` is the fixed point of ``g = p s^2 + q1 g^2 + q2 s^-1 g^3``.
    Coefficient ``n`` of the right-hand side only reads ``g_k`` with ``k < n``,
    so one in-order sweep ("sweep") already lands on the fixed point; the
    "passes" method repeats whole-series substitutions from ``g = p s^2`` until
    nothing changes, and is O(N) times slower.  With ``check`` one more full
    substitution pass is applied and must leave the sweep result unchanged.
    """
    _check_probs(p, q1, q2)
    if p - q1 - 2.0 * q2 < -1e-12:
        warnings.warn("p - q1 - 2 q2 < 0: hitting-time law is defective", HonestyWarning, stacklevel=2)
    if N < 2:
        return TruncatedSeries.zeros(N)

    if method == "passes":
        g = _passes_21(p, q1, q2, N)
    elif method == "sweep":
        g = _sweep_21(p, q1, q2, N)
    else:
        raise ValueError(f"unknown method {method!r}")

    if check:
        again = _substitute_21(g, p, q1, q2)
        gap = float(np.max(np.abs(again - g)))
        if gap > 1e-13 * max(1.0, float(np.max(np.abs(g)))):
            raise RuntimeError(f"series fixed point did not stabilise (gap {gap:.3g})")
    return TruncatedSeries(g)


def _substitute_21(g: np.ndarray, p: float, q1: float, q2: float) -> np.ndarray:
    n = g.size
    g2 = np.convolve(g, g)[: n + 1]
    g3 = np.convolve(g2, g)[: n + 1]
    out = q1 * g2[:n]
    out = out + q2 * g3[1 : n + 1]
    out[2] += p
    return out


def _passes_21(p, q1, q2, N):
    g = np.zeros(N + 1)
    g[2] = p
    for _ in range(N + 2):
        nxt = _substitute_21(g, p, q1, q2)
        if np.array_equal(nxt, g):
            break
        g = nxt
    return g


def _sweep_21(p, q1, q2, N):
    g = np.zeros(N + 1)
    sq = np.zeros(N + 2)  # coefficients of g^2
    for n in range(2, N + 1):
        # g^2 at n needs g_1..g_{n-1}; g_0 = 0 kills the endpoint terms
        sq[n] = np.dot(g[1:n], g[n - 1 : 0 : -1])
        cube_next = np.dot(g[1:n], sq[n:1:-1])  # (g^3)_{n+1}
        g[n] = q1 * sq[n] + q2 * cube_next + (p if n == 2 else 0.0)
    return g


def phi_series2(spec: OffspringSpec, G1: TruncatedSeries2, G2: TruncatedSeries2) -> TruncatedSeries2:
    """Offspring PGF of a two-type spec composed with bivariate series."""
    N = G1.order
    if spec.kind == "geometric":
        q1, q2 = spec.q
        denom = 1.0 - (G1 * q1 + G2 * q2)
        num = TruncatedSeries2.constant(spec.p, N)
        if spec.shift:
            num = G1 * spec.p
        return div2(num, denom)
    out = TruncatedSeries2.zeros(N)
    for (a, b), w in spec.entries:
        term = TruncatedSeries2.constant(w, N)
        for _ in range(a):
            term = mul2(term, G1)
        for _ in range(b):
            term = mul2(term, G2)
        out = out + term
    return out


def progeny_series_bivariate(model: GWModel, N: int) -> tuple:
    """Bivariate series of ``(rho1, rho2)`` for a two-type model.

    Runs ``G <- s * phi(G)`` on series truncated at total degree ``N``
    starting from ``G = s``.  Every pass fixes at least one more total degree,
    so ``N + 1`` passes reach the fixed point; the loop stops once a pass
    changes nothing.
    """
    if model.L != 2:
        raise ValueError("bivariate expansion needs a two-type model")
    s1 = TruncatedSeries2.variable(0, N)
    s2 = TruncatedSeries2.variable(1, N)
    G1, G2 = s1, s2
    for _ in range(N + 2):
        n1 = mul2(s1, phi_series2(model.specs[0], G1, G2))
        n2 = mul2(s2, phi_series2(model.specs[1], G1, G2))
        done = np.array_equal(n1.coeffs, G1.coeffs) and np.array_equal(n2.coeffs, G2.coeffs)
        G1, G2 = n1, n2
        if done:
            break
    return G1, G2
