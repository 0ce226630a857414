"""First-passage times of random walks with bounded jumps.

Covers the simple walk, the walk with stay (steps +1/-1/0 with p/q/r) and the
(2-1) walk (steps +1/-1/-2 with p/q1/q2).  For the latter two, ``T + 1`` has
the law of ``2 Y1 + Y2`` for the total progeny ``Y`` of a two-type branching
process, so exact distributions come from the progeny series.  Tail sequences
of the critical walk with stay are computed from double-factorial
convolutions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, HonestyWarning, SpecError
from .gwmodel import GWModel, OffspringSpec
from .progeny import progeny_series_21, progeny_series_stay

NORM_TOL = 1e-12
KINDS = ("simple", "stay", "two_one", "general")


@dataclass(frozen=True)
class WalkSpec:
    """Jump law of a walk started at 0; ``jumps`` is a tuple of (step, prob)."""

    kind: str
    jumps: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown walk kind {self.kind!r}")
        steps = [int(l) for l, _ in self.jumps]
        probs = [float(w) for _, w in self.jumps]
        if len(set(steps)) != len(steps):
            raise SpecError("duplicate jump sizes")
        if any(l == 0 for l in steps) and self.kind != "stay":
            raise SpecError("zero jumps are only allowed for the walk with stay")
        if any(not w > 0 for w in probs):
            raise SpecError("jump probabilities must be positive")
        if abs(sum(probs) - 1.0) > NORM_TOL:
            raise SpecError(f"jump probabilities sum to {sum(probs)!r}, not 1")
        if max(steps) < 1:
            raise SpecError("walk needs an upward jump to reach level 1")
        object.__setattr__(self, "jumps", tuple(sorted(zip(steps, probs))))

    @classmethod
    def simple(cls, p: float) -> "WalkSpec":
        return cls("simple", ((1, p), (-1, 1.0 - p)))

    @classmethod
    def stay(cls, p: float, q: float, r: float) -> "WalkSpec":
        return cls("stay", ((1, p), (-1, q), (0, r)))

    @classmethod
    def two_one(cls, p: float, q1: float, q2: float) -> "WalkSpec":
        return cls("two_one", ((1, p), (-1, q1), (-2, q2)))

    @classmethod
    def general(cls, probs: dict) -> "WalkSpec":
        return cls("general", tuple((int(k), float(v)) for k, v in probs.items()))

    def prob(self, step: int) -> float:
        return dict(self.jumps).get(step, 0.0)

    @property
    def params(self) -> tuple:
        if self.kind == "simple":
            return (self.prob(1),)
        if self.kind == "stay":
            return (self.prob(1), self.prob(-1), self.prob(0))
        if self.kind == "two_one":
            return (self.prob(1), self.prob(-1), self.prob(-2))
        return tuple(self.jumps)

    @property
    def drift(self) -> float:
        return float(sum(l * w for l, w in self.jumps))

    @property
    def max_up(self) -> int:
        return max(l for l, _ in self.jumps)

    def reaches_one_surely(self) -> bool:
        """Drift condition: ``q <= p`` (simple, stay) or ``p - q1 - 2 q2 >= 0``."""
        return self.drift >= -NORM_TOL

    def branching_model(self) -> GWModel:
        """Branching process whose total progeny encodes the hitting time."""
        if self.kind == "simple":
            p = self.prob(1)
            return GWModel((OffspringSpec.geometric(p, [1.0 - p]),))
        if self.kind == "stay":
            p, q, r = self.params
            return GWModel((OffspringSpec.geometric(p, [q, r]), OffspringSpec.sterile(2)))
        if self.kind == "two_one":
            p, q1, q2 = self.params
            return GWModel((OffspringSpec.geometric(p, [q1, q2]), OffspringSpec.geometric(p, [q1, q2], shift=1)))
        raise ValueError("no branching structure is built for general (L-R) walks")

    def to_json(self) -> dict:
        if self.kind == "simple":
            return {"kind": "simple", "p": self.prob(1)}
        if self.kind == "stay":
            p, q, r = self.params
            return {"kind": "stay", "p": p, "q": q, "r": r}
        if self.kind == "two_one":
            p, q1, q2 = self.params
            return {"kind": "two_one", "p": p, "q1": q1, "q2": q2}
        return {"kind": "general", "jumps": {str(l): w for l, w in self.jumps}}

    @classmethod
    def from_json(cls, obj: dict) -> "WalkSpec":
        if not isinstance(obj, dict):
            raise SpecError("walk descriptor must be a JSON object")
        kind = obj.get("kind")
        fields = {
            "simple": ("p",),
            "stay": ("p", "q", "r"),
            "two_one": ("p", "q1", "q2"),
            "general": ("jumps",),
        }
        if kind not in fields:
            raise SpecError(f"unknown walk kind {kind!r}")
        allowed = {"kind", *fields[kind]}
        extra = set(obj) - allowed
        if extra:
            raise SpecError(f"unknown keys: {sorted(extra)}")
        missing = allowed - set(obj)
        if missing:
            raise SpecError(f"missing keys: {sorted(missing)}")
        try:
            if kind == "general":
                if not isinstance(obj["jumps"], dict):
                    raise SpecError("'jumps' must map step sizes to probabilities")
                return cls.general({int(k): float(v) for k, v in obj["jumps"].items()})
            args = [float(obj[k]) for k in fields[kind]]
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"bad numeric field in walk descriptor: {exc}") from exc
        if kind == "simple":
            if not 0 < args[0] < 1:
                raise SpecError("simple walk needs 0 < p < 1")
            return cls.simple(*args)
        return getattr(cls, kind)(*args)


@dataclass(frozen=True)
class HittingTimeDist:
    """``probs[n] = P(T = n)`` for ``n = 0..horizon`` plus the missing mass."""

    probs: np.ndarray
    defect: float

    @classmethod
    def from_probs(cls, probs) -> "HittingTimeDist":
        probs = np.asarray(probs, dtype=float)
        probs.setflags(write=False)
        return cls(probs=probs, defect=float(1.0 - probs.sum()))

    @property
    def horizon(self) -> int:
        return self.probs.size - 1

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def survival(self) -> np.ndarray:
        """``P(T >= n)`` for ``n = 0..horizon``."""
        return 1.0 - np.concatenate(([0.0], np.cumsum(self.probs)[:-1]))

    def tv_distance(self, other: "HittingTimeDist") -> float:
        """Total variation, with the defects counted as one extra atom."""
        n = max(self.probs.size, other.probs.size)
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.probs.size] = self.probs
        b[: other.probs.size] = other.probs
        return 0.5 * float(np.abs(a - b).sum() + abs(self.defect - other.defect))


# -- simple walk -------------------------------------------------------------

def simple_hitting_pmf(p: float, n_max: int) -> HittingTimeDist:
    """``P(T = 2k+1) = C_k p^(k+1) q^k`` via the ratio recurrence.

    ``C_{k+1} / C_k = 2 (2k+1) / (k+2)``, so no binomial coefficient is ever
    formed and large horizons underflow to 0 gracefully.
    """
    if not 0 < p < 1:
        raise ValueError("need 0 < p < 1")
    q = 1.0 - p
    probs = np.zeros(n_max + 1)
    term = p
    k = 0
    while 2 * k + 1 <= n_max:
        probs[2 * k + 1] = term
        term *= 2.0 * (2 * k + 1) / (k + 2) * p * q
        k += 1
    return HittingTimeDist.from_probs(probs)


def simple_hitting_pgf(p: float, s: float) -> float:
    """``E(s^T) = (1 - sqrt(1 - 4 p q s^2)) / (2 q s)``, evaluated stably."""
    if not 0 < p < 1:
        raise ValueError("need 0 < p < 1")
    q = 1.0 - p
    disc = 1.0 - 4.0 * p * q * s * s
    if disc < 0:
        raise DomainError("negative discriminant")
    return 2.0 * p * s / (1.0 + math.sqrt(disc))


# -- walk with stay ----------------------------------------------------------

def stay_hitting_pgf(p: float, q: float, r: float, u: float) -> float:
    """``E(u^T) = (1 - r u - sqrt((1 - r u)^2 - 4 p q u^2)) / (2 q u)``."""
    _check3(p, q, r)
    if q > p:
        warnings.warn("q > p: E(u^T) is a defective generating function", HonestyWarning, stacklevel=2)
    a = 1.0 - r * u
    disc = a * a - 4.0 * p * q * u * u
    if disc < 0:
        raise DomainError("negative discriminant")
    return 2.0 * p * u / (a + math.sqrt(disc))


def stay_hitting_pmf(p: float, q: float, r: float, n_max: int) -> HittingTimeDist:
    """Exact ``P(T = n)``, read off ``E(u^(T+1))`` shifted by one."""
    _check3(p, q, r)
    eta = progeny_series_stay(p, q, r, n_max + 1)
    probs = np.array(eta.coeffs[1:], dtype=float)
    probs[0] = 0.0
    return HittingTimeDist.from_probs(probs)


def two_one_hitting_pmf(p: float, q1: float, q2: float, n_max: int) -> HittingTimeDist:
    """Exact ``P(T = n)`` as the coefficient of ``s^(n+1)`` in ``g = s h(s)``."""
    _check3(p, q1, q2)
    g = progeny_series_21(p, q1, q2, n_max + 1)
    probs = np.array(g.coeffs[1:], dtype=float)
    probs[0] = 0.0
    return HittingTimeDist.from_probs(probs)


def hitting_pmf(spec: WalkSpec, n_max: int) -> HittingTimeDist:
    if spec.kind == "simple":
        return simple_hitting_pmf(spec.prob(1), n_max)
    if spec.kind == "stay":
        return stay_hitting_pmf(*spec.params, n_max)
    if spec.kind == "two_one":
        return two_one_hitting_pmf(*spec.params, n_max)
    raise ValueError("no analytic hitting law for general (L-R) walks")


def _check3(a, b, c):
    if min(a, b, c) <= 0:
        raise ValueError("probabilities must be positive")
    if abs(a + b + c - 1.0) > NORM_TOL:
        raise ValueError(f"probabilities sum to {a + b + c!r}, not 1")


# -- double-factorial sequences and tails ------------------------------------

def central_ratio_sequence(n_max: int) -> np.ndarray:
    """``b_n = (2n-1)!!/(2n)!!``, the coefficients of ``(1 - u)^(-1/2)``."""
    ratios = np.ones(n_max + 1)
    k = np.arange(1, n_max + 1, dtype=float)
    ratios[1:] = (2.0 * k - 1.0) / (2.0 * k)
    return np.cumprod(ratios)


def sqrt_defect_sequence(x: float, n_max: int) -> np.ndarray:
    """``a_0 = 1``, ``a_n = (2n-3)!!/(2n)!! x^n`` for ``n >= 1``.

    With this convention ``sum_n a_n(x) u^n = 2 - sqrt(1 - x u)``.  The terms
    are built by the multiplicative recurrence ``a_n = a_{n-1} x (2n-3)/(2n)``
    so signed ``x`` and large ``n`` are safe (tiny terms underflow to 0).
    """
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        ratios = np.empty(n_max)
        ratios[0] = x / 2.0
        k = np.arange(2, n_max + 1, dtype=float)
        ratios[1:] = x * (2.0 * k - 3.0) / (2.0 * k)
        with np.errstate(under="ignore"):
            out[1:] = np.cumprod(ratios)
    return out


def lemma_convolution(x: float, n: int) -> float:
    """``sum_{k=0}^{n} a_k(x) b_{n-k}`` for a single index, in O(n)."""
    a = sqrt_defect_sequence(x, n)
    b = central_ratio_sequence(n)
    return float(np.dot(a, b[::-1]))


def convolution_limit_check(x: float, n: int) -> float:
    """``sqrt(n) * sum_k a_k(x) b_{n-k}``; tends to ``(2 - sqrt(1 - x)) / sqrt(pi)``."""
    if not -1 < x < 1:
        raise ValueError("need |x| < 1")
    if n < 1:
        raise ValueError("need n >= 1")
    return math.sqrt(n) * lemma_convolution(x, n)


def lemma_limit(x: float) -> float:
    return (2.0 - math.sqrt(1.0 - x)) / math.sqrt(math.pi)


def _convolve_prefix(a: np.ndarray, b: np.ndarray, n_max: int) -> np.ndarray:
    if n_max <= 4096:
        return np.convolve(a, b)[: n_max + 1]
    return fftconvolve(a, b)[: n_max + 1]


def _critical_tail(r: float, x: float, n_max: int) -> np.ndarray:
    # coefficients of (sqrt((1 - x u)/(1 - u)) - r) / (1 - r)
    b = central_ratio_sequence(n_max)
    a = sqrt_defect_sequence(x, n_max)
    seq = (2.0 * b - _convolve_prefix(a, b, n_max)) / (1.0 - r)
    seq[0] -= r / (1.0 - r)
    return seq


def _critical_tail_at(r: float, x: float, n: int) -> float:
    b = central_ratio_sequence(n)
    val = (2.0 * b[n] - lemma_convolution(x, n)) / (1.0 - r)
    if n == 0:
        val -= r / (1.0 - r)
    return val


def _check_r(r: float):
    if not 0 < r < 1:
        raise ValueError("need 0 < r < 1")


def theta_sequence(r: float, n_max: int) -> np.ndarray:
    """``theta_n = P(|Y| > n)`` for the critical process (``p = q = (1-r)/2``)."""
    _check_r(r)
    return _critical_tail(r, r * r, n_max)


def theta_at(r: float, n: int) -> float:
    """Single ``theta_n`` by one O(n) convolution."""
    _check_r(r)
    return _critical_tail_at(r, r * r, n)


def alpha_sequence(r: float, n_max: int) -> np.ndarray:
    """``alpha_n = P(T >= n)`` for the critical walk with stay."""
    _check_r(r)
    return _critical_tail(r, 2.0 * r - 1.0, n_max)


def alpha_at(r: float, n: int) -> float:
    _check_r(r)
    return _critical_tail_at(r, 2.0 * r - 1.0, n)


def tail_constant_progeny(r: float) -> float:
    """``lim sqrt(n) P(|Y| > n) = sqrt((1 + r)/(1 - r)) / sqrt(pi)``."""
    return math.sqrt((1.0 + r) / (1.0 - r)) / math.sqrt(math.pi)


def tail_constant_hitting(r: float) -> float:
    """``lim sqrt(n) P(T >= n) = sqrt(2/pi) / sqrt(1 - r)``."""
    return math.sqrt(2.0 / math.pi) / math.sqrt(1.0 - r)
