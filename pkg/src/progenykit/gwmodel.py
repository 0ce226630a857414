"""Offspring laws of L-type Galton-Watson processes and their derived quantities.

An :class:`OffspringSpec` is either a finite table of ``(children, probability)``
pairs or a member of the linear-fractional ("geometric") family

    phi(s) = p * s1**shift / (1 - sum_j q_j s_j),

which covers both two-type laws that arise from the walks in this package.
:class:`GWModel` bundles one spec per type and derives the mean matrix, its
Perron root and the extinction probability vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DomainError, SpecError

log = logging.getLogger(__name__)

NORM_TOL = 1e-12


@dataclass(frozen=True)
class OffspringSpec:
    """Offspring law of a single ancestor of one type.

    Use :meth:`table` or :meth:`geometric` rather than the raw constructor.
    """

    kind: str
    L: int
    entries: tuple = ()  # ((children tuple, prob), ...) for tables
    p: float = 0.0
    q: tuple = ()
    shift: int = 0

    @classmethod
    def table(cls, entries, L: int | None = None) -> "OffspringSpec":
        items = []
        for vec, prob in entries:
            vec = tuple(int(v) for v in vec)
            items.append((vec, float(prob)))
        if not items:
            raise SpecError("offspring table is empty")
        dims = {len(v) for v, _ in items}
        if len(dims) != 1:
            raise SpecError("offspring vectors have inconsistent lengths")
        L_found = dims.pop()
        if L is not None and L != L_found:
            raise SpecError(f"offspring vectors have length {L_found}, expected {L}")
        if any(v < 0 for vec, _ in items for v in vec):
            raise SpecError("offspring counts must be non-negative")
        probs = [w for _, w in items]
        if any(w < 0 for w in probs):
            raise SpecError("table probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > NORM_TOL:
            raise SpecError(f"table probabilities sum to {sum(probs)!r}, not 1")
        return cls(kind="table", L=L_found, entries=tuple(items))

    @classmethod
    def geometric(cls, p: float, q: Sequence[float], shift: int = 0) -> "OffspringSpec":
        q = tuple(float(x) for x in q)
        p = float(p)
        if not p > 0:
            raise SpecError("geometric family needs p > 0")
        if any(x < 0 for x in q):
            raise SpecError("geometric family needs q_j >= 0")
        if abs(p + sum(q) - 1.0) > NORM_TOL:
            raise SpecError(f"p + sum(q) = {p + sum(q)!r}, not 1")
        if shift not in (0, 1):
            raise SpecError("shift must be 0 or 1")
        if not q:
            raise SpecError("q must name at least one type")
        return cls(kind="geometric", L=len(q), p=p, q=q, shift=int(shift))

    @classmethod
    def sterile(cls, L: int) -> "OffspringSpec":
        return cls.table([((0,) * L, 1.0)])

    # -- evaluation ---------------------------------------------------------

    def __call__(self, s) -> float:
        return pgf_eval(self, s)

    def mean(self) -> np.ndarray:
        """Row of the mean matrix: expected children of each type."""
        if self.kind == "table":
            out = np.zeros(self.L)
            for vec, w in self.entries:
                out += w * np.asarray(vec, dtype=float)
            return out
        out = np.asarray(self.q) / self.p
        out[0] += self.shift
        return out

    def is_linear(self) -> bool:
        """True when every second derivative of the PGF vanishes."""
        if self.kind == "table":
            return all(sum(vec) <= 1 for vec, w in self.entries if w > 0)
        return sum(self.q) == 0.0

    def to_json(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "entries": [[list(v), w] for v, w in self.entries]}
        return {"kind": "geometric", "p": self.p, "q": list(self.q), "shift": self.shift}

    @classmethod
    def from_json(cls, obj: dict, L: int | None = None) -> "OffspringSpec":
        if not isinstance(obj, dict):
            raise SpecError("offspring spec must be a JSON object")
        kind = obj.get("kind")
        if kind == "table":
            _reject_unknown(obj, {"kind", "entries"})
            if "entries" not in obj:
                raise SpecError("table spec needs 'entries'")
            try:
                entries = [(vec, prob) for vec, prob in obj["entries"]]
            except (TypeError, ValueError) as exc:
                raise SpecError("table entries must be [[children...], probability] pairs") from exc
            return cls.table(entries, L=L)
        if kind == "geometric":
            _reject_unknown(obj, {"kind", "p", "q", "shift"})
            if "p" not in obj or "q" not in obj:
                raise SpecError("geometric spec needs 'p' and 'q'")
            spec = cls.geometric(obj["p"], obj["q"], obj.get("shift", 0))
            if L is not None and spec.L != L:
                raise SpecError(f"geometric q has length {spec.L}, expected {L}")
            return spec
        raise SpecError(f"unknown offspring kind {kind!r}")


def _reject_unknown(obj: dict, allowed: set):
    extra = set(obj) - allowed
    if extra:
        raise SpecError(f"unknown keys: {sorted(extra)}")


def pgf_eval(spec: OffspringSpec, s) -> float:
    """Value of the offspring PGF at ``s``."""
    s = np.asarray(s, dtype=float)
    if s.shape != (spec.L,):
        raise ValueError(f"expected a point of dimension {spec.L}")
    if spec.kind == "table":
        total = 0.0
        for vec, w in spec.entries:
            total += w * float(np.prod(s ** np.asarray(vec)))
        return total
    denom = 1.0 - float(np.dot(spec.q, s))
    if denom <= 0:
        raise DomainError("geometric PGF denominator is not positive at this point")
    return spec.p * (s[0] ** spec.shift) / denom


def pgf_grad(spec: OffspringSpec, s) -> np.ndarray:
    """Gradient of the offspring PGF at ``s`` (row of the Jacobian)."""
    s = np.asarray(s, dtype=float)
    if spec.kind == "table":
        g = np.zeros(spec.L)
        for vec, w in spec.entries:
            vec = np.asarray(vec)
            for j in range(spec.L):
                if vec[j]:
                    dv = vec.copy()
                    dv[j] -= 1
                    g[j] += w * vec[j] * float(np.prod(s ** dv))
        return g
    q = np.asarray(spec.q)
    denom = 1.0 - float(q @ s)
    if denom <= 0:
        raise DomainError("geometric PGF denominator is not positive at this point")
    lead = s[0] ** spec.shift
    g = spec.p * lead * q / denom**2
    if spec.shift:
        g[0] += spec.p / denom
    return g


@dataclass(frozen=True)
class Condition1Report:
    """Outcome of the primitivity / nonlinearity diagnostic."""

    holds: bool
    primitive: bool
    primitivity_exponent: int | None
    component_linear: tuple
    reason: str

    def __bool__(self):
        return self.holds


@dataclass(frozen=True)
class GWModel:
    """An L-type Galton-Watson process given by its offspring laws."""

    specs: tuple
    L: int = field(init=False)

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise SpecError("model needs at least one type")
        dims = {sp.L for sp in specs}
        if dims != {len(specs)}:
            raise SpecError(f"every offspring spec must have dimension L={len(specs)}")
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "L", len(specs))

    @classmethod
    def from_json(cls, obj: dict) -> "GWModel":
        if not isinstance(obj, dict):
            raise SpecError("model descriptor must be a JSON object")
        _reject_unknown(obj, {"L", "specs"})
        if "specs" not in obj:
            raise SpecError("model descriptor needs 'specs'")
        specs = obj["specs"]
        if not isinstance(specs, list):
            raise SpecError("'specs' must be a list")
        L = obj.get("L", len(specs))
        if not isinstance(L, int) or L != len(specs):
            raise SpecError(f"'L' = {L!r} does not match {len(specs)} specs")
        return cls(tuple(OffspringSpec.from_json(sp, L=L) for sp in specs))

    def to_json(self) -> dict:
        return {"L": self.L, "specs": [sp.to_json() for sp in self.specs]}

    def phi(self, s) -> np.ndarray:
        return np.array([pgf_eval(sp, s) for sp in self.specs])

    def jacobian(self, s) -> np.ndarray:
        return np.vstack([pgf_grad(sp, s) for sp in self.specs])

    @cached_property
    def mean_matrix(self) -> np.ndarray:
        return mean_matrix(self)

    @cached_property
    def sigma(self) -> float:
        return perron_root(self)

    @cached_property
    def pi(self) -> np.ndarray:
        return extinction_prob(self)


def mean_matrix(model: GWModel) -> np.ndarray:
    """``m[i, j]`` = expected type-j children of one type-i ancestor."""
    M = np.vstack([sp.mean() for sp in model.specs])
    M.setflags(write=False)
    return M


def _quadratic_perron(M: np.ndarray) -> float:
    tr = M[0, 0] + M[1, 1]
    disc = (M[0, 0] - M[1, 1]) ** 2 + 4.0 * M[0, 1] * M[1, 0]
    return 0.5 * (tr + np.sqrt(max(disc, 0.0)))


def perron_root(model: GWModel, max_iter: int = 500, rtol: float = 1e-12) -> float:
    """Spectral radius of the mean matrix by power iteration.

    Iterates on ``M + I`` so that periodic patterns such as ``[[0,1],[1,0]]``
    still converge (the shift keeps the Perron root strictly dominant).  For
    two types the result is cross-checked against the characteristic
    polynomial, whose root is returned.
    """
    M = np.asarray(model.mean_matrix, dtype=float)
    if not np.any(M):
        return 0.0
    return _power_iteration(M, max_iter=max_iter, rtol=rtol)


def _power_iteration(M: np.ndarray, max_iter: int = 500, rtol: float = 1e-12) -> float:
    L = M.shape[0]
    A = M + np.eye(L)
    v = np.ones(L) / L
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        lam = float(w.sum())  # v is normalised to unit 1-norm and nonnegative
        w = w / w.sum()
        moved = float(np.abs(w - v).max())
        v = w
        if moved <= rtol:
            break
    sigma = lam - 1.0
    if L == 2:
        closed = _quadratic_perron(M)
        if abs(closed - sigma) > 1e-9 * max(1.0, closed):
            log.debug("power iteration %.17g disagrees with closed form %.17g", sigma, closed)
        # exact up to rounding, so it is the better of the two
        sigma = closed
    return max(sigma, 0.0)


def extinction_prob(model: GWModel, tol: float = 1e-13, max_iter: int = 10_000, polish: bool = True) -> np.ndarray:
    """Smallest fixed point of ``u = phi(u)`` in the unit cube.

    The monotone iteration from ``u = 0`` is run first.  It converges only
    sublinearly in the critical case, so a few Newton steps are added
    afterwards; a step is accepted only while it stays inside the cube and
    below the fixed point (``phi(u) >= u``), which keeps the smallest root.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    u = np.zeros(model.L)
    for _ in range(max_iter):
        nxt = model.phi(u)
        change = float(np.max(np.abs(nxt - u)))
        u = nxt
        if change < tol:
            break
    if polish:
        u = _newton_polish(model, u)
    return np.minimum(u, 1.0)


def _newton_polish(model: GWModel, u: np.ndarray, steps: int = 60) -> np.ndarray:
    eye = np.eye(model.L)
    for _ in range(steps):
        F = model.phi(u) - u
        if float(np.max(np.abs(F))) == 0.0:
            break
        try:
            J = model.jacobian(u)
            step = np.linalg.solve(eye - J, F)
        except (np.linalg.LinAlgError, DomainError):
            break
        cand = u + step
        if not np.all(np.isfinite(cand)) or np.any(cand > 1.0 + 1e-15) or np.any(cand < u - 1e-15):
            break
        cand = np.minimum(cand, 1.0)
        try:
            Fc = model.phi(cand) - cand
        except DomainError:
            break
        if np.any(Fc < -1e-15):
            break
        if float(np.max(np.abs(cand - u))) < 1e-16:
            u = cand
            break
        u = cand
    return u


def check_condition1(model: GWModel) -> Condition1Report:
    """Primitivity of the mean matrix and nonlinearity of the offspring PGFs.

    Primitivity is decided on the zero pattern of ``M``: a primitive pattern
    has a positive power no later than the Wielandt bound ``L^2 - 2L + 2``.
    Nonlinearity is judged per component; the overall verdict needs at least
    one nonlinear component.
    """
    L = model.L
    B = (np.asarray(model.mean_matrix) > 0).astype(np.int64)
    bound = L * L - 2 * L + 2
    exponent = None
    P = B.copy()
    for k in range(1, bound + 1):
        if np.all(P > 0):
            exponent = k
            break
        P = ((P @ B) > 0).astype(np.int64)
    primitive = exponent is not None
    linear = tuple(sp.is_linear() for sp in model.specs)
    nonlinear = not all(linear)

    reasons = []
    if not primitive:
        sterile = [i + 1 for i in range(L) if not B[i].any()]
        if sterile:
            names = ", ".join(f"type {i}" for i in sterile)
            reasons.append(f"{names} sterile")
        else:
            reasons.append(f"mean matrix not primitive (no positive power up to n0={bound})")
    if not nonlinear:
        reasons.append("all offspring PGFs are linear")
    return Condition1Report(
        holds=primitive and nonlinear,
        primitive=primitive,
        primitivity_exponent=exponent,
        component_linear=linear,
        reason="; ".join(reasons) if reasons else "ok",
    )
