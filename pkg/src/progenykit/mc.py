"""Monte Carlo simulation of walks and branching processes.

Walks are simulated in vectorised batches with :class:`~progenykit.rng.CounterRNG`,
keyed by sample index, so a run with a given seed is reproducible bit for bit
regardless of chunking or the number of worker threads.  Branching processes
are simulated one trajectory at a time with a Philox stream per index.

Branching counts along a walk path, indexed by level ``i <= 0``:

* walk with stay (and simple walk): ``U_i^(1)`` counts steps ``i -> i-1`` and
  ``U_i^(2)`` counts steps ``i -> i``;
* (2-1) walk: ``U_i^(1)`` counts jumps from ``>= i`` landing on ``i-1`` and
  ``U_i^(2)`` counts jumps from ``>= i`` landing on ``i-2``.  A ``-2`` jump from
  ``j`` therefore adds to ``U_j^(2)`` and to ``U_{j-1}^(1)``.

Level 1 carries the fixed ancestor ``(1, 0)``.  On every path with finite
``T`` the counts satisfy ``T = 1 + sum_i (2 U_i^(1) + U_i^(2))``.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.stats import chi2

from .gwmodel import GWModel, OffspringSpec
from .rng import CounterRNG, stream
from .walks import HittingTimeDist, WalkSpec

DEFAULT_WALK_HORIZON = 10**6
DEFAULT_GW_CAP = 10**8
CHUNK = 1 << 16


def default_workers() -> int:
    env = os.environ.get("PROGENYKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


# -- walk paths --------------------------------------------------------------

@dataclass(frozen=True)
class PathSample:
    """One simulated path.

    ``T`` is ``None`` when the horizon was reached first.  ``U_counts[k]`` holds
    ``(U^(1), U^(2))`` at level ``-k`` (so row 0 is level 0); the table runs one
    level past the lowest visited one, where it is zero.  It is ``None`` for
    general walks, which have no extracted branching structure.
    """

    steps: np.ndarray
    T: int | None
    U_counts: np.ndarray | None
    kind: str = "stay"

    @property
    def overflow(self) -> bool:
        return self.T is None

    def level(self, i: int) -> tuple:
        if i == 1:
            return (1, 0)
        k = -i
        if self.U_counts is None or k < 0:
            raise IndexError("level out of range")
        if k >= len(self.U_counts):
            return (0, 0)
        a, b = self.U_counts[k]
        return (int(a), int(b))

    def levels_from_top(self) -> np.ndarray:
        """Rows for levels ``1, 0, -1, ...`` including the ancestor row."""
        return np.vstack([[1, 0], self.U_counts])


def extract_branching_counts(kind: str, steps) -> np.ndarray:
    """Branching counts of a path that stays at or below 0 before its last step."""
    steps = np.asarray(steps, dtype=np.int64)
    if steps.size == 0:
        return np.zeros((1, 2), dtype=np.int64)
    before = np.concatenate(([0], np.cumsum(steps)[:-1]))  # position before each step
    if np.any(before > 0):
        raise ValueError("path rises above 0 before its final step")
    depth = int(-before.min()) + 3
    down = np.zeros(depth, dtype=np.int64)
    other = np.zeros(depth, dtype=np.int64)
    lvl = -before  # level index k = -position
    if kind in ("stay", "simple"):
        down += np.bincount(lvl[steps == -1], minlength=depth)[:depth]
        other += np.bincount(lvl[steps == 0], minlength=depth)[:depth]
    elif kind == "two_one":
        down += np.bincount(lvl[steps == -1], minlength=depth)[:depth]
        jump2 = lvl[steps == -2]
        other += np.bincount(jump2, minlength=depth)[:depth]
        down += np.bincount(jump2 + 1, minlength=depth)[:depth]
    else:
        raise ValueError(f"no branching structure for walk kind {kind!r}")
    table = np.stack([down, other], axis=1)
    last = np.flatnonzero(table.any(axis=1))
    keep = (int(last[-1]) + 2) if last.size else 1
    return table[:keep]


def path_from_steps(spec: WalkSpec, steps) -> PathSample:
    """Wrap an explicit increment list as a :class:`PathSample`."""
    steps = np.asarray(steps, dtype=np.int64)
    pos = np.cumsum(steps)
    hit = np.flatnonzero(pos >= 1)
    T = int(hit[0]) + 1 if hit.size else None
    if T is not None:
        steps = steps[:T]
    U = None
    if spec.kind != "general":
        U = extract_branching_counts(spec.kind, steps if T is not None else steps)
    return PathSample(steps=steps, T=T, U_counts=U, kind=spec.kind)


class _WalkEngine:
    def __init__(self, spec: WalkSpec, seed: int):
        self.spec = spec
        self.rng = CounterRNG(seed)
        self.values = np.array([l for l, _ in spec.jumps], dtype=np.int64)
        cum = np.cumsum([w for _, w in spec.jumps])
        cum[-1] = 1.0
        self.cum = cum

    def run(self, indices: np.ndarray, horizon: int, record: bool = False):
        """Simulate paths for the given indices; returns ``T`` (-1 on overflow)."""
        keys = self.rng.keys(indices)
        n = keys.size
        pos = np.zeros(n, dtype=np.int64)
        T = np.full(n, -1, dtype=np.int64)
        active = np.arange(n)
        rec_idx, rec_inc = [], []
        for t in range(horizon):
            if active.size == 0:
                break
            u = self.rng.uniform(keys[active], t)
            inc = self.values[np.searchsorted(self.cum, u, side="right")]
            newpos = pos[active] + inc
            pos[active] = newpos
            if record:
                rec_idx.append(active)
                rec_inc.append(inc)
            hit = newpos >= 1
            if hit.any():
                T[active[hit]] = t + 1
                active = active[~hit]
        if not record:
            return T, None
        if rec_idx:
            idx = np.concatenate(rec_idx)
            inc = np.concatenate(rec_inc)
            order = np.argsort(idx, kind="stable")
            idx, inc = idx[order], inc[order]
            bounds = np.searchsorted(idx, np.arange(n + 1))
            paths = [inc[bounds[i] : bounds[i + 1]] for i in range(n)]
        else:
            paths = [np.zeros(0, dtype=np.int64) for _ in range(n)]
        return T, paths


def _chunks(n: int, size: int = CHUNK):
    return [np.arange(lo, min(lo + size, n), dtype=np.int64) for lo in range(0, n, size)]


def simulate_walk(spec: WalkSpec, horizon: int = DEFAULT_WALK_HORIZON, seed: int = 0, index: int = 0) -> PathSample:
    """One path, drawn from stream ``index`` of ``seed``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    engine = _WalkEngine(spec, seed)
    T, paths = engine.run(np.array([index], dtype=np.int64), horizon, record=True)
    return _make_sample(spec, int(T[0]), paths[0])


def _make_sample(spec: WalkSpec, T: int, steps: np.ndarray) -> PathSample:
    steps = steps.astype(np.int8)
    U = None
    if spec.kind != "general" and T > 0:
        U = extract_branching_counts(spec.kind, steps)
    return PathSample(steps=steps, T=T if T > 0 else None, U_counts=U, kind=spec.kind)


def simulate_walks(spec: WalkSpec, n_samples: int, horizon: int = DEFAULT_WALK_HORIZON, seed: int = 0):
    """Yield ``n_samples`` paths with branching counts, in index order."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    engine = _WalkEngine(spec, seed)
    for idx in _chunks(n_samples, 1 << 14):
        T, paths = engine.run(idx, horizon, record=True)
        for t, steps in zip(T, paths):
            yield _make_sample(spec, int(t), steps)


def hitting_counts(spec: WalkSpec, n_samples: int, horizon: int = DEFAULT_WALK_HORIZON, seed: int = 0, workers: int | None = None) -> np.ndarray:
    """Histogram of ``T``: ``counts[n]`` for ``n <= horizon``, overflow last."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    engine = _WalkEngine(spec, seed)
    workers = default_workers() if workers is None else max(1, int(workers))

    def one(idx):
        T, _ = engine.run(idx, horizon)
        counts = np.bincount(T[T > 0], minlength=horizon + 1)[: horizon + 1]
        return counts, int(np.count_nonzero(T < 0))

    chunks = _chunks(n_samples)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, chunks))
    else:
        parts = [one(c) for c in chunks]
    out = np.zeros(horizon + 2, dtype=np.int64)
    for counts, over in parts:  # fixed reduction order
        out[: horizon + 1] += counts
        out[-1] += over
    return out


def empirical_hitting(spec: WalkSpec, n_samples: int, horizon: int = DEFAULT_WALK_HORIZON, seed: int = 0, workers: int | None = None) -> HittingTimeDist:
    """Empirical law of ``T``; horizon overflow goes into the defect."""
    counts = hitting_counts(spec, n_samples, horizon, seed, workers)
    probs = counts[:-1] / n_samples
    probs.setflags(write=False)
    return HittingTimeDist(probs=probs, defect=float(counts[-1] / n_samples))


def verify_branching_identity(sample: PathSample) -> bool:
    """Exact integer check of ``T = 1 + sum_i (2 U_i^(1) + U_i^(2))``."""
    if sample.T is None:
        raise ValueError("identity is only defined for paths with finite T")
    if sample.U_counts is None:
        raise ValueError("path carries no branching counts")
    U = np.asarray(sample.U_counts, dtype=np.int64)
    return int(sample.T) == 1 + int(2 * U[:, 0].sum() + U[:, 1].sum())


# -- offspring-law goodness of fit --------------------------------------------

@dataclass
class LawFit:
    """Chi-square fit of children counts for one parent type."""

    parent: tuple
    n_obs: int
    statistic: float
    dof: int
    p_value: float
    merged_cells: int
    violations: int
    observed: dict = field(default_factory=dict)
    expected_prob: dict = field(default_factory=dict)

    def frequency(self, child) -> float:
        return self.observed.get(tuple(child), 0) / self.n_obs if self.n_obs else float("nan")

    def passes(self, alpha: float = 1e-3) -> bool:
        if self.violations:
            return False
        if self.n_obs == 0:
            return True
        return self.dof == 0 or self.p_value >= alpha

    def to_json(self) -> dict:
        return {
            "parent": list(self.parent),
            "n_obs": self.n_obs,
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "merged_cells": self.merged_cells,
            "violations": self.violations,
        }


@dataclass
class OffspringLawReport:
    kind: str
    fits: list
    n_paths: int
    skipped_overflow: int

    def fit(self, parent) -> LawFit:
        for f in self.fits:
            if f.parent == tuple(parent):
                return f
        raise KeyError(parent)

    def passed(self, alpha: float = 1e-3) -> bool:
        return all(f.passes(alpha) for f in self.fits)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n_paths": self.n_paths,
            "skipped_overflow": self.skipped_overflow,
            "fits": [f.to_json() for f in self.fits],
        }


def negative_multinomial_pmf(a: int, b: int, qa: float, qb: float, p: float) -> float:
    """``(a+b)!/(a! b!) qa^a qb^b p``."""
    return comb(a + b, a) * qa**a * qb**b * p


def _chi_square(observed: dict, probs: dict, tail_prob: float, n: int, tail_obs: int):
    cells = [(n * probs[c], observed.get(c, 0)) for c in sorted(probs)]
    pooled_e, pooled_o, merged = n * tail_prob, tail_obs, 0
    kept = []
    for e, o in cells:
        if e < 5.0:
            pooled_e += e
            pooled_o += o
            merged += 1
        else:
            kept.append([e, o])
    if pooled_e > 0:
        if pooled_e < 5.0 and kept:
            j = min(range(len(kept)), key=lambda k: kept[k][0])
            kept[j][0] += pooled_e
            kept[j][1] += pooled_o
            merged += 1
        else:
            kept.append([pooled_e, pooled_o])
    if len(kept) < 2:
        return 0.0, 0, 1.0, merged
    stat = float(sum((o - e) ** 2 / e for e, o in kept))
    dof = len(kept) - 1
    return stat, dof, float(chi2.sf(stat, dof)), merged


def verify_offspring_law(spec: WalkSpec, n_samples: int, seed: int = 0, horizon: int = 100_000, max_total: int = 8) -> OffspringLawReport:
    """Compare children counts of single-individual parents with the stated laws.

    For every finite path, each level whose counts are exactly ``(1, 0)`` or
    ``(0, 1)`` contributes its lower neighbour's counts as one child
    observation.  Children with ``a + b <= max_total`` get their own cell.
    """
    if spec.kind not in ("stay", "two_one", "simple"):
        raise ValueError("offspring laws are only known for stay, simple and (2-1) walks")
    if spec.kind == "simple":
        p, q, r = spec.prob(1), spec.prob(-1), 0.0
    else:
        p, q, r = spec.params

    obs = {(1, 0): {}, (0, 1): {}}
    n_paths = skipped = 0
    for sample in simulate_walks(spec, n_samples, horizon, seed):
        n_paths += 1
        if sample.T is None:
            skipped += 1
            continue
        rows = sample.levels_from_top()
        parents = rows[:-1]
        children = rows[1:]
        for par, ch in zip(parents, children):
            key = (int(par[0]), int(par[1]))
            if key in obs:
                c = (int(ch[0]), int(ch[1]))
                obs[key][c] = obs[key].get(c, 0) + 1

    fits = []
    probs = {(a, b): negative_multinomial_pmf(a, b, q, r, p) for a in range(max_total + 1) for b in range(max_total + 1 - a)}
    tail = max(0.0, 1.0 - sum(probs.values()))
    for parent in ((1, 0), (0, 1)):
        counts = obs[parent]
        n = sum(counts.values())
        if parent == (0, 1) and spec.kind in ("stay", "simple"):
            violations = n - counts.get((0, 0), 0)
            fits.append(LawFit(parent, n, 0.0, 0, 1.0, 0, violations, counts, {(0, 0): 1.0}))
            continue
        if parent == (0, 1):
            # (2-1): one guaranteed type-1 child on top of the type-1 law
            violations = sum(v for (a, _), v in counts.items() if a < 1)
            shifted = {(a - 1, b): v for (a, b), v in counts.items() if a >= 1}
            expected = {(a + 1, b): w for (a, b), w in probs.items()}
        else:
            violations = 0
            shifted = counts
            expected = probs
        in_cells = {c: v for c, v in shifted.items() if c in probs}
        tail_obs = sum(v for c, v in shifted.items() if c not in probs)
        stat, dof, pval, merged = _chi_square(in_cells, probs, tail, n, tail_obs) if n else (0.0, 0, 1.0, 0)
        fits.append(LawFit(parent, n, stat, dof, pval, merged, violations, counts, expected))
    return OffspringLawReport(kind=spec.kind, fits=fits, n_paths=n_paths, skipped_overflow=skipped)


# -- branching processes ------------------------------------------------------

@dataclass(frozen=True)
class GWTrajectory:
    generations: list
    Y: np.ndarray
    overflow: bool

    @property
    def extinct(self) -> bool:
        return not self.overflow

    @property
    def size(self) -> int:
        return int(self.Y.sum())


class _ChildSampler:
    """Total children of ``count`` parents sharing one offspring law.

    Works on plain ints: the per-generation numpy overhead otherwise dominates
    small trajectories.
    """

    def __init__(self, spec: OffspringSpec):
        self.L = spec.L
        self.kind = spec.kind
        if spec.kind == "table":
            probs = np.array([w for _, w in spec.entries])
            self.probs = probs / probs.sum()
            self.vecs = [list(v) for v, _ in spec.entries]
            return
        self.p = spec.p
        self.shift = spec.shift
        qsum = sum(spec.q)
        self.has_children = qsum > 0
        # sequential binomial splitting of k children over the types
        self.cond = []
        rest = qsum
        for qj in spec.q:
            self.cond.append(min(1.0, qj / rest) if rest > 0 else 0.0)
            rest -= qj

    def __call__(self, count: int, rng: np.random.Generator) -> list:
        out = [0] * self.L
        if self.kind == "table":
            picks = rng.multinomial(count, self.probs)
            for n_e, vec in zip(picks, self.vecs):
                if n_e:
                    for j, v in enumerate(vec):
                        out[j] += int(n_e) * v
            return out
        if self.has_children:
            # each parent: children until the first "stop" (prob p), typed by q_j / (1 - p)
            k = int(rng.negative_binomial(count, self.p))
            for j, c in enumerate(self.cond):
                if k <= 0:
                    break
                if c >= 1.0:
                    out[j] += k
                    k = 0
                    break
                x = int(rng.binomial(k, c)) if c > 0 else 0
                out[j] += x
                k -= x
        out[0] += self.shift * count
        return out


def sample_offspring(spec: OffspringSpec, n: int, seed: int = 0) -> np.ndarray:
    """``n`` independent offspring vectors, shape ``(n, L)``."""
    rng = stream(seed, 0)
    if spec.kind == "table":
        probs = np.array([w for _, w in spec.entries])
        vecs = np.array([v for v, _ in spec.entries], dtype=np.int64)
        return vecs[rng.choice(len(vecs), size=n, p=probs / probs.sum())]
    qsum = sum(spec.q)
    out = np.zeros((n, spec.L), dtype=np.int64)
    if qsum > 0:
        k = rng.negative_binomial(1, spec.p, size=n)
        out += rng.multinomial(k, np.asarray(spec.q) / qsum)
    out[:, 0] += spec.shift
    return out


def simulate_gw(model: GWModel, max_individuals: int = DEFAULT_GW_CAP, seed: int = 0, index: int = 0, start_type: int = 0, _samplers=None) -> GWTrajectory:
    """Run generations until extinction or until the running total exceeds the cap."""
    rng = stream(seed, index)
    samplers = _samplers or [_ChildSampler(sp) for sp in model.specs]
    L = model.L
    z = [0] * L
    z[start_type] = 1
    gens = [z]
    total = list(z)
    size = 1
    overflow = False
    while any(z):
        nxt = [0] * L
        for i, count in enumerate(z):
            if count:
                kids = samplers[i](count, rng)
                for j in range(L):
                    nxt[j] += kids[j]
        gens.append(nxt)
        for j in range(L):
            total[j] += nxt[j]
        size += sum(nxt)
        z = nxt
        if size > max_individuals:
            overflow = True
            break
    return GWTrajectory(generations=[np.array(g, dtype=np.int64) for g in gens], Y=np.array(total, dtype=np.int64), overflow=overflow)


def gw_total_sizes(model: GWModel, n_runs: int, max_individuals: int = DEFAULT_GW_CAP, seed: int = 0, start_type: int = 0) -> np.ndarray:
    """``|Y|`` per run, ``-1`` where the cap was exceeded."""
    out = np.empty(n_runs, dtype=np.int64)
    samplers = [_ChildSampler(sp) for sp in model.specs]
    for i in range(n_runs):
        tr = simulate_gw(model, max_individuals, seed, i, start_type, _samplers=samplers)
        out[i] = -1 if tr.overflow else tr.size
    return out


def extinction_frequency(model: GWModel, n_runs: int, max_individuals: int = 10_000, seed: int = 0, start_type: int = 0) -> float:
    sizes = gw_total_sizes(model, n_runs, max_individuals, seed, start_type)
    return float(np.count_nonzero(sizes >= 0) / n_runs)


# -- histogram dump -------------------------------------------------------------

def write_histogram(path, counts) -> None:
    """Little-endian ``uint64`` length followed by that many ``uint64`` counts."""
    counts = np.asarray(counts, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", counts.size))
        fh.write(counts.tobytes())


def read_histogram(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        data = fh.read(8 * n)
    if len(data) != 8 * n:
        raise ValueError("truncated histogram file")
    return np.frombuffer(data, dtype="<u8").astype(np.int64)


def binomial_halfwidth(p: float, n: int, z: float = 3.0) -> float:
    return z * math.sqrt(p * (1.0 - p) / n)


def tv_bound(reference: HittingTimeDist, n: int, z: float = 3.0) -> float:
    """Conservative total-variation threshold for ``n`` samples from ``reference``.

    Sums ``z`` binomial standard deviations over every atom (the defect is
    one more atom), then halves.  Cells whose mass is negligible add nothing,
    so unlike ``z * sqrt(horizon / n)`` the bound does not grow with the horizon.
    """
    probs = np.append(reference.probs, max(reference.defect, 0.0))
    return 0.5 * z * float(np.sum(np.sqrt(probs * (1.0 - probs) / n)))
