"""Command-line front end.

Subcommands read a JSON descriptor (``--spec``: a file path or inline JSON),
compute, and write CSV or JSON to ``--out`` or stdout.  Exit codes: 0 success,
1 verification failure, 2 usage or spec error, 3 numerical domain error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings

import numpy as np

from . import mc
from .errors import ConvergenceError, DomainError, HonestyWarning, SpecError
from .gwmodel import GWModel
from .progeny import closed_form_21, closed_form_stay, progeny_pgf_point
from .walks import (
    HittingTimeDist,
    WalkSpec,
    alpha_sequence,
    hitting_pmf,
    lemma_convolution,
    lemma_limit,
    tail_constant_hitting,
    tail_constant_progeny,
    theta_sequence,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3
DEFAULT_N_MAX = 1024
DEFAULT_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999)
ANALYTIC_CAP = 4096


class UsageError(Exception):
    pass


# -- input -------------------------------------------------------------------

def load_descriptor(text: str) -> dict:
    """Parse ``--spec``: inline JSON when it starts with ``{``, else a file path."""
    if text is None:
        raise UsageError("--spec is required")
    raw = text.strip()
    if not raw.startswith("{"):
        try:
            with open(text) as fh:
                raw = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read spec file: {exc}") from exc
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SpecError("descriptor must be a JSON object")
    return obj


def parse_model(obj: dict) -> tuple:
    """Model descriptor (has ``specs``) or walk descriptor -> (model, walk or None)."""
    if "specs" in obj:
        return GWModel.from_json(obj), None
    walk = WalkSpec.from_json(obj)
    if walk.kind == "general":
        raise SpecError("general walks have no branching model; pass a model descriptor")
    return walk.branching_model(), walk


def _positive(name: str, value):
    if value is not None and not value > 0:
        raise UsageError(f"{name} must be positive")
    return value


def _grid(text: str | None) -> list:
    if text is None:
        return list(DEFAULT_GRID)
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --grid: {exc}") from exc
    if not values:
        raise UsageError("--grid is empty")
    for v in values:
        if not 0 < v < 1:
            raise UsageError(f"grid value {v!r} outside the open interval (0, 1)")
    return values


# -- output ------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(fh, header, rows, footers=()):
    fh.write(",".join(header) + "\n")
    width = len(header)
    for row in list(rows) + list(footers):
        cells = [c if isinstance(c, str) else fmt(c) for c in row]
        cells += [""] * (width - len(cells))
        fh.write(",".join(cells) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(fh, obj):
    json.dump(_clean(obj), fh, indent=2)
    fh.write("\n")


# -- commands ----------------------------------------------------------------

def cmd_hitting(args, fh) -> int:
    walk = WalkSpec.from_json(load_descriptor(args.spec))
    n_max = args.n_max or DEFAULT_N_MAX
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HonestyWarning)
        dist = hitting_pmf(walk, n_max)
    pmf = dist.probs
    cdf = dist.cdf()
    if args.format == "json":
        write_json(fh, {
            "walk": walk.to_json(),
            "n": list(range(1, n_max + 1)),
            "pmf": pmf[1:],
            "cdf": cdf[1:],
            "defect": dist.defect,
        })
    else:
        rows = [(n, pmf[n], cdf[n]) for n in range(1, n_max + 1)]
        write_csv(fh, ["n", "pmf", "cdf"], rows, [("defect", dist.defect)])
    return EXIT_OK


def _closed_form(model: GWModel):
    """Closed-form evaluator when the model is one of the two walk-derived families."""
    if model.L != 2:
        return None
    a, b = model.specs
    if a.kind != "geometric" or a.shift != 0:
        return None
    p, (q, r) = a.p, a.q
    if b.kind == "table" and b.entries == (((0, 0), 1.0),):
        return lambda s: closed_form_stay(p, q, r, s)
    if b.kind == "geometric" and b.shift == 1 and b.p == p and b.q == a.q:
        return lambda s: closed_form_21(p, q, r, s)
    return None


def cmd_progeny(args, fh) -> int:
    model, _ = parse_model(load_descriptor(args.spec))
    grid = _grid(args.grid)
    tol = args.tol or 1e-12
    if args.max_iter < 1:
        raise UsageError("--max-iter must be positive")
    closed = _closed_form(model)
    rows = []
    max_dev = 0.0
    for g in grid:
        s = np.full(model.L, g)
        try:
            pt = progeny_pgf_point(model, s, tol=tol, max_iter=args.max_iter)
            rho, residual, iters, ok = pt.rho, pt.residual, pt.iterations, True
        except ConvergenceError as exc:
            rho = np.asarray(exc.last)
            residual = float(np.max(np.abs(rho - s * model.phi(rho))))
            iters, ok = exc.iterations, False
        dev = None
        if closed is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", HonestyWarning)
                dev = float(np.max(np.abs(rho - closed(s))))
            max_dev = max(max_dev, dev)
        rows.append((s, rho, residual, iters, ok, dev))

    sigma = model.sigma
    pi = model.pi
    L = model.L
    if args.format == "json":
        write_json(fh, {
            "model": model.to_json(),
            "sigma": sigma,
            "pi": pi,
            "closed_form": closed is not None,
            "max_closed_form_deviation": max_dev if closed is not None else None,
            "rows": [
                {"s": s, "rho": rho, "residual": res, "iterations": it, "converged": ok, "closed_form_deviation": dev}
                for s, rho, res, it, ok, dev in rows
            ],
        })
    else:
        header = [f"s{i + 1}" for i in range(L)] + [f"rho{i + 1}" for i in range(L)]
        header += ["residual", "iterations", "converged", "closed_form", "closed_form_deviation"]
        out = [
            (*s, *rho, res, it, ok, closed is not None, dev)
            for s, rho, res, it, ok, dev in rows
        ]
        footers = [
            ("max_closed_form_deviation", max_dev if closed is not None else None),
            ("sigma", sigma),
        ] + [(f"pi{i + 1}", pi[i]) for i in range(L)]
        write_csv(fh, header, out, footers)
    return EXIT_OK


def log_grid(n_max: int) -> list:
    """``0, 1, 2, 5, 10, 20, 50, ...`` up to and including ``n_max``."""
    pts = {0, n_max}
    dec = 1
    while dec <= n_max:
        for m in (1, 2, 5):
            if m * dec <= n_max:
                pts.add(m * dec)
        dec *= 10
    return sorted(pts)


def cmd_tail(args, fh) -> int:
    if args.r is None and args.sequence != "lemma":
        raise UsageError("--r is required")
    n_max = args.n_max or 10**6
    ns = log_grid(n_max)
    if args.sequence == "lemma":
        if args.x is None:
            raise UsageError("--x is required for the lemma sequence")
        if not -1 < args.x < 1:
            raise UsageError("--x must lie in (-1, 1)")
        limit = lemma_limit(args.x)
        values = [lemma_convolution(args.x, n) for n in ns]
        param = {"x": args.x}
    else:
        if not 0 < args.r < 1:
            raise UsageError("--r must lie in (0, 1)")
        if args.sequence == "theta":
            seq, limit = theta_sequence(args.r, n_max), tail_constant_progeny(args.r)
        else:
            seq, limit = alpha_sequence(args.r, n_max), tail_constant_hitting(args.r)
        values = [float(seq[n]) for n in ns]
        param = {"r": args.r}
    rows = []
    for n, v in zip(ns, values):
        scaled = math.sqrt(n) * v
        rows.append((n, v, scaled, limit, abs(scaled - limit) / limit))
    if args.format == "json":
        write_json(fh, {
            "sequence": args.sequence, **param, "limit": limit,
            "rows": [dict(zip(("n", "value", "scaled", "limit", "rel_gap"), r)) for r in rows],
        })
    else:
        write_csv(fh, ["n", "value", "scaled", "limit", "rel_gap"], rows)
    return EXIT_OK


def coarsen(dist: HittingTimeDist, n_max: int) -> HittingTimeDist:
    """Keep ``P(T = n)`` for ``n <= n_max`` and lump the rest into the defect."""
    return HittingTimeDist.from_probs(dist.probs[: n_max + 1])


CSV_STAT = {
    "branching_identity": "failures",
    "offspring_law": "min_p_value",
    "total_variation": "tv",
    "honesty": "analytic_defect",
}


def cmd_verify(args, fh) -> int:
    walk = WalkSpec.from_json(load_descriptor(args.spec))
    if walk.kind == "general":
        raise SpecError("verify needs a simple, stay or two_one walk")
    n = args.samples if args.samples is not None else 10**5
    if n < 1:
        raise UsageError("--samples must be positive")
    horizon = args.horizon or 10**5
    seed = args.seed or 0
    report = {"walk": walk.to_json(), "samples": n, "horizon": horizon, "seed": seed}
    checks = {}

    checked = failures = overflow = 0
    for path in mc.simulate_walks(walk, n, horizon=horizon, seed=seed):
        if path.T is None:
            overflow += 1
            continue
        checked += 1
        if not mc.verify_branching_identity(path):
            failures += 1
    checks["branching_identity"] = {"pass": failures == 0, "checked": checked, "failures": failures, "overflow": overflow}

    if walk.kind in ("stay", "two_one"):
        law = mc.verify_offspring_law(walk, n, seed=seed, horizon=horizon)
        pvals = [f.p_value for f in law.fits if f.dof > 0]
        checks["offspring_law"] = {"pass": law.passed(), "min_p_value": min(pvals) if pvals else None, **law.to_json()}

    n_an = min(horizon, ANALYTIC_CAP)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HonestyWarning)
        analytic = hitting_pmf(walk, n_an)
    empirical = coarsen(mc.empirical_hitting(walk, n, horizon=horizon, seed=seed, workers=mc.default_workers()), n_an)
    tv = analytic.tv_distance(empirical)
    bound = mc.tv_bound(analytic, n)
    checks["total_variation"] = {"pass": tv < bound, "tv": tv, "bound": bound, "n_max": n_an}

    if args.assert_honest:
        honest = walk.reaches_one_surely()
        checks["honesty"] = {
            "pass": honest,
            "drift": walk.drift,
            "analytic_mass": analytic.total_mass,
            "analytic_defect": analytic.defect,
            "empirical_defect": empirical.defect,
            "n_max": n_an,
        }

    report["checks"] = checks
    report["pass"] = all(c["pass"] for c in checks.values())
    if args.format == "csv":
        rows = []
        for name, c in checks.items():
            rows.append((name, c["pass"], c[CSV_STAT[name]]))
        write_csv(fh, ["check", "pass", "statistic"], rows, [("all", report["pass"])])
    else:
        write_json(fh, report)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_simulate(args, fh) -> int:
    obj = load_descriptor(args.spec)
    n = args.samples if args.samples is not None else 10**4
    if n < 1:
        raise UsageError("--samples must be positive")
    seed = args.seed or 0
    if "specs" in obj:
        model = GWModel.from_json(obj)
        cap = args.horizon or 10**6
        sizes = mc.gw_total_sizes(model, n, max_individuals=cap, seed=seed)
        over = int(np.sum(sizes < 0))
        counts = np.bincount(sizes[sizes >= 0], minlength=1)
        counts = np.append(counts, over)
        label = "size"
    else:
        walk = WalkSpec.from_json(obj)
        horizon = args.horizon or 10**5
        counts = mc.hitting_counts(walk, n, horizon=horizon, seed=seed, workers=mc.default_workers())
        label = "n"
    if args.dump:
        mc.write_histogram(args.dump, counts)
    body, over = counts[:-1], int(counts[-1])
    nz = np.flatnonzero(body)
    if args.format == "json":
        write_json(fh, {
            "samples": n, "seed": seed,
            label: nz, "count": body[nz], "frequency": body[nz] / n,
            "overflow": over,
        })
    else:
        rows = [(int(k), int(body[k]), body[k] / n) for k in nz]
        write_csv(fh, [label, "count", "frequency"], rows, [("overflow", over, over / n)])
    return EXIT_OK


COMMANDS = {
    "hitting": cmd_hitting,
    "progeny": cmd_progeny,
    "tail": cmd_tail,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--spec", help="walk or model descriptor: JSON file path or inline JSON")
    common.add_argument("--n-max", type=int, help="truncation order / largest n")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--horizon", type=int, help="walk step horizon, or individual cap for branching runs")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output file (default stdout)")

    parser = _Parser(prog="progenykit", description="Total progeny and first-passage computations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("hitting", parents=[common], help="exact hitting-time pmf of a walk")
    p = sub.add_parser("progeny", parents=[common], help="total progeny PGF on a diagonal grid")
    p.add_argument("--grid", help="comma-separated s values in (0, 1)")
    p.add_argument("--max-iter", type=int, default=1_000_000, help="iteration cap per grid point")
    p = sub.add_parser("tail", parents=[common], help="tail sequences and their sqrt(n) limits")
    p.add_argument("--sequence", choices=("theta", "alpha", "lemma"), default="theta")
    p.add_argument("--r", type=float, help="stay probability r of the critical walk")
    p.add_argument("--x", type=float, help="parameter x of the convolution limit")
    p = sub.add_parser("verify", parents=[common], help="Monte Carlo checks against the analytic results")
    p.add_argument("--assert-honest", action="store_true", help="fail unless the hitting law is honest")
    p = sub.add_parser("simulate", parents=[common], help="empirical hitting-time or total-size histogram")
    p.add_argument("--dump", help="also write the raw histogram as little-endian uint64")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.spec is None and args.command != "tail":
            raise UsageError("--spec is required")
        _positive("--n-max", args.n_max)
        _positive("--tol", args.tol)
        _positive("--horizon", args.horizon)
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be non-negative")
        buf = io.StringIO()
        code = COMMANDS[args.command](args, buf)
    except (UsageError, SpecError) as exc:
        print(f"progenykit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ConvergenceError) as exc:
        print(f"progenykit: numerical error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"progenykit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
