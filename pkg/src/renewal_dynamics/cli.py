"""Command-line front end.

Subcommands: ``marks``, ``pop``, ``tree``, ``analytic``, ``markov`` and
``verify``.  Distributions are given as ``kind:params``::

    constant:c            twopoint:p1,v          geometric:s
    zeta:alpha[,cap]      empirical:k=p,k=p,...

or, in a ``--config`` JSON file, as ``{"kind": ..., params...}`` with the
fields ``c``, ``p1``/``v``, ``s``, ``alpha``/``cap`` or ``pmf``.  Flags
override the config file.  Exit codes: 0 success, 1 failed verification,
2 invalid configuration, 3 window shorter than ten burn-in lengths.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import math
import os
import sys

import numpy as np

from . import analytic
from .marks import DistributionError, SeedSpec, make_distribution
from .population import (
    InsufficientRegenerations,
    WindowTooLarge,
    burn_in,
    original_ancestors,
    population_process,
    regeneration_cycles,
    simulate_marks,
)
from .stats import estimate_mean
from .tree import build_forest
from .verification import SuiteConfig, run_suite

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_WINDOW = 0, 1, 2, 3
DIGITS = 12

DEFAULTS = {
    "dist": "geometric:0.5",
    "window": 1_000_000,
    "eps": 1e-9,
    "seed": None,
    "reps": 1,
    "workers": None,
    "out": None,
    "format": None,
}
NEEDS_SEED = ("marks", "pop", "tree", "verify")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def clean(obj):
    """Round floats to 12 significant digits and print integral ones as ints."""
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        x = float(f"{x:.{DIGITS}g}")
        return int(x) if x.is_integer() else x
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=False) + "\n"


def fmt(x) -> str:
    return str(clean(x))


# -- configuration ---------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist", help="mark distribution, kind:params")
    p.add_argument("--window", type=int, help="number of simulated indices")
    p.add_argument("--eps", type=float, help="burn-in tolerance")
    p.add_argument("--seed", type=int, help="master seed (required for simulations)")
    p.add_argument("--reps", type=int, help="independent replications")
    p.add_argument("--workers", type=int, help="worker processes for replications")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "dot"))
    p.add_argument("--config", help="JSON file mirroring the flags")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="renewal-dynamics",
                                     description="Renewal population dynamics and its eternal family tree.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("marks", help="dump a simulated mark window")
    _common(p)
    p = sub.add_parser("pop", help="population trace and regeneration statistics")
    _common(p)
    p.add_argument("--cycles", action="store_true", help="emit cycle starts/lengths as CSV")
    p = sub.add_parser("tree", help="family forest with node labels")
    _common(p)
    p = sub.add_parser("analytic", help="closed-form quantities")
    _common(p)
    p.add_argument("quantity", choices=("intensities", "mgf", "pgf"))
    p.add_argument("--t", type=float, default=0.5, help="MGF argument")
    p.add_argument("--z", type=float, default=0.5, help="PGF argument")
    p.add_argument("--s", type=float, help="geometric parameter for pgf")
    p.add_argument("--tol", type=float, default=1e-12)
    p = sub.add_parser("markov", help="transition row of the geometric population chain")
    _common(p)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p = sub.add_parser("verify", help="run the acceptance suite")
    _common(p)
    p.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,5")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, then validate."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val

    try:
        cfg["dist"] = make_distribution(cfg["dist"])
    except (DistributionError, ValueError, TypeError) as exc:
        raise ConfigError(f"dist: {exc}") from exc
    for key, lo in (("window", 1), ("reps", 1)):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool) or cfg[key] < lo:
            raise ConfigError(f"{key}: must be an integer >= {lo}, got {cfg[key]!r}")
    if cfg["workers"] is not None and (not isinstance(cfg["workers"], int) or cfg["workers"] < 1):
        raise ConfigError(f"workers: must be an integer >= 1, got {cfg['workers']!r}")
    try:
        eps = float(cfg["eps"])
    except (TypeError, ValueError):
        raise ConfigError(f"eps: not a number: {cfg['eps']!r}") from None
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"eps: must lie in (0, 1), got {eps}")
    cfg["eps"] = eps
    if cfg["format"] not in (None, "json", "csv", "dot"):
        raise ConfigError(f"format: must be json, csv or dot, got {cfg['format']!r}")
    if args.command in NEEDS_SEED:
        if cfg["seed"] is None:
            raise ConfigError("seed: required (no clock-based default)")
        if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
            raise ConfigError(f"seed: must be an integer, got {cfg['seed']!r}")
    return cfg


class WindowError(ValueError):
    pass


def _check_window(cfg) -> int:
    B = burn_in(cfg["dist"], cfg["eps"])
    if cfg["window"] < 10 * B:
        raise WindowError(f"window {cfg['window']} < 10 * burn-in {B}; increase --window or --eps")
    return B


def _seed(cfg, rep: int) -> SeedSpec:
    return SeedSpec(cfg["seed"], "marks" if rep == 0 else f"marks/rep{rep}")


# -- subcommands -----------------------------------------------------------

def cmd_marks(cfg, args) -> tuple[int, str]:
    _check_window(cfg)
    w = simulate_marks(cfg["dist"], _seed(cfg, 0), 0, cfg["window"] - 1)
    if (cfg["format"] or "csv") == "json":
        return EXIT_OK, dumps({"dist": cfg["dist"].to_json(), "seed": cfg["seed"],
                               "L": w.L, "R": w.R, "marks": w.marks})
    lines = ["n,a_n"] + [f"{n},{a}" for n, a in zip(w.indices, w.marks)]
    return EXIT_OK, "\n".join(lines) + "\n"


def _pop_summary(cfg: dict, rep: int) -> dict:
    w = simulate_marks(cfg["dist"], _seed(cfg, rep), 0, cfg["window"] - 1)
    trace = population_process(w, cfg["eps"])
    anc = original_ancestors(trace)
    try:
        cycles = regeneration_cycles(trace, anc)
    except InsufficientRegenerations:
        cycles = None
    est = estimate_mean(trace.nhat, cycles, trace.epsilon)
    out = {
        "rep": rep,
        "burn_in": trace.B,
        "epsilon": trace.epsilon,
        "core": [trace.core_lo, w.R],
        "ancestors": len(anc),
        "cycles": len(cycles) if cycles is not None else 0,
        "mean_population": est.to_json(),
        "max_population": int(trace.core.max()),
    }
    if cycles is not None:
        out["mean_cycle_length"] = float(cycles.lengths.mean())
    return out


def cmd_pop(cfg, args) -> tuple[int, str]:
    _check_window(cfg)
    fmt_ = cfg["format"] or "json"
    if fmt_ == "csv":
        w = simulate_marks(cfg["dist"], _seed(cfg, 0), 0, cfg["window"] - 1)
        trace = population_process(w, cfg["eps"])
        if args.cycles:
            return EXIT_OK, regeneration_cycles(trace, original_ancestors(trace)).to_csv()
        return EXIT_OK, trace.to_csv()
    if fmt_ != "json":
        raise ConfigError(f"format: pop supports json or csv, got {fmt_}")
    reps = cfg["reps"]
    workers = cfg["workers"] or os.cpu_count() or 1
    if reps == 1 or workers == 1:
        rows = [_pop_summary(cfg, r) for r in range(reps)]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, reps)) as pool:
            rows = list(pool.map(_pop_summary, [cfg] * reps, range(reps)))
    report = {"dist": cfg["dist"].to_json(), "window": cfg["window"], "seed": cfg["seed"],
              "replications": rows}
    if reps > 1:
        means = np.array([r["mean_population"]["value"] for r in rows])
        report["across_replications"] = {"mean": float(means.mean()),
                                         "se": float(means.std(ddof=1) / math.sqrt(reps))}
    return EXIT_OK, dumps(report)


def cmd_tree(cfg, args) -> tuple[int, str]:
    _check_window(cfg)
    w = simulate_marks(cfg["dist"], _seed(cfg, 0), 0, cfg["window"] - 1)
    trace = population_process(w, cfg["eps"])
    forest = build_forest(w, original_ancestors(trace), B=trace.B, epsilon=trace.epsilon)
    if (cfg["format"] or "json") == "dot":
        try:
            return EXIT_OK, forest.to_dot()
        except ValueError as exc:
            raise ConfigError(f"format: {exc}") from exc
    return EXIT_OK, forest.to_json() + "\n"


def cmd_analytic(cfg, args) -> tuple[int, str]:
    dist = cfg["dist"]
    try:
        if args.quantity == "intensities":
            return EXIT_OK, dumps(analytic.intensities(dist, args.tol).to_json())
        if args.quantity == "mgf":
            return EXIT_OK, dumps({"t": args.t, **analytic.population_mgf(dist, args.t, args.tol).to_json()})
        s = args.s
        if s is None:
            if dist.kind != "geometric":
                raise ConfigError("s: pgf needs --s or a geometric --dist")
            s = float(dist.params[0])
        mean, fact2 = analytic.geometric_moments(s)
        return EXIT_OK, dumps({"s": s, "z": args.z, "value": analytic.geometric_pgf(s, args.z),
                               "mean": mean, "factorial_moment_2": fact2})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{args.quantity}: {exc}") from exc


def cmd_markov(cfg, args) -> tuple[int, str]:
    try:
        row = analytic.markov_row(args.s, args.k)
    except ValueError as exc:
        raise ConfigError(f"markov: {exc}") from exc
    if (cfg["format"] or "json") == "csv":
        lines = ["to,probability"] + [f"{j + 1},{fmt(p)}" for j, p in enumerate(row)]
        return EXIT_OK, "\n".join(lines) + "\n"
    return EXIT_OK, dumps({"s": args.s, "k": args.k, "states": list(range(1, args.k + 2)), "row": row})


def cmd_verify(cfg, args) -> tuple[int, str]:
    suite = SuiteConfig(dist=cfg["dist"], window=cfg["window"], eps=cfg["eps"], seed=cfg["seed"])
    criteria = None
    if args.criteria:
        try:
            criteria = [int(c) for c in args.criteria.split(",")]
        except ValueError:
            raise ConfigError(f"criteria: expected comma-separated integers, got {args.criteria!r}") from None
    _check_window(cfg)
    checks = run_suite(suite, criteria)
    failed = [c for c in checks if c.passed is False]
    for c in failed:
        print(c.line(), file=sys.stderr)
    report = {"dist": cfg["dist"].to_json(), "window": cfg["window"], "eps": cfg["eps"],
              "seed": cfg["seed"], "all_pass": not failed, "checks": [c.to_json() for c in checks]}
    return (EXIT_VERIFY if failed else EXIT_OK), dumps(report)


COMMANDS = {
    "marks": cmd_marks,
    "pop": cmd_pop,
    "tree": cmd_tree,
    "analytic": cmd_analytic,
    "markov": cmd_markov,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        code, text = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WindowError, WindowTooLarge, InsufficientRegenerations) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
