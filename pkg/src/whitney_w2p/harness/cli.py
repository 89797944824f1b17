"""Command line: whitney, solve, verify, sweep, report."""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (ESTIMATES, EXPERIMENTS, ConfigError, default_config, load_config,
                     resolve_domain)
from .runner import RunManifest, SchemaMismatch, compare_runs, run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _floats(text):
    if text is None:
        return None
    out = []
    for t in text.split(","):
        t = t.strip()
        if "/" in t:
            a, b = t.split("/")
            out.append(float(a) / float(b))
        else:
            out.append(float(t))
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--alpha", help="comma-separated α list")
    p.add_argument("--p", help="comma-separated p list")
    p.add_argument("--h", help="comma-separated h list (1/128 style allowed)")
    p.add_argument("--smax", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--domain", action="append", help="domain reference (repeatable)")
    p.add_argument("--no-plots", action="store_true")


def _config(experiment: str, args):
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config(experiment)
    if cfg.experiment != experiment:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {experiment!r}")
    over = {}
    if args.alpha:
        over["alphas"] = _floats(args.alpha)
    if args.p:
        over["ps"] = _floats(args.p)
    if args.h:
        over["hs"] = _floats(args.h)
    if args.smax is not None:
        over["s_max"] = args.smax
    if args.seed is not None:
        over["seeds"] = [args.seed]
    if args.domain:
        over["domains"] = args.domain
    over["out"] = args.out or f"runs/{experiment}"
    if args.no_plots:
        over["plots"] = False
    return replace(cfg, **over).validate()


def _print_manifest(man: RunManifest):
    for c in man.checks:
        print(f"{c['verdict']:5s} {c['task']:40s} {c['name']:34s} {c['value']}")
    print(f"{man.experiment}: {man.verdict} ({man.wall_clock:.1f}s) -> {man.out}")


def cmd_verify(args) -> int:
    target = args.estimate
    exp = ESTIMATES.get(target, target)
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown estimate or experiment id {target!r}")
    man = run(_config(exp, args))
    _print_manifest(man)
    return EXIT_OK if man.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    man = run(_config("blowup-sweep", args))
    _print_manifest(man)
    return EXIT_OK if man.passed else EXIT_FAIL


def cmd_whitney(args) -> int:
    from ..geometry import build_domain
    from ..whitney import decompose
    dom = build_domain(resolve_domain(args.domain[0] if args.domain else "flat"))
    smax = args.smax if args.smax is not None else (7 if dom.dim == 3 else 10)
    dec = decompose(dom, smax)
    out = Path(args.out or "runs/whitney")
    out.mkdir(parents=True, exist_ok=True)
    dec.dump_jsonl(out / "cubes.jsonl")
    dr = dec.check_distance_bounds()
    info = {"cubes": len(dec), "s_max": smax, "generations": dec.generation_counts(),
            "distance_ratio": [dr.min_ratio, dr.max_ratio], "distance_violations": dr.violations,
            "disjoint_violations": dec.check_disjoint()}
    (out / "summary.json").write_text(json.dumps(info, indent=2, sort_keys=True))
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK if dr.passed and info["disjoint_violations"] == 0 else EXIT_FAIL


def cmd_solve(args) -> int:
    from ..fdsolver import DegenerateArm, assemble_poisson, build_grid, solve
    from ..geometry import build_domain
    dom = build_domain(resolve_domain(args.domain[0] if args.domain else "flat"))
    h = _floats(args.h)[0] if args.h else 1 / 64
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateArm)
        G = build_grid(dom, h)
    u = solve(assemble_poisson(G, args.f), tol=1e-10)
    out = Path(args.out or "runs/solve") / "fields"
    out.mkdir(parents=True, exist_ok=True)
    G.dump_csv(out / "grid.csv")
    u.dump_csv(out / "u.csv")
    print(json.dumps({"h": h, "unknowns": G.n_unknowns, "max_u": float(np.abs(u.values).max()),
                      "residual": u.residual}))
    return EXIT_OK


def cmd_report(args) -> int:
    man = RunManifest.load(args.run)
    _print_manifest(man)
    if args.compare:
        d = compare_runs(man, RunManifest.load(args.compare))
        for k, a, b, delta in d.rows:
            print(f"{'/'.join(x for x in k if x):40s} {a:.6g} -> {b:.6g} ({delta:+.2%})")
    return EXIT_OK if man.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="whitney-w2p")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("whitney", help="decompose a domain and dump its cubes")
    _common(p)
    p.set_defaults(fn=cmd_whitney)
    p = sub.add_parser("solve", help="solve Δu = f with zero data and dump fields")
    _common(p)
    p.add_argument("--f", type=float, default=1.0)
    p.set_defaults(fn=cmd_solve)
    p = sub.add_parser("verify", help="run the experiment behind an estimate id")
    p.add_argument("estimate")
    _common(p)
    p.set_defaults(fn=cmd_verify)
    p = sub.add_parser("sweep", help="blow-up sweep across (α, p, h)")
    _common(p)
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("report", help="summarise a run, optionally against another")
    p.add_argument("run")
    p.add_argument("--compare")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigError, SchemaMismatch, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
