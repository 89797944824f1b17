"""Blow-up sweep over (alpha, p, h); prints the Thm4.1 ratio table.

    python scripts/blowup_sweep.py [--alpha 0.3,0.6,0.9] [--h 1/64,1/128,1/256] [--out runs/blowup]
"""
import argparse
import csv
from collections import defaultdict
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from whitney_w2p.harness import default_config
from whitney_w2p.harness.runner import run


def _floats(s):
    return [float(Fraction(t)) for t in s.split(",")]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=_floats)
    ap.add_argument("--p", type=_floats)
    ap.add_argument("--h", type=_floats)
    ap.add_argument("--out", default="runs/blowup-sweep")
    args = ap.parse_args(argv)
    cfg = default_config("blowup-sweep")
    over = {k: v for k, v in (("alphas", args.alpha), ("ps", args.p), ("hs", args.h)) if v}
    cfg = replace(cfg, out=args.out, **over).validate()

    man = run(cfg)
    table = defaultdict(dict)
    for row in csv.DictReader(open(Path(cfg.out) / "reports" / "blowup-sweep.csv")):
        table[(float(row["alpha"]), float(row["p"]))][float(row["h"])] = float(row["ratio"])
    hs = sorted({h for row in table.values() for h in row}, reverse=True)
    print(f"{'alpha':>6} {'p':>4}  " + "  ".join(f"{'h=1/' + str(round(1 / h)):>10}" for h in hs))
    for (a, p), row in sorted(table.items()):
        print(f"{a:6.2f} {p:4.1f}  " + "  ".join(f"{row.get(h, float('nan')):10.5f}" for h in hs))
    for c in man.checks:
        if c["name"] == "ladder":
            print(f"{c['verdict']:5s} {c['task']:32s} {c['note']}")
    print(f"{man.verdict} -> {man.out}")
    return 0 if man.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
