"""Run every experiment with its default config into runs/<name>/ and print
a one-line verdict per experiment.  Exit status 1 if any experiment fails."""
import argparse
from dataclasses import replace
from pathlib import Path

from whitney_w2p.harness import default_config
from whitney_w2p.harness.config import EXPERIMENTS
from whitney_w2p.harness.runner import run


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="runs")
    ap.add_argument("--only", nargs="*", choices=EXPERIMENTS)
    args = ap.parse_args(argv)
    ok = True
    for name in args.only or EXPERIMENTS:
        man = run(replace(default_config(name), out=str(Path(args.root) / name)))
        ok &= man.passed
        bad = ", ".join(f"{c['task']}:{c['name']}" for c in man.failed_checks()[:4])
        print(f"{man.verdict:4s} {name:16s} {man.wall_clock:7.1f}s  {bad}", flush=True)
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
