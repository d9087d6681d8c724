"""Run the shipped experiment configs and print a per-sweep-value summary.

    python3 scripts/reproduce.py alpha_sweep k_sweep l_sweep
    python3 scripts/reproduce.py --all --force
"""
import argparse
import csv
import os
import sys
from collections import defaultdict

import numpy as np

from fedgradmp.cli import load_config, run_experiment

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, os.pardir, "configs")


def available():
    return sorted(f[:-4] for f in os.listdir(CONFIGS) if f.endswith(".ini"))


def summarize(rows):
    groups = defaultdict(list)
    for sweep, value, _seed, rounds, final in rows:
        groups[(sweep, value)].append((np.inf if rounds == "" else float(rounds), float(final)))
    for (sweep, value), vals in groups.items():
        rounds, finals = zip(*vals)
        label = f"{sweep}={value}" if sweep else "run"
        print(f"  {label:>24}  median rounds-to-threshold {np.median(rounds):>5g}  "
              f"median final rel error {np.median(finals):.3e}  ({len(vals)} seeds)")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help=f"config names from configs/: {', '.join(available())}")
    ap.add_argument("--all", action="store_true")
    ap.add_argument("--force", action="store_true", help="overwrite existing results")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)
    names = available() if args.all else args.names
    if not names:
        ap.error("name at least one config or pass --all")
    for name in names:
        print(f"== {name}")
        cfg = load_config(os.path.join(CONFIGS, f"{name}.ini"))
        run_experiment(cfg, force=args.force, threads=args.threads, log=lambda *_: None)
        out = os.environ.get("FEDGRADMP_OUTPUT_DIR") or cfg.experiment.output_dir
        with open(os.path.join(out, "summary.csv")) as fh:
            summarize([tuple(r.values()) for r in csv.DictReader(fh)])
    return 0


if __name__ == "__main__":
    sys.exit(main())
