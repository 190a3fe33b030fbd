"""Frobenius norm, Rademacher estimate and its upper bound for every kernel on every dataset.

Usage: python3 scripts/run_capacity.py [--draws 200] [--seed 0] [--out runs/capacity.csv]
"""
import argparse
from pathlib import Path

from qmsvm import data as D
from qmsvm import experiments as E
from qmsvm import kernels as Kn
from qmsvm.metrics import format_table, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/capacity.csv")
    args = ap.parse_args()

    header = ["dataset", "kernel", "frobenius_norm", "rademacher_estimate", "standard_error", "upper_bound"]
    rows = []
    for name in D.BUILTIN_DATASETS:
        cfg = E.ExperimentConfig(dataset=name, kernels=list(Kn.KERNEL_NAMES), seed=args.seed,
                                 rademacher_draws=args.draws)
        for r in E.generalization(cfg):
            rows.append([name, r["kernel"], r["frobenius_norm"], r["rademacher_estimate"],
                         r["standard_error"], r["upper_bound"]])
    print(format_table(header, rows))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, header, rows)


if __name__ == "__main__":
    main()
