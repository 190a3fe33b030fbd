"""Held-out accuracy of every kernel on every bundled dataset over several split seeds.

Usage: python3 scripts/run_benchmarks.py [--seeds 0 1 2 3 4] [--datasets iris tae ...] [--out bench.json]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from qmsvm import data as D
from qmsvm import experiments as E
from qmsvm import kernels as Kn
from qmsvm.metrics import format_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--datasets", nargs="+", default=list(D.BUILTIN_DATASETS))
    ap.add_argument("--kernels", nargs="+", default=list(Kn.KERNEL_NAMES))
    ap.add_argument("--cache", default="runs/cache")
    ap.add_argument("--out", default="runs/benchmarks.json")
    args = ap.parse_args()

    cache = E.GramCache(args.cache)
    table, rows = {}, []
    for name in args.datasets:
        ds = D.load_builtin(name)
        for kernel in args.kernels:
            accs = []
            for seed in args.seeds:
                res = E.evaluate(E.ExperimentConfig(dataset=name, kernels=[kernel], seed=seed), ds, cache)
                accs.append(res["results"][0]["report"].accuracy)
            table[f"{name}/{kernel}"] = accs
            rows.append([name, kernel, f"{np.mean(accs):.4f}", f"{np.std(accs):.4f}", f"{max(accs):.4f}"])
            print(*rows[-1], flush=True)
    print(format_table(["dataset", "kernel", "mean", "std", "max"], rows))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump({"seeds": args.seeds, "accuracy": table}, fh, indent=2)


if __name__ == "__main__":
    main()
