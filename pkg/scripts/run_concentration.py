"""Training and relative test loss against training size for 4 to 10 qubits.

Usage: python3 scripts/run_concentration.py [--qubits 4 5 6] [--shots 1000] [--out runs/concentration.csv]
"""
import argparse
from pathlib import Path

from qmsvm import experiments as E
from qmsvm.metrics import format_table, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=list(range(4, 11)))
    ap.add_argument("--shots", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=15)
    ap.add_argument("--out", default="runs/concentration.csv")
    args = ap.parse_args()

    cfg = E.ConcentrationConfig(qubits=args.qubits, shots=args.shots, seed=args.seed).validate()
    rows = E.concentration(cfg)
    header = list(rows[0])
    table = [[r[h] for h in header] for r in rows]
    print(format_table(header, table))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, header, table)


if __name__ == "__main__":
    main()
