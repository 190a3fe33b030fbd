"""Assemble the bundled multiclass CSV files from raw source files.

Usage: python3 scripts/build_datasets.py --keel DIR --penguins FILE [--iris FILE]

DIR is the ``data`` directory of the KEEL collection as shipped in the
``keel-ds`` wheel (it contains ``balanced/raw`` and ``imbalanced/raw``).
Glass and Ecoli only exist there as one-vs-rest binary variants, so the
multiclass labels are rebuilt by matching rows across the variants.
"""
import argparse
import collections
import csv
import hashlib
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "qmsvm" / "datasets"


def read_keel(path):
    attrs, rows = [], []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s:
            continue
        if s.lower().startswith("@attribute"):
            attrs.append(s.split()[1])
        elif not s.startswith("@"):
            rows.append([t.strip() for t in s.split(",")])
    return attrs, rows


def _digits(text):
    """Significant decimal digits of a value in [0, 1] as an integer.

    Several KEEL variants print 0.40 as ``4.0`` and 0.09 as ``9.0``, so rows
    from different variants are only comparable through this lossy code.
    """
    v = float(text)
    if v > 1.0:
        return int(round(v))
    frac = f"{v:.2f}".split(".")[1].rstrip("0")
    return int(frac) if frac else int(round(v))


def row_key(values, coarse=False):
    if coarse:
        return tuple(_digits(v) for v in values)
    return tuple(round(float(v), 8) for v in values)


def positives(path, coarse=False):
    _, rows = read_keel(path)
    return collections.Counter(row_key(r[:-1], coarse) for r in rows if r[-1] == "positive")


def relabel(base_rows, groups, default, coarse=False):
    """Assign each row the label of the first group whose multiset still holds it."""
    remaining = {k: collections.Counter(v) for k, v in groups.items()}
    labels = []
    for r in base_rows:
        key = row_key(r[:-1], coarse)
        for name, cnt in remaining.items():
            if cnt[key] > 0:
                cnt[key] -= 1
                labels.append(name)
                break
        else:
            labels.append(default)
    leftover = {k: sum(v.values()) for k, v in remaining.items() if sum(v.values())}
    if leftover:
        raise RuntimeError(f"unmatched rows: {leftover}")
    return labels


def write(name, header, rows, labels, meta):
    path = OUT / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + ["label"])
        for r, lab in zip(rows, labels):
            w.writerow(list(r) + [lab])
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    counts = collections.Counter(labels)
    meta.setdefault("label_column", "label")
    meta.setdefault("missing_tokens", ["NA", ""])
    meta.update(
        name=name,
        file=path.name,
        n_samples=len(rows),
        n_features=len(header),
        features=header,
        classes={str(k): counts[k] for k in sorted(counts, key=str)},
        sha256=digest,
    )
    (OUT / f"{name}.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(name, len(rows), len(header), dict(counts))


def build_glass(keel):
    raw = keel / "imbalanced" / "raw"
    _, base = read_keel(raw / "glass0.dat")
    attrs = ["RI", "Na", "Mg", "Al", "Si", "K", "Ca", "Ba", "Fe", "Type"]
    # positive class of each binary variant, keyed by original class code
    groups = {
        "1": positives(raw / "glass0.dat"),
        "2": positives(raw / "glass1.dat"),
        "5": positives(raw / "glass4.dat"),
        "6": positives(raw / "glass5.dat"),
        "7": positives(raw / "glass6.dat"),
    }
    # glass2.dat carries differently rounded feature values, so class 3 is
    # taken as the rows that no other variant claims
    labels = relabel(base, groups, default="3")
    write("glass", attrs[:-1], [r[:-1] for r in base], labels,
          {"source": "KEEL glass0/1/4/5/6 one-vs-rest variants, labels rebuilt by row matching"})


def build_ecoli(keel):
    raw = keel / "imbalanced" / "raw"
    _, base = read_keel(raw / "ecoli1.dat")
    attrs = ["mcg", "gvh", "lip", "chg", "aac", "alm1", "alm2", "class"]
    c = dict(coarse=True)
    coarse_keys = collections.Counter(row_key(r[:-1], True) for r in base)
    fine_keys = collections.Counter(row_key(r[:-1]) for r in base)
    assert len(coarse_keys) == len(fine_keys), "coarse row code is ambiguous"
    om = positives(raw / "ecoli4.dat", **c)
    oml = positives(raw / "ecoli-0-3-4-7_vs_5-6.dat", **c) - om
    ims = positives(raw / "ecoli-0-1-3-7_vs_2-6.dat", **c) - oml
    groups = {
        "cp": positives(raw / "ecoli-0_vs_1.dat", **c),
        "im": positives(raw / "ecoli1.dat", **c),
        "pp": positives(raw / "ecoli2.dat", **c),
        "imU": positives(raw / "ecoli3.dat", **c),
        "om": om,
        "omL": oml,
        "imS": ims,
    }
    labels = relabel(base, groups, default="imL", coarse=True)
    write("ecoli", attrs[:-1], [r[:-1] for r in base], labels,
          {"source": "KEEL ecoli one-vs-rest variants, labels rebuilt by row matching"})


def build_plain(keel, fname):
    _, rows = read_keel(keel / "balanced" / "raw" / fname)
    return rows


def build_tae(keel):
    rows = build_plain(keel, "tae.dat")
    feats = ["native_english", "instructor", "course", "semester", "class_size"]
    write("tae", feats, [r[:-1] for r in rows], [r[-1] for r in rows], {"source": "KEEL tae.dat"})


def build_vowel(keel):
    # columns: train/test flag, speaker, sex, ten formant features, class
    rows = [r for r in build_plain(keel, "vowel.dat") if r[0] == "0"]
    feats = [f"F{i}" for i in range(10)]
    write("vowel", feats, [r[3:13] for r in rows], [r[-1] for r in rows],
          {"source": "KEEL vowel.dat, training partition (first column == 0), ten formant features"})


def build_iris(keel):
    rows = build_plain(keel, "iris.dat")
    feats = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    write("iris", feats, [r[:-1] for r in rows], [r[-1] for r in rows], {"source": "KEEL iris.dat"})


def build_penguin(path):
    # raw rows are kept, including the 11 with missing values; the loader drops them
    feats = ["bill_length_mm", "bill_depth_mm", "flipper_length_mm", "body_mass_g", "sex"]
    rows, labels = [], []
    with open(path) as fh:
        for rec in csv.DictReader(fh):
            rows.append([rec[f] for f in feats])
            labels.append(rec["species"])
    write("penguin", feats, rows, labels,
          {"source": "palmerpenguins penguins.csv (four morphometric columns plus sex)",
           "categorical": {"sex": {"female": 0, "male": 1}}})


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--keel", type=Path, required=True)
    ap.add_argument("--penguins", type=Path, required=True)
    args = ap.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    build_glass(args.keel)
    build_ecoli(args.keel)
    build_tae(args.keel)
    build_vowel(args.keel)
    build_iris(args.keel)
    build_penguin(args.penguins)


if __name__ == "__main__":
    main()
