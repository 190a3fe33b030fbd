"""Dataset loading and preprocessing: missing-value removal, z-scores, PCA, stratified splits."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

BUILTIN_DATASETS = ("iris", "tae", "penguin", "glass", "ecoli", "vowel")
# datasets reduced by PCA before embedding (more features than the others)
PCA_DATASETS = ("glass", "ecoli", "vowel")
PCA_THRESHOLD = 0.85


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    file: str
    label_column: str = "label"
    missing_tokens: tuple = ("NA", "")
    categorical: dict = field(default_factory=dict)
    features: tuple | None = None  # None: every column except the label
    delimiter: str | None = None  # None: comma if present in the header, else whitespace

    @classmethod
    def from_json(cls, path) -> "DatasetSchema":
        d = json.loads(Path(path).read_text())
        return cls(
            name=d["name"],
            file=d["file"],
            label_column=d.get("label_column", "label"),
            missing_tokens=tuple(d.get("missing_tokens", ("NA", ""))),
            categorical=d.get("categorical", {}),
            features=tuple(d["features"]) if d.get("features") else None,
            delimiter=d.get("delimiter"),
        )


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray  # integer labels 1..l
    feature_names: list
    class_names: list  # original label strings, index s-1 for label s
    name: str = ""
    n_dropped: int = 0
    digest: str = ""

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, X=self.X[idx], y=self.y[idx])

    def with_features(self, X, names=None) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if names is None:
            names = self.feature_names if X.shape[1] == self.n_features else [f"pc{k + 1}" for k in range(X.shape[1])]
        return replace(self, X=X, feature_names=list(names))


def _label_order(labels: Sequence[str]) -> list:
    """Distinct labels, numerically ordered when all are integers, else lexicographically."""
    distinct = set(labels)
    if all(re.fullmatch(r"-?\d+", s) for s in distinct):
        return sorted(distinct, key=int)
    return sorted(distinct)


def load_dataset(path, schema: DatasetSchema) -> Dataset:
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = schema.delimiter or ("," if "," in lines[0] else None)
    if delim is None:
        rows = [ln.split() for ln in lines]
    else:
        rows = list(csv.reader(lines, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    if schema.label_column not in header:
        raise DataError(f"{path}: label column {schema.label_column!r} not in header")
    label_idx = header.index(schema.label_column)
    feats = list(schema.features) if schema.features else [h for h in header if h != schema.label_column]
    missing_cols = [f for f in feats if f not in header]
    if missing_cols:
        raise DataError(f"{path}: feature columns {missing_cols} not in header")
    cols = [header.index(f) for f in feats]
    missing = set(schema.missing_tokens)

    values, labels, dropped = [], [], 0
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {r} has {len(row)} fields, expected {len(header)}")
        cells = [row[c].strip() for c in cols]
        lab = row[label_idx].strip()
        if lab in missing or any(c in missing for c in cells):
            dropped += 1
            continue
        parsed = []
        for name, c, cell in zip(feats, cols, cells):
            mapping = schema.categorical.get(name)
            if mapping is not None:
                if cell not in mapping:
                    raise DataError(f"{path}: line {r}, column {name!r}: unknown category {cell!r}")
                parsed.append(float(mapping[cell]))
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: line {r}, column {name!r}: cannot parse {cell!r}") from None
        values.append(parsed)
        labels.append(lab)
    if not values:
        raise DataError(f"{path}: no complete rows")
    classes = _label_order(labels)
    if len(classes) < 2:
        raise DataError(f"{path}: need at least two classes")
    code = {c: k + 1 for k, c in enumerate(classes)}
    return Dataset(
        X=np.array(values, dtype=float),
        y=np.array([code[s] for s in labels], dtype=int),
        feature_names=feats,
        class_names=classes,
        name=schema.name,
        n_dropped=dropped,
        digest=hashlib.sha256(text.encode()).hexdigest(),
    )


def builtin_dir() -> Path:
    return Path(str(resources.files("qmsvm") / "datasets"))


def load_builtin(name: str) -> Dataset:
    if name not in BUILTIN_DATASETS:
        raise DataError(f"unknown dataset {name!r}; choose from {', '.join(BUILTIN_DATASETS)}")
    base = builtin_dir()
    schema = DatasetSchema.from_json(base / f"{name}.json")
    return load_dataset(base / schema.file, schema)


def resolve_dataset(ref: str, schema_path=None) -> Dataset:
    """A built-in dataset name, or a file path with a JSON schema next to it (or given)."""
    if ref in BUILTIN_DATASETS:
        return load_builtin(ref)
    path = Path(ref)
    if not path.exists():
        raise DataError(f"dataset {ref!r} is neither a built-in name nor an existing file")
    schema_path = Path(schema_path) if schema_path else path.with_suffix(".json")
    if schema_path.exists():
        schema = DatasetSchema.from_json(schema_path)
    else:
        schema = DatasetSchema(name=path.stem, file=path.name)
    return load_dataset(path, schema)


# ---------------------------------------------------------------------------
# z-score normalization


@dataclass(frozen=True)
class ZScore:
    mean: np.ndarray
    std: np.ndarray  # population standard deviation; 0 marks a constant column

    @classmethod
    def fit(cls, X) -> "ZScore":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise DataError("cannot fit normalization on an empty set")
        return cls(X.mean(axis=0), X.std(axis=0))

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)


def zscore_fit_transform(train: Dataset) -> tuple[ZScore, Dataset]:
    norm = ZScore.fit(train.X)
    return norm, train.with_features(norm.transform(train.X))


def zscore_apply(norm: ZScore, other: Dataset) -> Dataset:
    return other.with_features(norm.transform(other.X))


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # N x N, columns sorted by explained variance
    explained_ratio: np.ndarray
    k: int

    @classmethod
    def fit(cls, X, threshold: float = PCA_THRESHOLD) -> "PcaModel":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] < 2:
            raise DataError("PCA needs at least two features")
        if not 0 < threshold <= 1:
            raise DataError(f"threshold must be in (0, 1], got {threshold}")
        mean = X.mean(axis=0)
        cov = np.cov(X - mean, rowvar=False, ddof=1)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1]
        vals = np.clip(vals[order], 0.0, None)
        vecs = vecs[:, order]
        # fix the sign so the largest-magnitude loading of each component is positive
        flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
        vecs = vecs * np.where(flip == 0, 1.0, flip)
        total = vals.sum()
        ratio = vals / total if total > 0 else np.full_like(vals, 1.0 / len(vals))
        cum = np.cumsum(ratio)
        k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
        return cls(mean, vecs, ratio, min(k, len(vals)))

    def transform(self, X, k: int | None = None) -> np.ndarray:
        k = self.k if k is None else k
        return (np.asarray(X, dtype=float) - self.mean) @ self.components[:, :k]

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return Z @ self.components[:, : Z.shape[1]].T + self.mean


def pca_fit(train: Dataset, threshold: float = PCA_THRESHOLD) -> PcaModel:
    return PcaModel.fit(train.X, threshold)


def pca_apply(model: PcaModel, dataset: Dataset) -> Dataset:
    return dataset.with_features(model.transform(dataset.X))


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    train: np.ndarray | None = None
    test: np.ndarray | None = None
    folds: tuple | None = None

    def fold(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Train and held-out indices for fold ``k`` of a k-fold plan."""
        test = self.folds[k]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != k]))
        return train, test


def _labels_of(data) -> np.ndarray:
    return np.asarray(data.y if isinstance(data, Dataset) else data, dtype=int)


def _largest_remainder(counts: np.ndarray, total: int) -> np.ndarray:
    quota = counts * total / counts.sum()
    base = np.floor(quota).astype(int)
    rest = total - base.sum()
    order = np.lexsort((np.arange(len(counts)), -(quota - base)))
    base[order[:rest]] += 1
    return base


def stratified_split(data, test_fraction: float = 0.3, seed: int = 0) -> SplitPlan:
    """Per-class train/test partition.

    The test set has ``ceil(test_fraction * m)`` points, apportioned over the
    classes by largest remainder; members of each class are shuffled by ``seed``.
    """
    y = _labels_of(data)
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < 2:
        raise DataError(f"class {classes[np.argmin(counts)]} has fewer than two members")
    n_test = math.ceil(round(test_fraction * len(y), 9))
    per_class = _largest_remainder(counts, n_test)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c, q in zip(classes, per_class):
        idx = rng.permutation(np.flatnonzero(y == c))
        test.append(idx[:q])
        train.append(idx[q:])
    return SplitPlan(seed, np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def stratified_kfold(data, k: int = 5, seed: int = 0) -> SplitPlan:
    """``k`` disjoint folds with class proportions preserved to within one point."""
    y = _labels_of(data)
    if k < 2:
        raise DataError("k must be at least 2")
    if k > len(y):
        raise DataError(f"k={k} exceeds the number of samples {len(y)}")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in np.unique(y)])
    folds = tuple(np.sort(order[j::k]) for j in range(k))
    return SplitPlan(seed, folds=folds)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class Prepared:
    train: Dataset
    test: Dataset
    zscore: ZScore
    pca: PcaModel | None


def preprocess(train: Dataset, test: Dataset, use_pca: bool = False, threshold: float = PCA_THRESHOLD,
               fit_on: Dataset | None = None) -> Prepared:
    """z-score (and optionally PCA) fitted on ``fit_on`` (default: the training part), applied to both parts."""
    base = fit_on if fit_on is not None else train
    norm = ZScore.fit(base.X)
    tr, te = zscore_apply(norm, train), zscore_apply(norm, test)
    pca = None
    if use_pca:
        pca = PcaModel.fit(norm.transform(base.X), threshold)
        tr, te = pca_apply(pca, tr), pca_apply(pca, te)
    return Prepared(tr, te, norm, pca)


def prepare_split(data: Dataset, train_idx, test_idx, use_pca: bool | None = None,
                  threshold: float = PCA_THRESHOLD, fit_on_all: bool = False) -> Prepared:
    if use_pca is None:
        use_pca = data.name in PCA_DATASETS
    fit_on = data if fit_on_all else None
    return preprocess(data.subset(train_idx), data.subset(test_idx), use_pca, threshold, fit_on)


def pca_components_on_all(data: Dataset, threshold: float = PCA_THRESHOLD) -> PcaModel:
    """PCA of the whole z-scored dataset (the explained-variance view of a dataset)."""
    return PcaModel.fit(ZScore.fit(data.X).transform(data.X), threshold)
