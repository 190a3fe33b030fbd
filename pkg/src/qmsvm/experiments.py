"""Experiment drivers: cross-validation, held-out evaluation, learning curves,
kernel-concentration study and capacity analysis.

Every driver is a pure function of its config and returns plain dicts/rows;
writing the output bundle is left to the command-line layer.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as D
from . import kernels as Kn
from . import metrics as M
from . import svm as S

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
NOISE_SWEEP = (0.01, 0.05, 0.1, 0.2)
# best-performing quantum kernel per built-in dataset
OPTIMAL_KERNELS = {"iris": "XQK", "tae": "FQK", "penguin": "CQK", "glass": "XQK", "ecoli": "LQK", "vowel": "FQK"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "iris"
    schema: str | None = None
    kernels: list = field(default_factory=lambda: ["XQK"])
    strategy: str = "ova"
    C_grid: list = field(default_factory=lambda: list(DEFAULT_C_GRID))
    C: float | None = None  # fixed C; skips the grid search
    inner_folds: int = 5
    classical_sweep: bool = True
    seed: int = 0
    shots: int | None = None
    noise: float = 0.0
    noise_sweep: list = field(default_factory=list)
    folds: int = 5
    test_fraction: float = 0.3
    pca: bool | None = None  # None: on for the high-dimensional built-in datasets
    pca_threshold: float = D.PCA_THRESHOLD
    fit_on_all: bool = False
    train_sizes: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    rademacher_draws: int = M.RADEMACHER_DRAWS
    workers: int = 1
    cache_dir: str | None = None

    def validate(self) -> "ExperimentConfig":
        if not self.kernels:
            raise ConfigError("at least one kernel is required")
        for k in self.kernels:
            if k not in Kn.KERNEL_NAMES:
                raise ConfigError(f"unknown kernel {k!r}; choose from {', '.join(Kn.KERNEL_NAMES)}")
        if self.strategy not in ("ova", "cs"):
            raise ConfigError(f"strategy must be 'ova' or 'cs', got {self.strategy!r}")
        if not self.C_grid or any(not (c > 0 and math.isfinite(c)) for c in self.C_grid):
            raise ConfigError(f"C grid must hold positive finite values, got {self.C_grid}")
        if self.C is not None and not (self.C > 0 and math.isfinite(self.C)):
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.shots is not None and (int(self.shots) != self.shots or self.shots < 1):
            raise ConfigError(f"shots must be a positive integer, got {self.shots}")
        for p in [self.noise, *self.noise_sweep]:
            if not 0 <= p <= 1:
                raise ConfigError(f"noise probability must lie in [0, 1], got {p}")
        if self.folds < 2 or self.inner_folds < 2:
            raise ConfigError("folds and inner_folds must be at least 2")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0 < self.pca_threshold <= 1:
            raise ConfigError(f"pca_threshold must lie in (0, 1], got {self.pca_threshold}")
        if not self.train_sizes or any(not 0 < f <= 1 for f in self.train_sizes):
            raise ConfigError(f"train_sizes must be fractions in (0, 1], got {self.train_sizes}")
        if self.rademacher_draws < 1:
            raise ConfigError("rademacher_draws must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.dataset not in D.BUILTIN_DATASETS and not Path(self.dataset).exists():
            raise ConfigError(f"dataset {self.dataset!r} is neither a built-in name nor an existing file")
        if self.schema is not None and not Path(self.schema).exists():
            raise ConfigError(f"schema file {self.schema!r} does not exist")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass
class ConcentrationConfig:
    qubits: list = field(default_factory=lambda: list(range(4, 11)))
    total_points: int = 150
    test_points: int = 20
    shots: int = 1000
    seed: int = 15
    train_sizes: list = field(default_factory=lambda: [10, 30, 50, 70, 90, 110, 130])
    n_init: int = 10
    kernel: str = "ZQK"
    anchors: int = 10
    C: float = 100.0
    workers: int = 1

    def validate(self) -> "ConcentrationConfig":
        if not self.qubits or min(self.qubits) < 1 or max(self.qubits) > 12:
            raise ConfigError(f"qubit counts must lie in 1..12, got {self.qubits}")
        if self.kernel not in Kn.QUANTUM_KERNELS:
            raise ConfigError(f"concentration study needs a quantum kernel, got {self.kernel!r}")
        pool = self.total_points - self.test_points
        if self.test_points < 1 or pool < 2:
            raise ConfigError("need at least one test point and two training points")
        if not self.train_sizes or min(self.train_sizes) < 2 or max(self.train_sizes) > pool:
            raise ConfigError(f"training sizes must lie in 2..{pool}, got {self.train_sizes}")
        if self.n_init not in self.train_sizes:
            raise ConfigError(f"n_init={self.n_init} must be one of the training sizes")
        if self.shots < 1 or self.anchors < 1 or not self.C > 0:
            raise ConfigError("shots, anchors and C must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConcentrationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Gram matrices with an optional on-disk cache


class GramCache:
    def __init__(self, directory=None, workers: int = 1):
        self.dir = Path(directory) if directory else None
        self.workers = workers
        self.hits = 0
        self.misses = 0
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def gram(self, spec: Kn.KernelSpec, rows, cols=None) -> np.ndarray:
        arrays = (rows,) if cols is None else (rows, cols)
        path = None
        if self.dir:
            key = Kn.cache_key(spec, *arrays)
            path = self.dir / f"{spec.name}-{key.hex()[:24]}.bin"
            cached = Kn.load_cache(path, key)
            if cached is not None:
                self.hits += 1
                return cached
        self.misses += 1
        values = Kn.gram_matrix(rows, cols, spec, workers=self.workers).values
        if path is not None:
            Kn.save_cache(path, values, key)
        return values


def make_spec(name: str, cfg: ExperimentConfig, noise: float | None = None, **classical) -> Kn.KernelSpec:
    if name in Kn.QUANTUM_KERNELS:
        p = cfg.noise if noise is None else noise
        return Kn.KernelSpec(name, noise=p, shots=cfg.shots, seed=cfg.seed)
    return Kn.KernelSpec(name, **classical)


def classical_candidates(name: str, n_features: int, sweep: bool) -> list[dict]:
    """Hyperparameter settings tried for a classical kernel (defaults first)."""
    base = 1.0 / n_features
    if not sweep or name == "LK":
        return [{}]
    if name == "GK":
        return [{"gamma": base * s} for s in (1.0, 0.1, 10.0)]
    if name == "PK":
        return [{"gamma": g, "degree": d} for d in (3, 2) for g in (1.0, base)]
    if name == "SK":
        return [{"gamma": base * s, "coef0": c} for s in (1.0, 0.1) for c in (-1.0, -0.1)]
    raise ConfigError(f"{name} is not a classical kernel")


def kernel_candidates(name: str, cfg: ExperimentConfig, n_features: int, noise=None) -> list[Kn.KernelSpec]:
    if name in Kn.QUANTUM_KERNELS:
        return [make_spec(name, cfg, noise)]
    return [make_spec(name, cfg, **p) for p in classical_candidates(name, n_features, cfg.classical_sweep)]


# ---------------------------------------------------------------------------
# training with model selection


def _fit(K, y, C, cfg: ExperimentConfig, n_classes: int) -> S.MulticlassModel:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", S.DegenerateProblemWarning)
        kw = {"workers": cfg.workers} if cfg.strategy == "ova" else {}
        return S.train(K, y, C, cfg.strategy, n_classes=n_classes, allow_absent=True, **kw)


def select_hyperparameters(grams: list, y, cfg: ExperimentConfig, n_classes: int, seed: int):
    """Pick (candidate index, C) by inner stratified k-fold accuracy on the training Gram matrices.

    Ties go to the earliest candidate and then the smallest C.
    """
    grid = [cfg.C] if cfg.C is not None else sorted(cfg.C_grid)
    if len(grams) == 1 and len(grid) == 1:
        return 0, grid[0], {}
    y = np.asarray(y)
    k = min(cfg.inner_folds, int(np.bincount(y).max()))
    plan = D.stratified_kfold(y, max(k, 2), seed)
    scores = {}
    for ci, K in enumerate(grams):
        for C in grid:
            accs = []
            for f in range(len(plan.folds)):
                tr, va = plan.fold(f)
                model = _fit(K[np.ix_(tr, tr)], y[tr], C, cfg, n_classes)
                accs.append(M.accuracy(y[va], S.predict(model, K[np.ix_(va, tr)])))
            scores[(ci, C)] = float(np.mean(accs))
    best = max(scores.values())
    ci, C = next(key for key in scores if scores[key] >= best - 1e-12)
    return ci, C, scores


@dataclass
class FitResult:
    kernel: str
    spec: Kn.KernelSpec
    C: float
    model: S.MulticlassModel
    train_accuracy: float
    y_test: np.ndarray
    y_pred: np.ndarray
    scores: np.ndarray
    K_train: np.ndarray
    K_test: np.ndarray

    @property
    def test_accuracy(self) -> float:
        return M.accuracy(self.y_test, self.y_pred)


def fit_and_score(ds: D.Dataset, train_idx, test_idx, kernel: str, cfg: ExperimentConfig, cache: GramCache,
                  noise=None, C: float | None = None, spec: Kn.KernelSpec | None = None,
                  seed: int | None = None) -> FitResult:
    """Preprocess on the training part, build the Gram matrices, select hyperparameters, train and predict.

    ``C`` and ``spec`` pin the hyperparameters instead of searching for them.
    """
    use_pca = cfg.pca if cfg.pca is not None else ds.name in D.PCA_DATASETS
    prep = D.prepare_split(ds, train_idx, test_idx, use_pca, cfg.pca_threshold, cfg.fit_on_all)
    Xtr, Xte, ytr = prep.train.X, prep.test.X, prep.train.y
    specs = [spec] if spec is not None else kernel_candidates(kernel, cfg, Xtr.shape[1], noise)
    grams = [cache.gram(s, Xtr) for s in specs]
    if C is None:
        ci, C, _ = select_hyperparameters(grams, ytr, cfg, ds.n_classes, cfg.seed if seed is None else seed)
    else:
        ci = 0
    chosen, Ktr = specs[ci], grams[ci]
    Kte = cache.gram(chosen, Xte, Xtr)
    model = _fit(Ktr, ytr, C, cfg, ds.n_classes)
    return FitResult(
        kernel=kernel,
        spec=chosen,
        C=float(C),
        model=model,
        train_accuracy=M.accuracy(ytr, S.predict(model, Ktr)),
        y_test=prep.test.y,
        y_pred=S.predict(model, Kte),
        scores=S.decision_values(model, Kte),
        K_train=Ktr,
        K_test=Kte,
    )


# ---------------------------------------------------------------------------
# drivers


def load_data(cfg: ExperimentConfig) -> D.Dataset:
    return D.resolve_dataset(cfg.dataset, cfg.schema)


def _spec_summary(spec: Kn.KernelSpec) -> dict:
    return {k: v for k, v in spec.to_dict().items() if v is not None}


def crossvalidate(cfg: ExperimentConfig, ds: D.Dataset | None = None, cache: GramCache | None = None) -> dict:
    ds = ds or load_data(cfg)
    cache = cache or GramCache(cfg.cache_dir, cfg.workers)
    plan = D.stratified_kfold(ds, cfg.folds, cfg.seed)
    rows, summary = [], {}
    for kernel in cfg.kernels:
        accs = []
        for f in range(cfg.folds):
            tr, te = plan.fold(f)
            res = fit_and_score(ds, tr, te, kernel, cfg, cache)
            accs.append(res.test_accuracy)
            rows.append({"kernel": kernel, "fold": f, "C": res.C, "accuracy": res.test_accuracy,
                         "train_accuracy": res.train_accuracy, "spec": _spec_summary(res.spec)})
        summary[kernel] = {"mean": float(np.mean(accs)), "std": float(np.std(accs)), "folds": accs}
    return {"folds": rows, "summary": summary}


def evaluate(cfg: ExperimentConfig, ds: D.Dataset | None = None, cache: GramCache | None = None) -> dict:
    """Held-out evaluation on a stratified split, noiseless and at each requested noise level.

    Noisy runs reuse the C chosen for the noiseless kernel so that only the Gram matrix changes.
    """
    ds = ds or load_data(cfg)
    cache = cache or GramCache(cfg.cache_dir, cfg.workers)
    plan = D.stratified_split(ds, cfg.test_fraction, cfg.seed)
    noise_levels = sorted({p for p in ([cfg.noise] if cfg.noise else []) + list(cfg.noise_sweep) if p > 0})
    results = []
    for kernel in cfg.kernels:
        base = fit_and_score(ds, plan.train, plan.test, kernel, cfg, cache, noise=0.0)
        runs = [(0.0, base)]
        if kernel in Kn.QUANTUM_KERNELS:
            for p in noise_levels:
                spec = dataclasses.replace(base.spec, noise=p)
                runs.append((p, fit_and_score(ds, plan.train, plan.test, kernel, cfg, cache, C=base.C, spec=spec)))
        for p, res in runs:
            cm = M.confusion(res.y_test, res.y_pred, ds.n_classes)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                roc = M.roc_curves(res.y_test, res.scores, ds.n_classes)
            results.append({"kernel": kernel, "noise": p, "C": res.C, "spec": _spec_summary(res.spec),
                            "train_accuracy": res.train_accuracy, "fit": res,
                            "confusion": cm, "report": M.classification_metrics(cm), "roc": roc})
    return {"split": plan, "results": results, "n_train": len(plan.train), "n_test": len(plan.test)}


def _stratified_subsample(y, fraction: float, rng) -> np.ndarray:
    """Per-class subsample keeping at least one member of each class."""
    idx = []
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        idx.append(members[: max(1, int(round(fraction * len(members))))])
    return np.sort(np.concatenate(idx))


def learning_curve(cfg: ExperimentConfig, ds: D.Dataset | None = None, cache: GramCache | None = None) -> list:
    ds = ds or load_data(cfg)
    cache = cache or GramCache(cfg.cache_dir, cfg.workers)
    plan = D.stratified_kfold(ds, cfg.folds, cfg.seed)
    kernel = cfg.kernels[0]
    rows = []
    for frac in cfg.train_sizes:
        tr_acc, te_acc, sizes = [], [], []
        for f in range(cfg.folds):
            tr, te = plan.fold(f)
            rng = np.random.default_rng([cfg.seed, f, int(round(frac * 1e6))])
            sub = tr[_stratified_subsample(ds.y[tr], frac, rng)]
            res = fit_and_score(ds, sub, te, kernel, cfg, cache, seed=cfg.seed + f)
            tr_acc.append(res.train_accuracy)
            te_acc.append(res.test_accuracy)
            sizes.append(len(sub))
        rows.append({"fraction": frac, "train_size": float(np.mean(sizes)),
                     "train_mean": float(np.mean(tr_acc)), "train_std": float(np.std(tr_acc)),
                     "test_mean": float(np.mean(te_acc)), "test_std": float(np.std(te_acc))})
    return rows


def generalization(cfg: ExperimentConfig, ds: D.Dataset | None = None, cache: GramCache | None = None) -> list:
    """Capacity of each kernel on the training part of the split: Frobenius norm, Rademacher estimate, bound."""
    ds = ds or load_data(cfg)
    cache = cache or GramCache(cfg.cache_dir, cfg.workers)
    plan = D.stratified_split(ds, cfg.test_fraction, cfg.seed)
    use_pca = cfg.pca if cfg.pca is not None else ds.name in D.PCA_DATASETS
    prep = D.prepare_split(ds, plan.train, plan.test, use_pca, cfg.pca_threshold, cfg.fit_on_all)
    rows = []
    for kernel in cfg.kernels:
        spec = make_spec(kernel, cfg)
        K = cache.gram(spec, prep.train.X)
        rep = M.generalization_report(K, 1.0, cfg.rademacher_draws, cfg.seed)
        rows.append({"kernel": kernel, **rep.to_dict()})
    return rows


def kernel_matrix(cfg: ExperimentConfig, ds: D.Dataset | None = None, cache: GramCache | None = None):
    """Gram matrix of the first configured kernel over the whole preprocessed dataset, and those features."""
    ds = ds or load_data(cfg)
    cache = cache or GramCache(cfg.cache_dir, cfg.workers)
    use_pca = cfg.pca if cfg.pca is not None else ds.name in D.PCA_DATASETS
    X = D.ZScore.fit(ds.X).transform(ds.X)
    if use_pca:
        X = D.PcaModel.fit(X, cfg.pca_threshold).transform(X)
    spec = make_spec(cfg.kernels[0], cfg)
    return Kn.KernelMatrix(cache.gram(spec, X), spec), X


# ---------------------------------------------------------------------------
# kernel concentration


def _teacher_labels(X, anchors, weights, kernel: str) -> np.ndarray:
    """Classes 1/2 from a random expansion in the exact kernel, thresholded at its median."""
    f = Kn.gram_matrix(X, anchors, Kn.KernelSpec(kernel)).values @ weights
    return np.where(f > np.median(f), 1, 2)


def concentration(cfg: ConcentrationConfig) -> list:
    """Training loss and relative test loss against training size for each qubit count.

    The relative loss is the test 0-1 loss divided by its value at ``n_init``
    training points; it is NaN when that reference loss is zero.
    """
    rows = []
    pool = cfg.total_points - cfg.test_points
    for n in cfg.qubits:
        rng = np.random.default_rng([cfg.seed, n])
        X = rng.uniform(0.0, 2 * np.pi, size=(cfg.total_points, n))
        anchors = rng.uniform(0.0, 2 * np.pi, size=(cfg.anchors, n))
        weights = rng.normal(size=cfg.anchors)
        y = _teacher_labels(X, anchors, weights, cfg.kernel)
        order = rng.permutation(cfg.total_points)
        test, train_pool = order[:cfg.test_points], order[cfg.test_points:]
        # keep both classes among the first training points so every prefix is a two-class problem
        first_other = np.flatnonzero(y[train_pool] != y[train_pool[0]])
        if first_other.size and first_other[0] > 1:
            j = first_other[0]
            train_pool[[1, j]] = train_pool[[j, 1]]
        spec = Kn.KernelSpec(cfg.kernel, shots=cfg.shots, seed=cfg.seed)
        Xp = X[train_pool]
        K_pool = Kn.gram_matrix(Xp, spec=spec, workers=cfg.workers).values
        K_test = Kn.gram_matrix(X[test], Xp, spec=spec, workers=cfg.workers).values
        losses = {}
        for size in sorted(cfg.train_sizes):
            idx = np.arange(min(size, pool))
            yt = y[train_pool][idx]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", S.DegenerateProblemWarning)
                model = S.train_one_vs_all(K_pool[np.ix_(idx, idx)], yt, cfg.C, n_classes=2, allow_absent=True)
            train_loss = 1.0 - M.accuracy(yt, S.predict(model, K_pool[np.ix_(idx, idx)]))
            test_loss = 1.0 - M.accuracy(y[test], S.predict(model, K_test[:, idx]))
            losses[size] = (train_loss, test_loss)
        ref = losses[cfg.n_init][1]
        offdiag = K_pool[np.triu_indices(pool, 1)]
        for size in sorted(cfg.train_sizes):
            tr_l, te_l = losses[size]
            rows.append({"qubits": n, "train_size": size, "train_loss": tr_l, "test_loss": te_l,
                         "relative_test_loss": te_l / ref if ref > 0 else float("nan"),
                         "kernel_offdiag_mean": float(offdiag.mean()),
                         "kernel_offdiag_var": float(offdiag.var())})
    return rows


def data_fingerprint(ds: D.Dataset) -> str:
    if ds.digest:
        return ds.digest
    return hashlib.sha256(np.ascontiguousarray(ds.X).tobytes() + ds.y.tobytes()).hexdigest()
