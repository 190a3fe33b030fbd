"""Classification metrics, one-vs-rest ROC analysis, and kernel capacity estimates."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

RADEMACHER_DRAWS = 200


class MetricsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# confusion matrix and aggregates


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # l x l, rows = true class, columns = predicted class

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion(true_labels, predicted_labels, n_classes: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=int).ravel()
    p = np.asarray(predicted_labels, dtype=int).ravel()
    if t.shape != p.shape:
        raise MetricsError(f"length mismatch: {t.size} true labels, {p.size} predictions")
    for name, arr in (("true", t), ("predicted", p)):
        bad = arr[(arr < 1) | (arr > n_classes)]
        if bad.size:
            raise MetricsError(f"{name} label {bad[0]} outside 1..{n_classes}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t - 1, p - 1), 1)
    return ConfusionMatrix(counts)


def _ratio(num, den):
    """Elementwise num/den with 0 where den == 0; also returns the zero-division mask."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    zero = den == 0
    out = np.divide(num, den, out=np.zeros_like(num), where=~zero)
    return out, zero


def _f1(p, r):
    out, _ = _ratio(2 * p * r, p + r)
    return out


@dataclass
class MetricsReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    weights: np.ndarray  # support fractions used by the weighted averages
    accuracy: float
    macro: dict
    micro: dict
    weighted: dict
    zero_division: dict  # metric name -> list of 1-based classes where a 0/0 was replaced by 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
                "support": self.support.tolist(),
            },
            "weights": self.weights.tolist(),
            "macro": dict(self.macro),
            "micro": dict(self.micro),
            "weighted": dict(self.weighted),
            "zero_division": {k: list(v) for k, v in self.zero_division.items()},
        }


def classification_metrics(cm: ConfusionMatrix) -> MetricsReport:
    c = np.asarray(cm.counts, dtype=np.int64)
    total = int(c.sum())
    if total == 0:
        raise MetricsError("empty confusion matrix")
    tp = np.diag(c)
    pred = c.sum(axis=0)
    sup = c.sum(axis=1)
    fp = pred - tp
    fn = sup - tp

    precision, zp = _ratio(tp, tp + fp)
    recall, zr = _ratio(tp, tp + fn)
    f1 = _f1(precision, recall)
    zf = (precision + recall) == 0

    weights = sup / total
    accuracy = float(tp.sum() / total)

    tp_all, fp_all, fn_all = int(tp.sum()), int(fp.sum()), int(fn.sum())
    micro_p = tp_all / (tp_all + fp_all)
    micro_r = tp_all / (tp_all + fn_all)
    # pooled-count form; since fp_all == fn_all this is the same division as the accuracy
    micro_f = 2 * tp_all / (2 * tp_all + fp_all + fn_all)

    def cls(mask):
        return [int(k) + 1 for k in np.flatnonzero(mask)]

    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=sup,
        weights=weights,
        accuracy=accuracy,
        macro={"precision": float(precision.mean()), "recall": float(recall.mean()), "f1": float(f1.mean())},
        micro={"precision": float(micro_p), "recall": float(micro_r), "f1": float(micro_f)},
        weighted={
            "precision": float(weights @ precision),
            "recall": float(weights @ recall),
            "f1": float(weights @ f1),
        },
        zero_division={"precision": cls(zp), "recall": cls(zr), "f1": cls(zf)},
    )


def accuracy(true_labels, predicted_labels) -> float:
    t = np.asarray(true_labels)
    return float(np.mean(t == np.asarray(predicted_labels))) if t.size else 0.0


# ---------------------------------------------------------------------------
# ROC


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


@dataclass
class RocReport:
    curves: dict  # 1-based class -> RocCurve (classes without positives or negatives are absent)
    micro: RocCurve
    macro_auc: float
    weighted_auc: float
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "auc": {str(k): c.auc for k, c in self.curves.items()},
            "micro_auc": self.micro.auc,
            "macro_auc": self.macro_auc,
            "weighted_auc": self.weighted_auc,
            "excluded": list(self.excluded),
        }


def binary_roc(positive, scores) -> RocCurve:
    """ROC curve sweeping a threshold over every distinct score (plus the two infinities)."""
    pos = np.asarray(positive, dtype=bool)
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise MetricsError("scores must be finite")
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC needs both positive and negative instances")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, p_sorted = s[order], pos[order]
    # last index of each block of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s) - 1]
    tps = np.cumsum(p_sorted)[ends]
    fps = (ends + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    tpr[-1] = fpr[-1] = 1.0  # guards the last element against rounding
    thresholds = np.r_[np.inf, s_sorted[ends]]
    thresholds = np.r_[thresholds, -np.inf]
    tpr, fpr = np.r_[tpr, 1.0], np.r_[fpr, 1.0]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2)
    return RocCurve(fpr, tpr, thresholds, auc)


def roc_curves(true_labels, scores, n_classes: int | None = None) -> RocReport:
    y = np.asarray(true_labels, dtype=int)
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2 or S.shape[0] != y.size:
        raise MetricsError(f"score matrix must be {y.size} x l, got {S.shape}")
    l = S.shape[1] if n_classes is None else n_classes
    curves, excluded = {}, []
    for s in range(1, l + 1):
        pos = y == s
        if pos.all() or not pos.any():
            excluded.append(s)
            continue
        curves[s] = binary_roc(pos, S[:, s - 1])
    if excluded:
        warnings.warn(f"classes {excluded} have no positives or no negatives; excluded from the AUC averages",
                      stacklevel=2)
    onehot = y[:, None] == np.arange(1, l + 1)[None, :]
    micro = binary_roc(onehot.ravel(), S[:, :l].ravel())
    aucs = np.array([c.auc for c in curves.values()])
    sup = np.array([(y == s).sum() for s in curves], dtype=float)
    return RocReport(
        curves=curves,
        micro=micro,
        macro_auc=float(aucs.mean()) if aucs.size else float("nan"),
        weighted_auc=float(sup @ aucs / sup.sum()) if aucs.size else float("nan"),
        excluded=excluded,
    )


# ---------------------------------------------------------------------------
# capacity


def frobenius_bound(K, delta: float = 1.0, D: int | None = None) -> float:
    K = np.asarray(getattr(K, "values", K), dtype=float)
    D = K.shape[0] if D is None else D
    if D != K.shape[0]:
        raise MetricsError(f"D={D} does not match the {K.shape[0]} rows of K")
    return float(delta * np.linalg.norm(K, "fro") / D)


@dataclass
class GeneralizationReport:
    frobenius_norm: float
    rademacher_estimate: float
    standard_error: float
    upper_bound: float
    delta: float
    D: int
    draws: int

    def to_dict(self) -> dict:
        return asdict(self)


def rademacher_estimate(K, delta: float = 1.0, draws: int = RADEMACHER_DRAWS, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo empirical Rademacher complexity of the norm-``delta`` ball of the kernel's feature space.

    For random signs w the supremum of ``(1/D) sum_i w_i f(x_i)`` over ``||f|| <= delta``
    equals ``(delta/D) ||K w||``; draw ``d`` uses the generator seeded by ``(seed, d)``.
    Returns the estimate and its Monte-Carlo standard error.
    """
    K = np.asarray(getattr(K, "values", K), dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise MetricsError("K must be square")
    if draws < 1:
        raise MetricsError("draws must be positive")
    D = K.shape[0]
    vals = np.empty(draws)
    for d in range(draws):
        w = np.random.default_rng([seed, d]).choice([-1.0, 1.0], size=D)
        vals[d] = np.linalg.norm(K @ w)
    vals *= delta / D
    se = float(vals.std(ddof=1) / math.sqrt(draws)) if draws > 1 else float("nan")
    return float(vals.mean()), se


def generalization_report(K, delta: float = 1.0, draws: int = RADEMACHER_DRAWS, seed: int = 0) -> GeneralizationReport:
    K = np.asarray(getattr(K, "values", K), dtype=float)
    est, se = rademacher_estimate(K, delta, draws, seed)
    return GeneralizationReport(
        frobenius_norm=float(np.linalg.norm(K, "fro")),
        rademacher_estimate=est,
        standard_error=se,
        upper_bound=frobenius_bound(K, delta),
        delta=delta,
        D=K.shape[0],
        draws=draws,
    )


# ---------------------------------------------------------------------------
# export


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    """JSON with full float precision (repr round-trips), non-finite floats as strings."""
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def format_table(header, rows, floatfmt: str = ".4f") -> str:
    """Aligned plain-text table."""
    cells = [[f"{v:{floatfmt}}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max(len(str(h)), *(len(r[k]) for r in cells)) if cells else len(str(h)) for k, h in enumerate(header)]
    line = lambda vals: "  ".join(str(v).rjust(w) for v, w in zip(vals, widths))
    return "\n".join([line(header), "  ".join("-" * w for w in widths), *(line(r) for r in cells)])


def metrics_table(report: MetricsReport) -> str:
    rows = [
        ["macro", report.macro["precision"], report.macro["recall"], report.macro["f1"]],
        ["micro", report.micro["precision"], report.micro["recall"], report.micro["f1"]],
        ["weighted", report.weighted["precision"], report.weighted["recall"], report.weighted["f1"]],
        ["accuracy", report.accuracy, "", ""],
    ]
    return format_table(["average", "precision", "recall", "f1"], rows)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_roc_csv(path, report: RocReport) -> None:
    rows = []
    for s, c in report.curves.items():
        rows += [(s, f, t) for f, t in zip(c.fpr, c.tpr)]
    rows += [("micro", f, t) for f, t in zip(report.micro.fpr, report.micro.tpr)]
    write_csv(path, ["class", "fpr", "tpr"], rows)
