"""Command-line experiment runner.

Each subcommand writes an output bundle:

    <out>/config.json      resolved configuration plus the input-data digest
    <out>/metrics.json     machine-readable results
    <out>/tables/*.csv     plot-ready tables
    <out>/matrices/*       Gram matrices and confusion matrices

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as D
from . import experiments as E
from . import kernels as Kn
from . import metrics as M
from . import svm as S
from .qsim import ChannelError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
COMMANDS = ("kernel-matrix", "crossvalidate", "evaluate", "learning-curve", "concentration", "generalization")


class Bundle:
    def __init__(self, out):
        self.root = Path(out)
        (self.root / "tables").mkdir(parents=True, exist_ok=True)
        (self.root / "matrices").mkdir(parents=True, exist_ok=True)

    def json(self, name, obj):
        M.write_json(self.root / name, obj)

    def table(self, name, header, rows):
        M.write_csv(self.root / "tables" / name, header, rows)

    def matrix_path(self, name) -> Path:
        return self.root / "matrices" / name


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="JSON config file; command-line flags override its values")
    g.add_argument("--seed", type=int, help="split / sampling seed")
    g.add_argument("--workers", type=int, help="worker threads for Gram matrices and one-vs-all training")
    g.add_argument("--out", help="output directory (default: runs/<command>)")
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="exact kernel values (default)")
    mode.add_argument("--shots", type=int, help="estimate quantum kernels from this many measurement shots")
    g.add_argument("--noise", type=float, help="per-qubit depolarizing probability for quantum kernels")
    g.add_argument("--strategy", choices=("ova", "cs"), help="one-vs-all or joint (Crammer-Singer) multiclass SVM")
    g.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    return p


def _data_flags(p):
    p.add_argument("--dataset", help=f"built-in name ({', '.join(D.BUILTIN_DATASETS)}) or CSV path")
    p.add_argument("--schema", help="JSON schema for a CSV dataset")
    p.add_argument("--kernels", help="comma-separated kernel names, e.g. XQK,GK")
    p.add_argument("--C", type=float, dest="C", help="fixed regularization constant (skips the C grid search)")
    p.add_argument("--C-grid", dest="C_grid", help="comma-separated C values searched by inner cross-validation")
    p.add_argument("--no-pca", dest="pca", action="store_const", const=False, help="never apply PCA")
    p.add_argument("--pca", dest="pca", action="store_const", const=True, help="always apply PCA")
    p.add_argument("--fit-on-all", action="store_true", default=None,
                   help="fit normalization and PCA on the whole dataset instead of the training part")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="qmsvm", description="Quantum-kernel multiclass SVM experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-matrix", parents=[common], help="compute and cache a Gram matrix")
    _data_flags(p)

    p = sub.add_parser("crossvalidate", parents=[common], help="stratified k-fold accuracy per kernel")
    _data_flags(p)
    p.add_argument("--folds", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="70/30 split: metrics, ROC, confusion matrix")
    _data_flags(p)
    p.add_argument("--noise-sweep", action="store_true", default=None,
                   help=f"also evaluate at every depolarizing level in {list(E.NOISE_SWEEP)}")

    p = sub.add_parser("learning-curve", parents=[common], help="accuracy against training-set size")
    _data_flags(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--train-sizes", dest="train_sizes", help="comma-separated fractions of each training fold")

    p = sub.add_parser("concentration", parents=[common], help="kernel concentration against qubit count")
    p.add_argument("--qubits", help="qubit range, e.g. 4-10 or 4,6,8")
    p.add_argument("--C", type=float, dest="C")

    p = sub.add_parser("generalization", parents=[common], help="Frobenius norms and Rademacher estimates")
    _data_flags(p)
    p.add_argument("--draws", type=int, dest="rademacher_draws")
    return parser


def _floats(text) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _qubits(text) -> list:
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def _read_config(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise E.ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise E.ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise E.ConfigError("config file must hold a JSON object")
    return d


def resolve_config(args):
    """Merge the config file and the command-line flags (flags win) into a validated config."""
    d = _read_config(args.config) if args.config else {}
    over = {}
    for key in ("seed", "workers", "strategy", "dataset", "schema", "C", "pca", "fit_on_all", "folds",
                "rademacher_draws"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "kernels", None):
        over["kernels"] = [k.strip() for k in args.kernels.split(",") if k.strip()]
    if getattr(args, "C_grid", None):
        over["C_grid"] = _floats(args.C_grid)
    if getattr(args, "train_sizes", None):
        over["train_sizes"] = _floats(args.train_sizes)
    if getattr(args, "noise_sweep", None):
        over["noise_sweep"] = list(E.NOISE_SWEEP)
    if args.shots is not None:
        over["shots"] = args.shots
    elif args.exact:
        over["shots"] = None
    if args.noise is not None:
        over["noise"] = args.noise

    if args.command == "concentration":
        for key in ("strategy", "dataset", "schema", "pca", "fit_on_all", "folds", "rademacher_draws", "noise"):
            if key in over:
                raise E.ConfigError(f"--{key.replace('_', '-')} does not apply to the concentration command")
        if getattr(args, "qubits", None):
            over["qubits"] = _qubits(args.qubits)
        if over.get("shots") is None:
            over.pop("shots", None)
        cfg = E.ConcentrationConfig.from_dict({**d, **over})
    else:
        cfg = E.ExperimentConfig.from_dict({**d, **over})
        if args.command == "kernel-matrix" and cfg.cache_dir is None:
            cfg.cache_dir = str(Path(args.out or _default_out(args.command)) / "cache")
    try:
        return cfg.validate()
    except TypeError as exc:
        raise E.ConfigError(f"bad config value: {exc}") from None


def _default_out(command: str) -> str:
    return str(Path("runs") / command)


# ---------------------------------------------------------------------------
# commands


def _echo_config(bundle: Bundle, command: str, cfg, ds=None):
    doc = {"command": command, "config": cfg.to_dict()}
    if ds is not None:
        doc["data"] = {"name": ds.name, "sha256": E.data_fingerprint(ds), "n_samples": ds.n_samples,
                       "n_features": ds.n_features, "n_classes": ds.n_classes, "classes": ds.class_names,
                       "dropped_rows": ds.n_dropped}
    bundle.json("config.json", doc)


def cmd_kernel_matrix(cfg: E.ExperimentConfig, bundle: Bundle, out=print):
    ds = E.load_data(cfg)
    cache = E.GramCache(cfg.cache_dir, cfg.workers)
    km, X = E.kernel_matrix(cfg, ds, cache)
    label = km.spec.label()
    km.to_csv(bundle.matrix_path(f"{label}.csv"))
    Kn.save_cache(bundle.matrix_path(f"{label}.bin"), km.values, Kn.cache_key(km.spec, X))
    report = {"kernel": label, "spec": km.spec.to_dict(), "shape": list(km.shape),
              "frobenius": km.frobenius(), **km.invariant_report()}
    bundle.json("metrics.json", report)
    _echo_config(bundle, "kernel-matrix", cfg, ds)
    source = "cache" if cache.hits else "computed"
    out(f"{label}: {km.shape[0]}x{km.shape[1]} ({source}); symmetry error {report['symmetry_error']:.2e}, "
        f"diagonal error {report['diagonal_error']:.2e}, min eigenvalue {report['min_eigenvalue']:.3e}")
    return report


def cmd_crossvalidate(cfg: E.ExperimentConfig, bundle: Bundle, out=print, plot=False):
    ds = E.load_data(cfg)
    res = E.crossvalidate(cfg, ds, E.GramCache(cfg.cache_dir, cfg.workers))
    bundle.table("cv_folds.csv", ["kernel", "fold", "C", "accuracy", "train_accuracy"],
                 [[r["kernel"], r["fold"], r["C"], r["accuracy"], r["train_accuracy"]] for r in res["folds"]])
    bundle.table("cv_summary.csv", ["kernel", "mean_accuracy", "std_accuracy"],
                 [[k, v["mean"], v["std"]] for k, v in res["summary"].items()])
    bundle.json("metrics.json", res)
    _echo_config(bundle, "crossvalidate", cfg, ds)
    out(M.format_table(["kernel", "mean", "std"], [[k, v["mean"], v["std"]] for k, v in res["summary"].items()]))
    if plot:
        _plot_cv(bundle, res)
    return res


def cmd_evaluate(cfg: E.ExperimentConfig, bundle: Bundle, out=print, plot=False):
    ds = E.load_data(cfg)
    res = E.evaluate(cfg, ds, E.GramCache(cfg.cache_dir, cfg.workers))
    doc = {"n_train": res["n_train"], "n_test": res["n_test"], "runs": []}
    rows = []
    for r in res["results"]:
        tag = r["kernel"] + (f"_p{r['noise']:g}" if r["noise"] else "")
        rep = r["report"]
        doc["runs"].append({"kernel": r["kernel"], "noise": r["noise"], "C": r["C"], "spec": r["spec"],
                            "train_accuracy": r["train_accuracy"], "metrics": rep.to_dict(),
                            "roc": r["roc"].to_dict(), "confusion": r["confusion"].counts})
        rows.append([r["kernel"], r["noise"], r["C"], rep.accuracy,
                     rep.macro["precision"], rep.macro["recall"], rep.macro["f1"],
                     rep.micro["precision"], rep.micro["recall"], rep.micro["f1"],
                     rep.weighted["precision"], rep.weighted["recall"], rep.weighted["f1"],
                     r["roc"].macro_auc])
        M.write_csv(bundle.matrix_path(f"confusion_{tag}.csv"),
                    ["true\\pred", *range(1, ds.n_classes + 1)],
                    [[t + 1, *row] for t, row in enumerate(r["confusion"].counts.tolist())])
        M.write_roc_csv(bundle.root / "tables" / f"roc_{tag}.csv", r["roc"])
        Kn.KernelMatrix(r["fit"].K_train, r["fit"].spec).to_csv(bundle.matrix_path(f"gram_train_{tag}.csv"))
        if plot:
            _plot_roc(bundle, tag, r["roc"])
    header = ["kernel", "noise", "C", "accuracy", "macro_precision", "macro_recall", "macro_f1",
              "micro_precision", "micro_recall", "micro_f1", "weighted_precision", "weighted_recall",
              "weighted_f1", "macro_auc"]
    bundle.table("evaluation.csv", header, rows)
    bundle.json("metrics.json", doc)
    _echo_config(bundle, "evaluate", cfg, ds)
    out(M.format_table(["kernel", "noise", "C", "accuracy", "macro F1", "weighted F1", "macro AUC"],
                       [[r[0], r[1], r[2], r[3], r[6], r[12], r[13]] for r in rows]))
    return doc


def cmd_learning_curve(cfg: E.ExperimentConfig, bundle: Bundle, out=print, plot=False):
    ds = E.load_data(cfg)
    rows = E.learning_curve(cfg, ds, E.GramCache(cfg.cache_dir, cfg.workers))
    header = ["fraction", "train_size", "train_mean", "train_std", "test_mean", "test_std"]
    bundle.table("learning_curve.csv", header, [[r[h] for h in header] for r in rows])
    bundle.json("metrics.json", {"kernel": cfg.kernels[0], "rows": rows})
    _echo_config(bundle, "learning-curve", cfg, ds)
    out(M.format_table(header, [[r[h] for h in header] for r in rows]))
    if plot:
        _plot_learning_curve(bundle, rows)
    return rows


def cmd_concentration(cfg: E.ConcentrationConfig, bundle: Bundle, out=print, plot=False):
    rows = E.concentration(cfg)
    header = ["qubits", "train_size", "train_loss", "test_loss", "relative_test_loss",
              "kernel_offdiag_mean", "kernel_offdiag_var"]
    bundle.table("concentration.csv", header, [[r[h] for h in header] for r in rows])
    bundle.json("metrics.json", {
        "rows": rows,
        "note": "synthetic labels from a random teacher (sign of a random kernel expansion over anchor "
                "points, median threshold); losses are 0-1 losses; relative_test_loss is the test loss "
                "divided by its value at n_init training points. This labeling and loss are a "
                "reconstruction, not a documented protocol.",
    })
    _echo_config(bundle, "concentration", cfg)
    out(M.format_table(header[:5], [[r[h] for h in header[:5]] for r in rows]))
    if plot:
        _plot_concentration(bundle, rows)
    return rows


def cmd_generalization(cfg: E.ExperimentConfig, bundle: Bundle, out=print):
    ds = E.load_data(cfg)
    rows = E.generalization(cfg, ds, E.GramCache(cfg.cache_dir, cfg.workers))
    header = ["kernel", "frobenius_norm", "rademacher_estimate", "standard_error", "upper_bound", "D", "draws"]
    bundle.table("generalization.csv", header, [[r[h] for h in header] for r in rows])
    bundle.json("metrics.json", {"rows": rows})
    _echo_config(bundle, "generalization", cfg, ds)
    out(M.format_table(header[:5], [[r[h] for h in header[:5]] for r in rows]))
    return rows


# ---------------------------------------------------------------------------
# optional figures


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise E.ConfigError("--plot needs matplotlib (pip install 'artifact[plot]')") from None
    return plt


def _plot_cv(bundle, res):
    plt = _pyplot()
    names = list(res["summary"])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, [res["summary"][k]["mean"] for k in names], color="tab:blue", alpha=0.7)
    for i, k in enumerate(names):
        ax.scatter([i] * len(res["summary"][k]["folds"]), res["summary"][k]["folds"], color="k", s=10)
    ax.set_ylabel("accuracy")
    fig.tight_layout()
    fig.savefig(bundle.root / "crossvalidate.png", dpi=120)
    plt.close(fig)


def _plot_roc(bundle, tag, roc):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for s, c in roc.curves.items():
        ax.plot(c.fpr, c.tpr, label=f"class {s} (AUC {c.auc:.4f})")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(bundle.root / f"roc_{tag}.png", dpi=120)
    plt.close(fig)


def _plot_learning_curve(bundle, rows):
    plt = _pyplot()
    x = [r["train_size"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, color in (("train", "tab:blue"), ("test", "tab:purple")):
        mean = np.array([r[f"{key}_mean"] for r in rows])
        std = np.array([r[f"{key}_std"] for r in rows])
        ax.plot(x, mean, color=color, label=key)
        ax.fill_between(x, mean - std, mean + std, color=color, alpha=0.2)
    ax.set_xlabel("training size")
    ax.set_ylabel("accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(bundle.root / "learning_curve.png", dpi=120)
    plt.close(fig)


def _plot_concentration(bundle, rows):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for n in sorted({r["qubits"] for r in rows}):
        sel = [r for r in rows if r["qubits"] == n]
        ax.plot([r["train_size"] for r in sel], [r["relative_test_loss"] for r in sel], marker="o", label=f"{n} qubits")
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("training size")
    ax.set_ylabel("relative test loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(bundle.root / "concentration.png", dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point


def run(argv=None, out=print) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.plot:
            _pyplot()
        bundle = Bundle(args.out or _default_out(args.command))
        if args.command == "kernel-matrix":
            cmd_kernel_matrix(cfg, bundle, out)
        elif args.command == "crossvalidate":
            cmd_crossvalidate(cfg, bundle, out, args.plot)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, bundle, out, args.plot)
        elif args.command == "learning-curve":
            cmd_learning_curve(cfg, bundle, out, args.plot)
        elif args.command == "concentration":
            cmd_concentration(cfg, bundle, out, args.plot)
        else:
            cmd_generalization(cfg, bundle, out)
    except (E.ConfigError, Kn.KernelSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except D.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (S.MonotonicityError, FloatingPointError, np.linalg.LinAlgError, ChannelError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
