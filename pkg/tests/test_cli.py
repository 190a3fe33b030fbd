import json
import math

import numpy as np
import pytest

from qmsvm import cli
from qmsvm import experiments as E
from qmsvm import kernels as Kn


def run(argv):
    lines = []
    code = cli.run(argv, out=lines.append)
    return code, "\n".join(lines)


# ---- bundle layout and determinism ---------------------------------------

def test_kernel_matrix_bundle_and_cache(tmp_path):
    out = tmp_path / "km"
    code, text = run(["kernel-matrix", "--dataset", "iris", "--kernels", "XQK", "--out", str(out)])
    assert code == 0 and "(computed)" in text
    for name in ("config.json", "metrics.json", "matrices/XQK.csv", "matrices/XQK.bin"):
        assert (out / name).exists()
    rep = json.loads((out / "metrics.json").read_text())
    assert rep["shape"] == [150, 150]
    assert rep["diagonal_error"] < 1e-10 and rep["symmetry_error"] < 1e-10
    first = (out / "matrices/XQK.csv").read_bytes()
    code, text = run(["kernel-matrix", "--dataset", "iris", "--kernels", "XQK", "--out", str(out)])
    assert code == 0 and "(cache)" in text
    assert (out / "matrices/XQK.csv").read_bytes() == first
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["command"] == "kernel-matrix" and len(cfg["data"]["sha256"]) == 64


def test_kernel_matrix_pauli_family_identical(tmp_path):
    mats = []
    for k in ("XQK", "YQK", "ZQK"):
        assert run(["kernel-matrix", "--dataset", "iris", "--kernels", k, "--out", str(tmp_path / k)])[0] == 0
        mats.append(Kn.KernelMatrix.from_csv(tmp_path / k / "matrices" / f"{k}.csv", Kn.KernelSpec(k)).values)
    assert np.abs(mats[0] - mats[1]).max() < 1e-12 and np.abs(mats[1] - mats[2]).max() < 1e-12


def test_shots_close_to_exact(tmp_path):
    run(["kernel-matrix", "--dataset", "iris", "--kernels", "XQK", "--out", str(tmp_path / "e")])
    run(["kernel-matrix", "--dataset", "iris", "--kernels", "XQK", "--shots", "1000", "--out", str(tmp_path / "s")])
    exact = Kn.KernelMatrix.from_csv(tmp_path / "e/matrices/XQK.csv", Kn.KernelSpec("XQK")).values
    shots = Kn.KernelMatrix.from_csv(tmp_path / "s/matrices/XQK[Z=1000].csv", Kn.KernelSpec("XQK")).values
    assert np.abs(exact - shots).mean() < 0.02


@pytest.mark.parametrize("workers", [1, 3])
def test_crossvalidate_deterministic_across_workers(tmp_path, workers):
    argv = ["crossvalidate", "--dataset", "iris", "--kernels", "XQK,ZQK,GK", "--C", "1", "--seed", "2"]
    assert run(argv + ["--out", str(tmp_path / "a")])[0] == 0
    assert run(argv + ["--out", str(tmp_path / "b"), "--workers", str(workers)])[0] == 0
    for name in ("metrics.json", "tables/cv_folds.csv", "tables/cv_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    res = json.loads((tmp_path / "a/metrics.json").read_text())
    assert len(res["folds"]) == 5 * 3
    fx = [r["accuracy"] for r in res["folds"] if r["kernel"] == "XQK"]
    fz = [r["accuracy"] for r in res["folds"] if r["kernel"] == "ZQK"]
    assert fx == fz


def test_evaluate_bundle(tmp_path):
    out = tmp_path / "ev"
    code, text = run(["evaluate", "--dataset", "iris", "--kernels", "XQK", "--noise", "0.05", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["n_train"] == 105 and doc["n_test"] == 45
    assert [r["noise"] for r in doc["runs"]] == [0.0, 0.05]
    for r in doc["runs"]:
        m = r["metrics"]
        assert m["micro"]["precision"] == m["micro"]["recall"] == m["micro"]["f1"] == m["accuracy"]
        assert np.array(r["confusion"]).sum() == 45
    assert doc["runs"][0]["C"] == doc["runs"][1]["C"]
    for name in ("tables/evaluation.csv", "tables/roc_XQK.csv", "matrices/confusion_XQK.csv",
                 "matrices/confusion_XQK_p0.05.csv", "matrices/gram_train_XQK.csv"):
        assert (out / name).exists()


def test_learning_curve_rows(tmp_path):
    out = tmp_path / "lc"
    code, _ = run(["learning-curve", "--dataset", "iris", "--kernels", "XQK", "--C", "1",
                   "--train-sizes", "0.2,0.6,1.0", "--out", str(out)])
    assert code == 0
    rows = json.loads((out / "metrics.json").read_text())["rows"]
    assert len(rows) == 3
    assert rows[-1]["train_size"] == 120


def test_learning_curve_full_size_matches_cv():
    cfg = E.ExperimentConfig(dataset="iris", kernels=["XQK"], C=1.0, train_sizes=[1.0]).validate()
    lc = E.learning_curve(cfg)
    cv = E.crossvalidate(cfg)
    assert lc[0]["test_mean"] == pytest.approx(cv["summary"]["XQK"]["mean"])


def test_generalization_bundle(tmp_path):
    out = tmp_path / "gen"
    code, _ = run(["generalization", "--dataset", "tae", "--kernels", "LK,FQK", "--draws", "50", "--out", str(out)])
    assert code == 0
    rows = json.loads((out / "metrics.json").read_text())["rows"]
    for r in rows:
        assert r["upper_bound"] == r["frobenius_norm"] / r["D"]
        assert r["D"] == 105 and r["draws"] == 50


def test_concentration_small(tmp_path):
    out = tmp_path / "conc"
    code, _ = run(["concentration", "--qubits", "3", "--shots", "200", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert "reconstruction" in doc["note"]
    rows = doc["rows"]
    assert [r["train_size"] for r in rows] == [10, 30, 50, 70, 90, 110, 130]
    assert rows[0]["relative_test_loss"] == 1.0 or math.isnan(rows[0]["relative_test_loss"])
    again = E.concentration(E.ConcentrationConfig(qubits=[3], shots=200))
    assert [r["test_loss"] for r in again] == [r["test_loss"] for r in rows]


# ---- configuration and exit codes ----------------------------------------

def test_config_file_and_override(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"dataset": "iris", "kernels": ["GK"], "seed": 5, "C": 10}))
    out = tmp_path / "o"
    assert run(["evaluate", "--config", str(cfg_path), "--seed", "6", "--out", str(out)])[0] == 0
    echoed = json.loads((out / "config.json").read_text())["config"]
    assert echoed["seed"] == 6 and echoed["C"] == 10 and echoed["kernels"] == ["GK"]


@pytest.mark.parametrize("argv", [
    ["evaluate", "--dataset", "nope"],
    ["evaluate", "--kernels", "XYZ"],
    ["evaluate", "--noise", "1.5"],
    ["evaluate", "--shots", "0"],
    ["evaluate", "--C", "-1"],
    ["crossvalidate", "--folds", "1"],
    ["concentration", "--qubits", "20"],
    ["concentration", "--noise", "0.1"],
])
def test_config_errors_exit_2(tmp_path, argv):
    assert run(argv + ["--out", str(tmp_path / "x")])[0] == cli.EXIT_CONFIG


def test_bad_config_file_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert run(["evaluate", "--config", str(p), "--out", str(tmp_path / "x")])[0] == cli.EXIT_CONFIG
    p.write_text(json.dumps({"unknown_key": 1}))
    assert run(["evaluate", "--config", str(p), "--out", str(tmp_path / "x")])[0] == cli.EXIT_CONFIG
    assert run(["evaluate", "--config", str(tmp_path / "missing.json")])[0] == cli.EXIT_CONFIG


def test_data_error_exit_3(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,2,x\n3,bad,y\n")
    assert run(["evaluate", "--dataset", str(p), "--out", str(tmp_path / "x")])[0] == cli.EXIT_DATA


def test_numerical_error_exit_4(tmp_path, monkeypatch):
    from qmsvm import svm

    def boom(*a, **k):
        raise svm.MonotonicityError("dual objective decreased")

    monkeypatch.setattr(svm, "train", boom)
    assert run(["evaluate", "--dataset", "iris", "--out", str(tmp_path / "x")])[0] == cli.EXIT_NUMERICAL


def test_custom_csv_with_schema(tmp_path):
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(0, 1, (20, 2)), rng.normal(3, 1, (20, 2))]
    lines = ["u,v,kind"] + [f"{a},{b},{'p' if k < 20 else 'q'}" for k, (a, b) in enumerate(X)]
    (tmp_path / "toy.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "toy.json").write_text(json.dumps({"name": "toy", "file": "toy.csv", "label_column": "kind"}))
    out = tmp_path / "o"
    assert run(["evaluate", "--dataset", str(tmp_path / "toy.csv"), "--kernels", "XQK", "--C", "1",
                "--out", str(out)])[0] == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["n_test"] == 12 and doc["runs"][0]["metrics"]["accuracy"] > 0.8


def test_select_hyperparameters_tie_break():
    K = np.eye(12)
    y = np.repeat([1, 2, 3], 4)
    cfg = E.ExperimentConfig(C_grid=[10.0, 0.1, 1.0], inner_folds=2)
    ci, C, scores = E.select_hyperparameters([K, K], y, cfg, 3, seed=0)
    # every setting scores the same on an identity kernel: earliest candidate, smallest C
    assert ci == 0 and C == 0.1 and len(scores) == 6


def test_classical_candidates():
    assert E.classical_candidates("LK", 4, True) == [{}]
    assert E.classical_candidates("GK", 4, False) == [{}]
    assert E.classical_candidates("GK", 4, True)[0] == {"gamma": 0.25}
    assert len(E.classical_candidates("PK", 4, True)) == 4
