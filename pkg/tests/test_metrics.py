import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qmsvm import metrics as M


# ---- confusion -----------------------------------------------------------

def test_confusion_hand_example():
    cm = M.confusion([1, 1, 2], [1, 2, 2], 2)
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 1]])
    assert cm.total == 3
    np.testing.assert_array_equal(cm.support, [2, 1])


def test_confusion_perfect_is_diagonal():
    y = [1, 2, 3, 3, 2]
    cm = M.confusion(y, y, 3)
    np.testing.assert_array_equal(cm.counts, np.diag([1, 2, 2]))


def test_confusion_errors():
    with pytest.raises(M.MetricsError):
        M.confusion([1, 2], [1], 2)
    with pytest.raises(M.MetricsError, match="outside"):
        M.confusion([1, 3], [1, 2], 2)
    with pytest.raises(M.MetricsError, match="predicted"):
        M.confusion([1, 2], [0, 2], 2)


# ---- metrics -------------------------------------------------------------

def test_perfect_report_all_ones():
    rep = M.classification_metrics(M.confusion([1, 2, 3, 1], [1, 2, 3, 1], 3))
    for avg in (rep.macro, rep.micro, rep.weighted):
        assert all(v == 1.0 for v in avg.values())
    assert rep.accuracy == 1.0


def test_hand_computed_report():
    # true 1 1 1 2 2 3 ; pred 1 1 2 2 3 3
    rep = M.classification_metrics(M.confusion([1, 1, 1, 2, 2, 3], [1, 1, 2, 2, 3, 3], 3))
    np.testing.assert_allclose(rep.precision, [1.0, 0.5, 0.5])
    np.testing.assert_allclose(rep.recall, [2 / 3, 0.5, 1.0])
    np.testing.assert_allclose(rep.f1, [0.8, 0.5, 2 / 3])
    assert rep.accuracy == pytest.approx(4 / 6)
    assert rep.macro["precision"] == pytest.approx(2 / 3)
    assert rep.weighted["precision"] == pytest.approx(3 / 6 * 1 + 2 / 6 * 0.5 + 1 / 6 * 0.5)


def test_zero_division_flagged():
    # class 3 is never predicted and never true: every ratio for it is 0/0
    rep = M.classification_metrics(M.confusion([1, 2, 2], [1, 1, 2], 3))
    assert rep.precision[2] == 0 and rep.recall[2] == 0 and rep.f1[2] == 0
    assert 3 in rep.zero_division["precision"]
    assert 3 in rep.zero_division["recall"]
    assert rep.zero_division["precision"] == [3]


def test_empty_confusion_rejected():
    with pytest.raises(M.MetricsError):
        M.classification_metrics(M.ConfusionMatrix(np.zeros((2, 2), int)))


@st.composite
def confusion_matrices(draw):
    l = draw(st.integers(2, 8))
    counts = draw(arrays(np.int64, (l, l), elements=st.integers(0, 50)))
    if counts.sum() == 0:
        counts[0, 0] = 1
    return M.ConfusionMatrix(counts)


@settings(max_examples=200, deadline=None)
@given(confusion_matrices())
def test_micro_and_weighted_identities(cm):
    rep = M.classification_metrics(cm)
    assert rep.micro["precision"] == rep.accuracy
    assert rep.micro["recall"] == rep.accuracy
    assert rep.micro["f1"] == rep.accuracy
    assert abs(rep.weighted["recall"] - rep.accuracy) <= 1e-12
    for d in (rep.macro, rep.micro, rep.weighted):
        assert all(0 <= v <= 1 for v in d.values())
    assert rep.f1.min() - 1e-15 <= rep.macro["f1"] <= rep.f1.max() + 1e-15


# ---- ROC -----------------------------------------------------------------

def test_roc_perfect_and_chance():
    y = np.array([1, 1, 2, 2, 3, 3])
    S = np.eye(3)[y - 1] + 0.01 * np.arange(6)[:, None]
    rep = M.roc_curves(y, S)
    assert all(c.auc == 1.0 for c in rep.curves.values())
    rep = M.roc_curves(y, np.zeros((6, 3)))
    assert all(c.auc == 0.5 for c in rep.curves.values())
    assert rep.macro_auc == 0.5


def test_roc_hand_example():
    c = M.binary_roc([1, 0, 1, 0], [0.9, 0.8, 0.4, 0.1])
    np.testing.assert_allclose(c.fpr, [0, 0, 0.5, 0.5, 1, 1])
    np.testing.assert_allclose(c.tpr, [0, 0.5, 0.5, 1, 1, 1])
    assert c.auc == pytest.approx(0.75)
    assert c.thresholds[0] == np.inf and c.thresholds[-1] == -np.inf


def _pairwise_auc(pos, s):
    p, n = s[pos], s[~pos]
    return np.mean([(a > b) + 0.5 * (a == b) for a, b in itertools.product(p, n)])


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 30), st.integers(0, 2**32 - 1))
def test_roc_properties(m, seed):
    rng = np.random.default_rng(seed)
    pos = rng.random(m) < 0.5
    pos[0], pos[1] = True, False
    s = np.round(rng.normal(size=m), 1)  # rounding creates ties
    c = M.binary_roc(pos, s)
    assert (c.fpr[0], c.tpr[0]) == (0.0, 0.0) and (c.fpr[-1], c.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    assert 0 <= c.auc <= 1
    assert c.auc == pytest.approx(_pairwise_auc(pos, s), abs=1e-12)
    # strictly increasing transforms leave the AUC unchanged
    assert M.binary_roc(pos, np.exp(s) * 3 + 1).auc == pytest.approx(c.auc, abs=1e-12)


def test_roc_excludes_absent_class():
    y = np.array([1, 1, 2, 2])
    S = np.random.default_rng(0).normal(size=(4, 3))
    with pytest.warns(UserWarning, match=r"\[3\]"):
        rep = M.roc_curves(y, S)
    assert rep.excluded == [3] and set(rep.curves) == {1, 2}
    assert math.isfinite(rep.macro_auc)


def test_roc_rejects_nonfinite():
    with pytest.raises(M.MetricsError):
        M.binary_roc([1, 0], [np.nan, 1.0])


# ---- capacity ------------------------------------------------------------

def test_frobenius_bound_examples():
    assert M.frobenius_bound(np.eye(16)) == pytest.approx(0.25)
    K = np.eye(105) * (50.4150 / math.sqrt(105))
    assert M.frobenius_bound(K) == pytest.approx(0.4801, abs=5e-5)
    with pytest.raises(M.MetricsError):
        M.frobenius_bound(np.eye(3), D=4)


def test_rademacher_all_ones_two_points():
    # |w1 + w2| is 2 or 0 with equal odds, so the exact value is 1/sqrt(2)
    est, se = M.rademacher_estimate(np.ones((2, 2)), draws=4000, seed=1)
    assert abs(est - 1 / math.sqrt(2)) < 4 * se


def test_rademacher_identity_is_exact():
    # ||I w|| = sqrt(D) for every sign vector
    est, se = M.rademacher_estimate(np.eye(9), draws=10)
    assert est == pytest.approx(1 / 3) and se == pytest.approx(0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_rademacher_below_bound(m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, 3))
    K = A @ A.T
    rep = M.generalization_report(K, draws=100, seed=seed)
    assert rep.rademacher_estimate <= rep.upper_bound + 3 * rep.standard_error + 1e-12
    assert rep.upper_bound == rep.frobenius_norm / m


def test_rademacher_deterministic_and_errors():
    K = np.random.default_rng(0).normal(size=(6, 6))
    assert M.rademacher_estimate(K, seed=4) == M.rademacher_estimate(K, seed=4)
    with pytest.raises(M.MetricsError):
        M.rademacher_estimate(K, draws=0)
    with pytest.raises(M.MetricsError):
        M.rademacher_estimate(np.ones((2, 3)))


# ---- export --------------------------------------------------------------

def test_exports(tmp_path):
    y = np.array([1, 2, 2, 1])
    rep = M.classification_metrics(M.confusion(y, [1, 2, 1, 1], 2))
    M.write_json(tmp_path / "m.json", {"m": rep.to_dict(), "x": np.float64(0.1), "inf": float("inf")})
    back = json.loads((tmp_path / "m.json").read_text())
    assert back["m"]["accuracy"] == rep.accuracy and back["x"] == 0.1 and back["inf"] == "inf"
    roc = M.roc_curves(y, np.array([[1, 0], [0, 1], [0.2, 0.4], [0.7, 0.1]]))
    M.write_roc_csv(tmp_path / "roc.csv", roc)
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "class,fpr,tpr"
    text = M.metrics_table(rep)
    assert "micro" in text and "0.7500" in text
