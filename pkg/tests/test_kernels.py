import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmsvm import kernels as K
from qmsvm import qsim
from qmsvm.kernels import FeatureMapSpec, KernelMatrix, KernelSpec

PAULI = ("pauli_x", "pauli_y", "pauli_z")


def vec(n, seed, scale=np.pi):
    return np.random.default_rng(seed).uniform(-scale, scale, size=n)


# ---- circuits ------------------------------------------------------------

def test_linear_gate_count():
    ops = K.build_feature_circuit(FeatureMapSpec("linear", 3), [0.1, 0.2, 0.3])
    assert len(ops) == 8
    assert sum(op.kind == "RZZ" for op in ops) == 2


@pytest.mark.parametrize("kind,count", [("full", 10), ("linear", 4), ("circular", 5)])
def test_two_qubit_gate_counts(kind, count):
    ops = K.build_feature_circuit(FeatureMapSpec(kind, 5), np.ones(5))
    assert sum(op.kind == "RZZ" for op in ops) == count


@pytest.mark.parametrize("n", range(1, 8))
def test_pair_sets(n):
    assert len(FeatureMapSpec("full", n).pairs()) == n * (n - 1) // 2
    assert len(FeatureMapSpec("linear", n).pairs()) == n - 1
    assert len(FeatureMapSpec("circular", n).pairs()) == (n if n > 1 else 0)
    assert FeatureMapSpec("pauli_x", n).pairs() == []


def test_iqp_angles():
    x = np.array([0.3, -0.7, 1.1])
    ops = K.build_feature_circuit(FeatureMapSpec("full", 3), x)
    rz = [op.angle for op in ops if op.kind == "RZ"]
    rzz = {op.targets: op.angle for op in ops if op.kind == "RZZ"}
    np.testing.assert_allclose(rz, x)
    assert rzz[(0, 2)] == pytest.approx(x[0] * x[2])


def test_pauli_x_zero_input_is_identity():
    s = K.feature_state(FeatureMapSpec("pauli_x", 2), [0.0, 0.0])
    np.testing.assert_allclose(s.amps, [1, 0, 0, 0], atol=1e-12)


def test_angle_scale():
    x, y = vec(3, 1), vec(3, 2)
    a = K.quantum_kernel_exact(FeatureMapSpec("full", 3, angle_scale=0.5), x, y)
    b = K.quantum_kernel_exact(FeatureMapSpec("full", 3), x / 2, y / 2)
    assert a == pytest.approx(b, abs=1e-12)


def test_length_mismatch():
    with pytest.raises(ValueError):
        K.build_feature_circuit(FeatureMapSpec("full", 3), [1.0, 2.0])
    with pytest.raises(ValueError):
        K.quantum_kernel_exact(FeatureMapSpec("full", 2), [1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        K.pauli_kernel_closed_form([1.0], [1.0, 2.0])


# ---- exact kernels -------------------------------------------------------

@pytest.mark.parametrize("kind", K.FEATURE_MAP_KINDS)
def test_self_overlap_is_one(kind):
    x = vec(4, 3)
    assert K.quantum_kernel_exact(FeatureMapSpec(kind, 4), x, x) == pytest.approx(1.0, abs=1e-12)


def test_pauli_x_orthogonal():
    assert K.quantum_kernel_exact(FeatureMapSpec("pauli_x", 1), [0.0], [np.pi]) == pytest.approx(0.0, abs=1e-15)


def test_full_two_qubit_against_expansion():
    def amps(x):
        out = []
        for q0 in (0, 1):
            for q1 in (0, 1):
                ph = -0.5 * (x[0] * (-1) ** q0 + x[1] * (-1) ** q1) - 0.5 * x[0] * x[1] * (-1) ** (q0 ^ q1)
                out.append(0.5 * np.exp(1j * ph))
        return np.array(out)

    for seed in range(5):
        x, y = vec(2, seed), vec(2, seed + 100)
        expected = abs(np.vdot(amps(x), amps(y))) ** 2
        assert K.quantum_kernel_exact(FeatureMapSpec("full", 2), x, y) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n", range(1, 7))
def test_pauli_equivalence(n):
    rng = np.random.default_rng(n)
    for _ in range(30):
        x, y = rng.uniform(-4, 4, n), rng.uniform(-4, 4, n)
        vals = [K.quantum_kernel_exact(FeatureMapSpec(k, n), x, y) for k in PAULI]
        closed = K.pauli_kernel_closed_form(x, y)
        assert abs(vals[0] - vals[1]) < 1e-12 and abs(vals[1] - vals[2]) < 1e-12
        assert abs(vals[0] - closed) < 1e-10


def test_closed_form_values():
    assert K.pauli_kernel_closed_form([0.3, 0.2], [0.3, 0.2]) == 1.0
    assert K.pauli_kernel_closed_form([0.0], [np.pi]) == pytest.approx(0.0, abs=1e-30)
    assert K.pauli_kernel_closed_form([0.0], [np.pi / 2]) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(K.FEATURE_MAP_KINDS), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_kernel_range(kind, n, seed):
    rng = np.random.default_rng(seed)
    v = K.quantum_kernel_exact(FeatureMapSpec(kind, n), rng.normal(size=n) * 3, rng.normal(size=n) * 3)
    assert 0.0 <= v <= 1.0


# ---- noisy kernels -------------------------------------------------------

def test_noisy_closed_form_values():
    x = [0.4, -0.2]
    assert K.noisy_pauli_closed_form(x, [1.0, 2.0], 0.0) == pytest.approx(K.pauli_kernel_closed_form(x, [1.0, 2.0]))
    assert K.noisy_pauli_closed_form([0.3], [2.0], 0.75) == pytest.approx(0.5, abs=1e-15)
    p = 0.05
    expected = ((1 - 4 * p / 3) ** 2 + (2 - 4 * p / 3) * (2 * p / 3)) ** 2
    assert K.noisy_pauli_closed_form(x, x, p) == pytest.approx(expected, abs=1e-15)
    with pytest.raises(ValueError):
        K.noisy_pauli_closed_form(x, x, 1.5)


@pytest.mark.parametrize("kind", PAULI)
@pytest.mark.parametrize("p", [0.01, 0.1, 0.3])
def test_noisy_pauli_matches_closed_form(kind, p):
    rng = np.random.default_rng(int(p * 100))
    for n in (1, 2, 3):
        x, y = rng.uniform(-3, 3, n), rng.uniform(-3, 3, n)
        v = K.noisy_quantum_kernel(FeatureMapSpec(kind, n), x, y, p)
        assert v == pytest.approx(K.noisy_pauli_closed_form(x, y, p), abs=1e-10)


@pytest.mark.parametrize("kind", K.FEATURE_MAP_KINDS)
def test_noiseless_density_path_matches_exact(kind):
    x, y = vec(3, 7), vec(3, 8)
    fmap = FeatureMapSpec(kind, 3)
    assert K.noisy_quantum_kernel(fmap, x, y, 0.0) == pytest.approx(K.quantum_kernel_exact(fmap, x, y), abs=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_full_depolarization_gives_uniform(n):
    x = vec(n, 9)
    for kind in PAULI:
        assert K.noisy_quantum_kernel(FeatureMapSpec(kind, n), x, x, 0.75) == pytest.approx(0.5**n, abs=1e-10)


def test_noise_monotone_at_coincident_inputs():
    x = vec(2, 10)
    ps = np.linspace(0, 0.75, 16)
    vals = [K.noisy_quantum_kernel(FeatureMapSpec("pauli_y", 2), x, x, p) for p in ps]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# ---- shots ---------------------------------------------------------------

def test_shots_coincident_and_orthogonal():
    rng = np.random.default_rng(0)
    fmap = FeatureMapSpec("pauli_x", 2)
    assert K.estimate_kernel_shots(fmap, [0.3, 0.1], [0.3, 0.1], 17, rng) == 1.0
    assert K.estimate_kernel_shots(fmap, [0.0, 0.0], [np.pi, 0.0], 17, rng) == 0.0
    with pytest.raises(ValueError):
        K.estimate_kernel_shots(fmap, [0.0, 0.0], [0.0, 0.0], 0, rng)


def test_shots_concentrate_on_exact_value():
    fmap = FeatureMapSpec("pauli_x", 1)
    x, y = [0.0], [np.pi / 2]  # exact value 0.5
    Z, R = 10_000, 100
    rng = np.random.default_rng(1)
    est = np.array([K.estimate_kernel_shots(fmap, x, y, Z, rng) for _ in range(R)])
    k = 0.5
    assert abs(est.mean() - k) <= 3 * np.sqrt(k * (1 - k) / Z) / np.sqrt(R)
    assert est.std(ddof=1) <= 1.1 * np.sqrt(k * (1 - k) / Z) * 1.2


# ---- classical kernels ---------------------------------------------------

def test_classical_values():
    assert K.classical_kernel("LK", [1, 2], [3, 4]) == 11
    assert K.classical_kernel("PK", [1, 1], [1, 1], K.ClassicalParams(gamma=1.0, degree=2)) == 4
    assert K.classical_kernel("GK", [1, 2], [1, 2]) == 1.0
    assert K.classical_kernel("SK", [1, 0], [1, 0], K.ClassicalParams(gamma=0.5, coef0=-1.0)) == pytest.approx(
        np.tanh(-0.5)
    )
    # default GK scale is 1/N
    assert K.classical_kernel("GK", [0, 0], [1, 1]) == pytest.approx(np.exp(-1.0))


def test_classical_constraints():
    with pytest.raises(ValueError):
        K.classical_kernel("GK", [1], [1], K.ClassicalParams(gamma=-1))
    with pytest.raises(ValueError):
        K.classical_kernel("PK", [1], [1], K.ClassicalParams(degree=0))
    with pytest.raises(ValueError):
        K.classical_kernel("SK", [1], [1], K.ClassicalParams(coef0=0.5))
    with pytest.raises(ValueError):
        KernelSpec("GK", noise=0.1)
    with pytest.raises(ValueError):
        KernelSpec("nope")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gaussian_range(seed):
    rng = np.random.default_rng(seed)
    g = K.classical_gram("GK", rng.normal(size=(5, 3)), rng.normal(size=(4, 3)))
    assert np.all(g > 0) and np.all(g <= 1)


# ---- Gram matrices -------------------------------------------------------

def test_gram_single_point():
    km = K.gram_matrix([[0.3, 0.5]], spec=KernelSpec("FQK"))
    np.testing.assert_allclose(km.values, [[1.0]], atol=1e-12)


@pytest.mark.parametrize("name", list(K.QUANTUM_KERNELS))
def test_gram_invariants(name):
    X = np.random.default_rng(11).normal(size=(12, 3))
    km = K.gram_matrix(X, spec=KernelSpec(name))
    rep = km.invariant_report()
    assert rep["symmetry_error"] < 1e-10
    assert rep["diagonal_error"] < 1e-10
    assert rep["min_eigenvalue"] >= -1e-8 * 12


def test_gram_matches_pointwise():
    rng = np.random.default_rng(12)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    km = K.gram_matrix(A, B, KernelSpec("CQK"))
    fmap = FeatureMapSpec("circular", 3)
    for i in range(4):
        for j in range(5):
            assert km.values[i, j] == pytest.approx(K.quantum_kernel_exact(fmap, A[i], B[j]), abs=1e-12)


@pytest.mark.parametrize("name", ["FQK", "LQK", "XQK"])
def test_noisy_gram_matches_literal_path(name):
    rng = np.random.default_rng(13)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(3, 3))
    spec = KernelSpec(name, noise=0.1)
    fmap = spec.feature_map(3)
    rect = K.gram_matrix(A, B, spec).values
    for i in range(4):
        for j in range(3):
            assert rect[i, j] == pytest.approx(K.noisy_quantum_kernel(fmap, A[i], B[j], 0.1), abs=1e-10)
    sq = K.gram_matrix(A, spec=spec).values
    for i in range(4):
        for j in range(4):
            assert sq[i, j] == pytest.approx(K.noisy_quantum_kernel(fmap, A[i], A[j], 0.1), abs=1e-10)


def test_noisy_gram_pauli_closed_form():
    X = np.random.default_rng(14).normal(size=(6, 2))
    km = K.gram_matrix(X, spec=KernelSpec("ZQK", noise=0.2))
    for i in range(6):
        for j in range(6):
            assert km.values[i, j] == pytest.approx(K.noisy_pauli_closed_form(X[i], X[j], 0.2), abs=1e-10)


def test_shot_gram_reproducible_and_worker_independent():
    X = np.random.default_rng(15).normal(size=(6, 2))
    spec = KernelSpec("FQK", shots=200, seed=5)
    a = K.gram_matrix(X, spec=spec, workers=1).values
    b = K.gram_matrix(X, spec=spec, workers=4).values
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, a.T)
    np.testing.assert_array_equal(np.diag(a), 1.0)
    exact = K.gram_matrix(X, spec=KernelSpec("FQK")).values
    assert np.abs(a - exact).mean() < 0.05


def test_shot_gram_entry_matches_single_estimate():
    X = np.random.default_rng(16).normal(size=(3, 2))
    spec = KernelSpec("LQK", shots=300, seed=9)
    km = K.gram_matrix(X, spec=spec).values
    fmap = spec.feature_map(2)
    v = K.estimate_kernel_shots(fmap, X[0], X[2], 300, np.random.default_rng([9, 0, 2]))
    assert km[0, 2] == v


def test_classical_gram_matches_pointwise():
    rng = np.random.default_rng(17)
    A = rng.normal(size=(5, 3))
    for name in K.CLASSICAL_KERNELS:
        km = K.gram_matrix(A, spec=KernelSpec(name))
        for i in range(5):
            for j in range(5):
                assert km.values[i, j] == pytest.approx(K.classical_kernel(name, A[i], A[j]), rel=1e-12, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        K.gram_matrix(np.zeros((2, 3)), np.zeros((2, 2)), KernelSpec("LK"))


# ---- serialization -------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    X = np.random.default_rng(18).normal(size=(4, 2))
    km = K.gram_matrix(X, spec=KernelSpec("XQK"), row_ids=["a", "b", "c", "d"])
    km.to_csv(tmp_path / "k.csv")
    back = KernelMatrix.from_csv(tmp_path / "k.csv", km.spec)
    np.testing.assert_array_equal(back.values, km.values)
    assert back.row_ids == ["a", "b", "c", "d"]
    assert (tmp_path / "k.csv").read_text().splitlines()[0] == "id,a,b,c,d"


def test_binary_cache_roundtrip(tmp_path):
    X = np.random.default_rng(19).normal(size=(3, 2))
    spec = KernelSpec("GK")
    values = K.gram_matrix(X, spec=spec).values
    key = K.cache_key(spec, X)
    K.save_cache(tmp_path / "k.bin", values, key)
    raw = (tmp_path / "k.bin").read_bytes()
    assert raw[:4] == b"QKM1"
    assert len(raw) == 4 + 32 + 16 + 8 * 9
    np.testing.assert_array_equal(K.load_cache(tmp_path / "k.bin", key), values)
    assert K.load_cache(tmp_path / "k.bin", K.cache_key(KernelSpec("LK"), X)) is None
    assert K.load_cache(tmp_path / "missing.bin") is None


def test_spec_roundtrip():
    spec = KernelSpec("CQK", noise=0.1, seed=3)
    assert KernelSpec.from_dict(spec.to_dict()) == spec
    assert spec.digest() != KernelSpec("CQK").digest()
