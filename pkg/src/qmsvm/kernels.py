"""Quantum feature maps, classical baseline kernels and Gram-matrix construction.

Six quantum kernels are available, named by their feature map:

========  =====================================================
FQK       IQP map, ZZ rotations on every qubit pair
LQK       IQP map, ZZ rotations on neighbouring pairs (i, i+1)
CQK       IQP map, neighbouring pairs plus the wrap-around pair
XQK/YQK   one RX / RY rotation per qubit
ZQK       Hadamard followed by one RZ rotation per qubit
========  =====================================================

and four classical ones (LK linear, PK polynomial, SK sigmoid, GK Gaussian).

Quantum kernel values are squared state overlaps. They can be computed exactly
from state vectors, estimated from ``Z`` measurement shots, or evaluated under
a depolarizing channel applied to every qubit after ``S(x_i)`` and again after
``S(x_j)^dagger``.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qsim
from .qsim import DensityMatrix, GateOp, StateVector

FEATURE_MAP_KINDS = ("full", "linear", "circular", "pauli_x", "pauli_y", "pauli_z")
QUANTUM_KERNELS = {
    "FQK": "full",
    "LQK": "linear",
    "CQK": "circular",
    "XQK": "pauli_x",
    "YQK": "pauli_y",
    "ZQK": "pauli_z",
}
CLASSICAL_KERNELS = ("LK", "PK", "SK", "GK")
KERNEL_NAMES = tuple(QUANTUM_KERNELS) + CLASSICAL_KERNELS

CACHE_MAGIC = b"QKM1"
NOISY_RANGE_TOL = 1e-8


class KernelSpecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# feature maps


@dataclass(frozen=True)
class FeatureMapSpec:
    kind: str
    n_features: int
    angle_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in FEATURE_MAP_KINDS:
            raise KernelSpecError(f"unknown feature map {self.kind!r}")
        if not 1 <= self.n_features <= qsim.MAX_QUBITS:
            raise KernelSpecError(f"n_features must be in 1..{qsim.MAX_QUBITS}, got {self.n_features}")

    @property
    def n_qubits(self) -> int:
        return self.n_features

    def pairs(self) -> list[tuple[int, int]]:
        """Qubit pairs that receive a ZZ rotation."""
        n = self.n_features
        if self.kind == "full":
            return [(i, j) for i in range(n) for j in range(i + 1, n)]
        if self.kind == "linear":
            return [(i, i + 1) for i in range(n - 1)]
        if self.kind == "circular":
            if n == 1:
                return []
            if n == 2:
                # the wrap-around pair coincides with (0, 1); keep both so the
                # pair count stays N as for larger registers
                return [(0, 1), (1, 0)]
            return [(i, (i + 1) % n) for i in range(n)]
        return []


def build_feature_circuit(fmap: FeatureMapSpec, x) -> list[GateOp]:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != fmap.n_features:
        raise KernelSpecError(f"expected {fmap.n_features} features, got {x.shape[0]}")
    a = fmap.angle_scale * x
    n = fmap.n_features
    if fmap.kind == "pauli_x":
        return [qsim.RX(q, a[q]) for q in range(n)]
    if fmap.kind == "pauli_y":
        return [qsim.RY(q, a[q]) for q in range(n)]
    if fmap.kind == "pauli_z":
        ops = []
        for q in range(n):
            ops += [qsim.H(q), qsim.RZ(q, a[q])]
        return ops
    ops = [qsim.H(q) for q in range(n)]
    ops += [qsim.RZ(q, a[q]) for q in range(n)]
    ops += [qsim.RZZ(i, j, fmap.angle_scale**2 * x[i] * x[j]) for i, j in fmap.pairs()]
    return ops


def feature_state(fmap: FeatureMapSpec, x) -> StateVector:
    return qsim.apply_circuit(StateVector.zeros(fmap.n_qubits), build_feature_circuit(fmap, x))


def feature_states(fmap: FeatureMapSpec, X) -> np.ndarray:
    """Embedded states of every row of ``X`` as columns of a ``2**N x m`` array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((2**fmap.n_qubits, X.shape[0]), dtype=complex)
    for i, x in enumerate(X):
        out[:, i] = feature_state(fmap, x).amps
    return out


# ---------------------------------------------------------------------------
# single kernel values


def _pair(x_i, x_j):
    x_i = np.asarray(x_i, dtype=float).ravel()
    x_j = np.asarray(x_j, dtype=float).ravel()
    if x_i.shape != x_j.shape:
        raise KernelSpecError(f"length mismatch: {x_i.shape[0]} vs {x_j.shape[0]}")
    return x_i, x_j


def quantum_kernel_exact(fmap: FeatureMapSpec, x_i, x_j) -> float:
    x_i, x_j = _pair(x_i, x_j)
    return qsim.overlap_probability(feature_state(fmap, x_i), feature_state(fmap, x_j))


def pauli_kernel_closed_form(x_i, x_j) -> float:
    """Product of cos^2 of half the coordinate differences."""
    x_i, x_j = _pair(x_i, x_j)
    return float(np.prod(np.cos((x_i - x_j) / 2.0) ** 2))


def _check_noise(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise KernelSpecError(f"noise probability must be in [0, 1], got {p}")


def noisy_pauli_closed_form(x_i, x_j, p: float) -> float:
    x_i, x_j = _pair(x_i, x_j)
    _check_noise(p)
    shrink = (1.0 - 4.0 * p / 3.0) ** 2
    floor = (2.0 - 4.0 * p / 3.0) * (2.0 * p / 3.0)
    return float(np.prod(shrink * np.cos((x_i - x_j) / 2.0) ** 2 + floor))


def _clamp_noisy(v: float) -> float:
    if v < -NOISY_RANGE_TOL or v > 1.0 + NOISY_RANGE_TOL:
        raise FloatingPointError(f"noisy kernel value {v} outside [0, 1]")
    return float(min(max(v, 0.0), 1.0))


def noisy_final_density(fmap: FeatureMapSpec, x_i, x_j, p: float) -> DensityMatrix:
    """Density matrix after S(x_i), noise, S(x_j)^dagger, noise, starting from |0..0>."""
    x_i, x_j = _pair(x_i, x_j)
    _check_noise(p)
    rho = DensityMatrix.zeros(fmap.n_qubits)
    rho = qsim.evolve_density(rho, build_feature_circuit(fmap, x_i))
    rho = qsim.apply_depolarizing_all(rho, p)
    rho = qsim.evolve_density(rho, qsim.inverse_circuit(build_feature_circuit(fmap, x_j)))
    return qsim.apply_depolarizing_all(rho, p)


def noisy_quantum_kernel(fmap: FeatureMapSpec, x_i, x_j, p: float) -> float:
    rho = noisy_final_density(fmap, x_i, x_j, p)
    return _clamp_noisy(float(rho.mat[0, 0].real))


def _count_zeros(state, shots: int, rng: np.random.Generator) -> float:
    idx = qsim.sample_indices(state, rng, shots)
    return float(np.count_nonzero(idx == 0)) / shots


def _check_shots(shots) -> int:
    if shots is None or int(shots) < 1:
        raise KernelSpecError(f"shot count must be a positive integer, got {shots}")
    return int(shots)


def estimate_kernel_shots(fmap: FeatureMapSpec, x_i, x_j, shots: int, rng: np.random.Generator) -> float:
    """Frequency of the all-zeros outcome of ``S(x_j)^dagger S(x_i)|0..0>`` over ``shots`` samples."""
    shots = _check_shots(shots)
    x_i, x_j = _pair(x_i, x_j)
    ops = build_feature_circuit(fmap, x_i) + qsim.inverse_circuit(build_feature_circuit(fmap, x_j))
    final = qsim.apply_circuit(StateVector.zeros(fmap.n_qubits), ops)
    return _count_zeros(final, shots, rng)


def estimate_noisy_kernel_shots(
    fmap: FeatureMapSpec, x_i, x_j, p: float, shots: int, rng: np.random.Generator
) -> float:
    shots = _check_shots(shots)
    return _count_zeros(noisy_final_density(fmap, x_i, x_j, p), shots, rng)


# ---------------------------------------------------------------------------
# classical kernels


@dataclass(frozen=True)
class ClassicalParams:
    gamma: float | None = None  # scale; None means 1/N for GK and SK, 1 for PK
    degree: int = 3
    coef0: float = -1.0

    def resolved_gamma(self, kind: str, n_features: int) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return 1.0 if kind == "PK" else 1.0 / n_features

    def validate(self, kind: str) -> None:
        if self.gamma is not None and not self.gamma > 0:
            raise KernelSpecError(f"kernel scale must be positive, got {self.gamma}")
        if kind == "PK" and (int(self.degree) != self.degree or self.degree < 1):
            raise KernelSpecError(f"polynomial degree must be an integer >= 1, got {self.degree}")
        if kind == "SK" and not self.coef0 < 0:
            raise KernelSpecError(f"sigmoid offset must be negative, got {self.coef0}")


def classical_gram(kind: str, A, B, params: ClassicalParams = ClassicalParams()) -> np.ndarray:
    if kind not in CLASSICAL_KERNELS:
        raise KernelSpecError(f"unknown classical kernel {kind!r}")
    params.validate(kind)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise KernelSpecError(f"feature dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    g = params.resolved_gamma(kind, A.shape[1])
    dots = A @ B.T
    if kind == "LK":
        return dots
    if kind == "PK":
        return (g * dots) ** int(params.degree)
    if kind == "SK":
        return np.tanh(g * dots + params.coef0)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * dots
    return np.exp(-g * np.maximum(sq, 0.0))


def classical_kernel(kind: str, x_i, x_j, params: ClassicalParams = ClassicalParams()) -> float:
    x_i, x_j = _pair(x_i, x_j)
    return float(classical_gram(kind, x_i[None, :], x_j[None, :], params)[0, 0])


# ---------------------------------------------------------------------------
# kernel specs and matrices


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to evaluate and how.

    ``shots=None`` means exact evaluation. ``noise`` is the per-qubit
    depolarizing probability and only applies to quantum kernels.
    """

    name: str
    gamma: float | None = None
    degree: int = 3
    coef0: float = -1.0
    noise: float = 0.0
    shots: int | None = None
    seed: int = 0
    angle_scale: float = 1.0

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise KernelSpecError(f"unknown kernel {self.name!r}; choose from {', '.join(KERNEL_NAMES)}")
        _check_noise(self.noise)
        if self.noise > 0 and not self.is_quantum:
            raise KernelSpecError("noise only applies to quantum kernels")
        if self.shots is not None:
            _check_shots(self.shots)
            if not self.is_quantum:
                raise KernelSpecError("shot sampling only applies to quantum kernels")
        if not self.is_quantum:
            self.classical_params.validate(self.name)

    @property
    def is_quantum(self) -> bool:
        return self.name in QUANTUM_KERNELS

    @property
    def classical_params(self) -> ClassicalParams:
        return ClassicalParams(self.gamma, self.degree, self.coef0)

    def feature_map(self, n_features: int) -> FeatureMapSpec:
        return FeatureMapSpec(QUANTUM_KERNELS[self.name], n_features, self.angle_scale)

    def label(self) -> str:
        s = self.name
        if self.noise:
            s += f"[p={self.noise:g}]"
        if self.shots:
            s += f"[Z={self.shots}]"
        return s

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


@dataclass
class KernelMatrix:
    values: np.ndarray
    spec: KernelSpec
    row_ids: list = field(default_factory=list)
    col_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        r, c = self.values.shape
        if not self.row_ids:
            self.row_ids = list(range(r))
        if not self.col_ids:
            self.col_ids = list(range(c))

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_square(self) -> bool:
        return self.values.shape[0] == self.values.shape[1]

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.values, "fro"))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.values + self.values.T) / 2).min())

    def invariant_report(self) -> dict:
        """Symmetry error, diagonal error and smallest eigenvalue of a square matrix."""
        if not self.is_square:
            raise ValueError("invariants are defined for square matrices only")
        v = self.values
        return {
            "symmetry_error": float(np.abs(v - v.T).max()) if v.size else 0.0,
            "diagonal_error": float(np.abs(np.diag(v) - 1.0).max()) if v.size else 0.0,
            "min_eigenvalue": self.min_eigenvalue() if v.size else 0.0,
        }

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        buf.write("id," + ",".join(str(c) for c in self.col_ids) + "\n")
        for rid, row in zip(self.row_ids, self.values):
            buf.write(str(rid) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path, spec: KernelSpec) -> "KernelMatrix":
        lines = Path(path).read_text().splitlines()
        cols = lines[0].split(",")[1:]
        rows, vals = [], []
        for line in lines[1:]:
            parts = line.split(",")
            rows.append(parts[0])
            vals.append([float(v) for v in parts[1:]])
        return cls(np.array(vals, dtype=float).reshape(len(rows), len(cols)), spec, rows, cols)


def data_digest(*arrays) -> bytes:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.digest()


def cache_key(spec: KernelSpec, *arrays) -> bytes:
    return hashlib.sha256(spec.digest() + data_digest(*arrays)).digest()


def save_cache(path, values: np.ndarray, key: bytes) -> None:
    """Binary cache: magic, 32-byte key, rows and cols as uint64, row-major little-endian float64."""
    values = np.ascontiguousarray(values, dtype="<f8")
    r, c = values.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC + key + struct.pack("<QQ", r, c))
        fh.write(values.tobytes())


def load_cache(path, key: bytes | None = None) -> np.ndarray | None:
    """Return the cached matrix, or None if the file is missing or the key differs."""
    path = Path(path)
    if not path.exists():
        return None
    raw = path.read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise ValueError(f"{path} is not a kernel cache file")
    stored = raw[4:36]
    if key is not None and stored != key:
        return None
    r, c = struct.unpack("<QQ", raw[36:52])
    return np.frombuffer(raw[52:], dtype="<f8", count=r * c).reshape(r, c).copy()


# ---------------------------------------------------------------------------
# Gram matrices


def _map_rows(fn, indices: Sequence[int], workers: int) -> list:
    if workers <= 1 or len(indices) < 2:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, indices))


def _mirror_upper(v: np.ndarray) -> np.ndarray:
    upper = np.triu(v)
    return upper + np.triu(v, 1).T


def _exact_gram(fmap: FeatureMapSpec, A, B, square: bool) -> np.ndarray:
    sa = feature_states(fmap, A)
    sb = sa if square else feature_states(fmap, B)
    k = np.abs(sa.conj().T @ sb) ** 2
    k = np.clip(k, 0.0, 1.0)
    return _mirror_upper(k) if square else k


def _noise_operators(fmap: FeatureMapSpec, X, p: float, workers: int):
    """Per-point operators whose Hilbert-Schmidt products give the noisy kernel.

    With U = S(x) and N the all-qubit depolarizing channel (self-adjoint under
    the trace inner product), the noisy kernel equals Tr[A_j B_i] where
    A_j = U_j N(|0><0|) U_j^dagger and B_i = N(U_i |0><0| U_i^dagger).
    """
    n = fmap.n_qubits
    d = 2**n
    rho0 = qsim.depolarize_matrix(DensityMatrix.zeros(n).mat, p, n)

    def one(i):
        ops = build_feature_circuit(fmap, X[i])
        psi = qsim.apply_circuit(StateVector.zeros(n), ops).amps
        b = qsim.depolarize_matrix(np.outer(psi, psi.conj()), p, n)
        a = qsim._conjugate(rho0, ops, n)
        return a.reshape(d * d), b.reshape(d * d)

    pairs = _map_rows(one, list(range(len(X))), workers)
    A = np.array([p_[0] for p_ in pairs])
    B = np.array([p_[1] for p_ in pairs])
    return A, B


def _noisy_gram(fmap: FeatureMapSpec, Xr, Xc, p: float, square: bool, workers: int) -> np.ndarray:
    Ar, Br = _noise_operators(fmap, Xr, p, workers)
    if square:
        Ac, Bc = Ar, Br
    else:
        Ac, Bc = _noise_operators(fmap, Xc, p, workers)
    # Tr[A_j B_i] = sum(conj(A_j) * B_i) because A_j is Hermitian
    k = np.real(Br @ Ac.conj().T)
    if np.any(k < -NOISY_RANGE_TOL) or np.any(k > 1 + NOISY_RANGE_TOL):
        raise FloatingPointError("noisy kernel value outside [0, 1]")
    k = np.clip(k, 0.0, 1.0)
    return _mirror_upper(k) if square else k


def _shot_gram(spec: KernelSpec, fmap: FeatureMapSpec, Xr, Xc, square: bool, workers: int) -> np.ndarray:
    m_r, m_c = len(Xr), len(Xc)
    n = fmap.n_qubits
    states_r = feature_states(fmap, Xr) if spec.noise == 0 else None
    inv_c = [qsim.inverse_circuit(build_feature_circuit(fmap, x)) for x in Xc]

    def row(i):
        out = np.zeros(m_c)
        start = i if square else 0
        for j in range(start, m_c):
            rng = np.random.default_rng([spec.seed, i, j])
            if spec.noise == 0:
                final = StateVector(n, qsim._apply_ops(states_r[:, i], inv_c[j], n))
                out[j] = _count_zeros(final, spec.shots, rng)
            else:
                out[j] = _count_zeros(noisy_final_density(fmap, Xr[i], Xc[j], spec.noise), spec.shots, rng)
        return out

    k = np.array(_map_rows(row, list(range(m_r)), workers)).reshape(m_r, m_c)
    return _mirror_upper(k) if square else k


def gram_matrix(rows, cols=None, spec: KernelSpec = KernelSpec("XQK"), workers: int = 1,
                row_ids=None, col_ids=None) -> KernelMatrix:
    """Kernel values between every row of ``rows`` and every row of ``cols``.

    When ``cols`` is None the square matrix of ``rows`` against itself is
    built from its upper triangle and mirrored.
    """
    Xr = np.atleast_2d(np.asarray(rows, dtype=float))
    square = cols is None
    Xc = Xr if square else np.atleast_2d(np.asarray(cols, dtype=float))
    if Xr.shape[1] != Xc.shape[1]:
        raise KernelSpecError(f"feature dimension mismatch: {Xr.shape[1]} vs {Xc.shape[1]}")
    if not spec.is_quantum:
        values = classical_gram(spec.name, Xr, Xc, spec.classical_params)
        if square:
            values = _mirror_upper(values)
    else:
        fmap = spec.feature_map(Xr.shape[1])
        if spec.shots is not None:
            values = _shot_gram(spec, fmap, Xr, Xc, square, workers)
        elif spec.noise > 0:
            values = _noisy_gram(fmap, Xr, Xc, spec.noise, square, workers)
        else:
            values = _exact_gram(fmap, Xr, Xc, square)
    return KernelMatrix(values, spec, list(row_ids or []), list(col_ids or (row_ids if square else []) or []))
