"""Dense state-vector and density-matrix simulator for small qubit registers.

Basis ordering: qubit 0 is the most significant bit, so the computational
basis index of ``|q_0 q_1 ... q_{N-1}>`` is ``q_0 * 2**(N-1) + ... + q_{N-1}``.
Reshaping an amplitude vector to ``(2,) * N`` therefore puts qubit ``k`` on
axis ``k``.

Gate matrices follow the exponential convention ``R_a(t) = exp(-i t sigma_a / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 12
GATE_KINDS = ("H", "RX", "RY", "RZ", "RZZ", "CNOT")
_ROTATIONS = ("RX", "RY", "RZ", "RZZ")

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

NEGATIVE_PROB_TOL = 1e-9


class QubitIndexError(IndexError):
    """A gate or channel addressed a qubit outside the register."""


class ChannelError(ValueError):
    """A Kraus set is not trace preserving or a noise probability is invalid."""


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rzz(theta: float) -> np.ndarray:
    """Diagonal two-qubit ZZ rotation, phase exp(-i theta/2) on even parity."""
    m, p = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    return np.diag([m, p, p, m])


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        arity = 2 if self.kind in ("RZZ", "CNOT") else 1
        if len(self.targets) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {self.targets}")
        if len(set(self.targets)) != arity:
            raise ValueError(f"repeated qubit in {self.targets}")
        if self.kind in _ROTATIONS and self.angle is None:
            raise ValueError(f"{self.kind} needs an angle")
        if self.kind not in _ROTATIONS and self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")

    def matrix(self) -> np.ndarray:
        if self.kind == "H":
            return HADAMARD
        if self.kind == "CNOT":
            return CNOT_MATRIX
        return {"RX": rx, "RY": ry, "RZ": rz, "RZZ": rzz}[self.kind](self.angle)

    def inverse(self) -> "GateOp":
        if self.angle is None:
            return self
        return GateOp(self.kind, self.targets, -self.angle)


def H(q: int) -> GateOp:
    return GateOp("H", (q,))


def RX(q: int, angle: float) -> GateOp:
    return GateOp("RX", (q,), float(angle))


def RY(q: int, angle: float) -> GateOp:
    return GateOp("RY", (q,), float(angle))


def RZ(q: int, angle: float) -> GateOp:
    return GateOp("RZ", (q,), float(angle))


def RZZ(q0: int, q1: int, angle: float) -> GateOp:
    return GateOp("RZZ", (q0, q1), float(angle))


def CNOT(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


def inverse_circuit(ops: Sequence[GateOp]) -> list[GateOp]:
    return [op.inverse() for op in reversed(ops)]


def _check_n_qubits(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n}")


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        _check_n_qubits(self.n_qubits)
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(f"expected {2**self.n_qubits} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def zeros(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, bits: Sequence[int]) -> "StateVector":
        n = len(bits)
        amps = np.zeros(2**n, dtype=complex)
        amps[basis_index(bits)] = 1.0
        return cls(n, amps)

    def norm(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amps, self.amps.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    n_qubits: int
    mat: np.ndarray

    def __post_init__(self):
        _check_n_qubits(self.n_qubits)
        mat = np.asarray(self.mat, dtype=complex)
        d = 2**self.n_qubits
        if mat.shape != (d, d):
            raise ValueError(f"expected {d}x{d} matrix, got shape {mat.shape}")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @classmethod
    def zeros(cls, n_qubits: int) -> "DensityMatrix":
        return StateVector.zeros(n_qubits).to_density()

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(n_qubits, np.eye(d, dtype=complex) / d)

    def trace(self) -> float:
        return float(np.trace(self.mat).real)

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.mat, self.mat).real)

    def is_valid(self, atol: float = 1e-10) -> bool:
        m = self.mat
        if not np.allclose(m, m.conj().T, atol=atol):
            return False
        if abs(np.trace(m).real - 1.0) > atol:
            return False
        return bool(np.linalg.eigvalsh(m).min() >= -1e-9)


def basis_index(bits: Sequence[int]) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def _check_targets(targets: Iterable[int], n: int) -> None:
    for t in targets:
        if not 0 <= t < n:
            raise QubitIndexError(f"qubit {t} out of range for {n}-qubit register")


def _apply_matrix(arr: np.ndarray, u: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Apply ``u`` to ``targets`` of ``arr`` (shape ``(2**n, ...)``) along axis 0."""
    k = len(targets)
    rest = arr.shape[1:]
    t = arr.reshape((2,) * n + rest)
    t = np.moveaxis(t, list(targets), list(range(k)))
    moved_shape = t.shape
    t = u @ t.reshape(2**k, -1)
    t = np.moveaxis(t.reshape(moved_shape), list(range(k)), list(targets))
    return t.reshape(arr.shape)


def _apply_ops(arr: np.ndarray, ops: Sequence[GateOp], n: int) -> np.ndarray:
    for op in ops:
        _check_targets(op.targets, n)
        if op.kind == "RZ" or op.kind == "RZZ":
            arr = _apply_diagonal(arr, op, n)
        else:
            arr = _apply_matrix(arr, op.matrix(), op.targets, n)
    return arr


def _apply_diagonal(arr: np.ndarray, op: GateOp, n: int) -> np.ndarray:
    # diagonal gates: broadcast a phase mask instead of a matmul
    rest = arr.shape[1:]
    t = arr.reshape((2,) * n + rest)
    shape = [1] * (n + len(rest))
    if op.kind == "RZ":
        (q,) = op.targets
        shape[q] = 2
        phase = np.diag(rz(op.angle)).reshape(shape)
    else:
        q0, q1 = op.targets
        d = np.diag(rzz(op.angle)).reshape(2, 2)
        if q0 > q1:
            d = d.T
        shape[q0] = 2
        shape[q1] = 2
        phase = d.reshape(shape)
    return (t * phase).reshape(arr.shape)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    return StateVector(state.n_qubits, _apply_ops(state.amps, [gate], state.n_qubits))


def apply_circuit(state: StateVector, ops: Sequence[GateOp]) -> StateVector:
    return StateVector(state.n_qubits, _apply_ops(state.amps, ops, state.n_qubits))


def apply_hadamard_layer(state: StateVector) -> StateVector:
    return apply_circuit(state, [H(q) for q in range(state.n_qubits)])


def circuit_unitary(ops: Sequence[GateOp], n_qubits: int) -> np.ndarray:
    """Full ``2**n x 2**n`` unitary of a gate sequence."""
    _check_n_qubits(n_qubits)
    return _apply_ops(np.eye(2**n_qubits, dtype=complex), ops, n_qubits)


def overlap_probability(a: StateVector, b: StateVector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit count mismatch: {a.n_qubits} vs {b.n_qubits}")
    p = abs(np.vdot(a.amps, b.amps)) ** 2
    return float(min(max(p, 0.0), 1.0))


def _conjugate(mat: np.ndarray, ops: Sequence[GateOp], n: int) -> np.ndarray:
    # U rho U^dagger: act on rows, then on rows of the conjugate transpose
    m = _apply_ops(mat, ops, n)
    return _apply_ops(m.conj().T, ops, n).conj().T


def evolve_density(dm: DensityMatrix, ops: Sequence[GateOp]) -> DensityMatrix:
    return DensityMatrix(dm.n_qubits, _conjugate(dm.mat, ops, dm.n_qubits))


def depolarizing_kraus(p: float) -> list[np.ndarray]:
    """Kraus operators of the single-qubit depolarizing channel with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"depolarizing probability must be in [0, 1], got {p}")
    return [
        np.sqrt(1.0 - p) * SIGMA_0,
        np.sqrt(p / 3.0) * SIGMA_X,
        np.sqrt(p / 3.0) * SIGMA_Y,
        np.sqrt(p / 3.0) * SIGMA_Z,
    ]


def _channel_on(mat: np.ndarray, kraus: Sequence[np.ndarray], qubit: int, n: int) -> np.ndarray:
    out = np.zeros_like(mat)
    for k in kraus:
        m = _apply_matrix(mat, k, (qubit,), n)
        out += _apply_matrix(m.conj().T, k, (qubit,), n).conj().T
    return out


def apply_channel(dm: DensityMatrix, kraus: Sequence[np.ndarray], qubit: int) -> DensityMatrix:
    _check_targets([qubit], dm.n_qubits)
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    total = sum(k.conj().T @ k for k in kraus)
    if not np.allclose(total, SIGMA_0, atol=1e-10):
        raise ChannelError("Kraus operators are not trace preserving")
    return DensityMatrix(dm.n_qubits, _channel_on(dm.mat, kraus, qubit, dm.n_qubits))


def depolarize_matrix(mat: np.ndarray, p: float, n: int) -> np.ndarray:
    """Depolarizing channel on every qubit of a raw ``2**n x 2**n`` array."""
    kraus = depolarizing_kraus(p)
    if p == 0.0:
        return mat
    for q in range(n):
        mat = _channel_on(mat, kraus, q, n)
    return mat


def apply_depolarizing_all(dm: DensityMatrix, p: float) -> DensityMatrix:
    return DensityMatrix(dm.n_qubits, depolarize_matrix(dm.mat, p, dm.n_qubits))


def _clamp_probability(p: float) -> float:
    if p < -NEGATIVE_PROB_TOL or p > 1.0 + NEGATIVE_PROB_TOL:
        raise ValueError(f"probability {p} outside [0, 1] beyond rounding")
    return float(min(max(p, 0.0), 1.0))


def prob_all_zeros(dm: DensityMatrix) -> float:
    return _clamp_probability(float(dm.mat[0, 0].real))


def basis_probabilities(state: StateVector | DensityMatrix) -> np.ndarray:
    if isinstance(state, StateVector):
        p = state.probabilities()
    else:
        p = np.diagonal(state.mat).real.copy()
    if p.min() < -NEGATIVE_PROB_TOL:
        raise ValueError(f"negative basis probability {p.min()}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def index_to_bits(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> (n - 1 - k)) & 1 for k in range(n))


def sample_indices(state: StateVector | DensityMatrix, rng: np.random.Generator, shots: int) -> np.ndarray:
    """Draw ``shots`` computational-basis outcomes as integer basis indices."""
    p = basis_probabilities(state)
    return rng.choice(p.size, size=shots, p=p)


def sample_bitstrings(state: StateVector | DensityMatrix, rng: np.random.Generator, shots: int) -> np.ndarray:
    """Draw ``shots`` measurement records; returns an int array of shape ``(shots, N)``."""
    idx = sample_indices(state, rng, shots)
    n = state.n_qubits
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)


def sample_bitstring(state: StateVector | DensityMatrix, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(b) for b in sample_bitstrings(state, rng, 1)[0])
