"""Multiclass support vector machines on precomputed kernel matrices.

Two strategies are provided:

* one-vs-all: ``l`` binary soft-margin SVMs trained by sequential minimal
  optimization (SMO) with maximal-violating-pair working-set selection;
* Crammer-Singer: a single joint dual over the ``m x l`` multipliers
  ``alpha[i, s]`` with ``alpha[i, y_i] = 0``, box constraints ``0 <= alpha <= C``
  and one balance constraint per class.

Labels are integers ``1..l`` throughout.

For the joint dual it is convenient to define the signed coefficients
``beta[i, s] = [y_i == s] * A_i - alpha[i, s]`` with ``A_i = sum_s alpha[i, s]``.
The balance constraints say every column of ``beta`` sums to zero, the dual
objective is ``2 * sum(alpha) - 0.5 * sum_s beta[:, s] @ K @ beta[:, s]`` and
the decision values are ``f_s(x) = sum_i beta[i, s] k(x_i, x) + b_s``.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

SUPPORT_THRESHOLD = 1e-8
MODEL_FORMAT = "qmsvm-model"
MODEL_VERSION = 1


class DegenerateProblemWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass


class MonotonicityError(FloatingPointError):
    pass


def _check_square(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"kernel matrix must be square, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise FloatingPointError("kernel matrix contains non-finite values")
    if K.size and np.abs(K - K.T).max() > 1e-8 * max(1.0, np.abs(K).max()):
        raise ValueError("kernel matrix must be symmetric")
    return K


def _check_C(C: float) -> float:
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    return float(C)


# ---------------------------------------------------------------------------
# binary SMO


@dataclass
class BinaryModel:
    alphas: np.ndarray
    bias: float
    C: float
    y: np.ndarray  # training labels in {-1, +1}
    iterations: int = 0
    converged: bool = True
    constant: float | None = None  # set for the degenerate single-class model

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > SUPPORT_THRESHOLD)

    @property
    def coef(self) -> np.ndarray:
        return self.alphas * self.y

    def decision(self, k_rows) -> np.ndarray:
        """Decision values for kernel rows of shape ``(n, m)`` (or a single row)."""
        k_rows = np.asarray(k_rows, dtype=float)
        if self.constant is not None:
            return np.full(k_rows.shape[:-1], self.constant)
        if k_rows.shape[-1] != self.alphas.shape[0]:
            raise ValueError(f"kernel row length {k_rows.shape[-1]} != training size {self.alphas.shape[0]}")
        return k_rows @ self.coef + self.bias


def binary_dual_objective(alphas, K, y) -> float:
    """``sum(alpha) - 0.5 * (alpha*y) @ K @ (alpha*y)``."""
    v = np.asarray(alphas) * np.asarray(y)
    return float(np.sum(alphas) - 0.5 * v @ np.asarray(K) @ v)


MIN_SMO_ITERATIONS = 10_000_000
_SMO_CONVERGED, _SMO_MAX_ITER, _SMO_STALLED, _SMO_DECREASED = 0, 1, 2, 3


@njit(cache=True)
def _smo_loop(K, y, C, tol, max_iter):
    """SMO iterations; returns (alpha, gradient, iterations, status)."""
    m = K.shape[0]
    alpha = np.zeros(m)
    grad = -np.ones(m)  # gradient of 0.5 a'Qa - e'a, with Q = yy' * K
    eps = 1e-12 * C
    dual = 0.0
    it = 0
    while it < max_iter:
        it += 1
        # i: maximal violator in the "up" set; g_min: smallest score in the "low" set
        i = -1
        g_max = -np.inf
        g_min = np.inf
        for k in range(m):
            sc = -y[k] * grad[k]
            if (y[k] > 0 and alpha[k] < C - eps) or (y[k] < 0 and alpha[k] > eps):
                if sc > g_max:
                    g_max = sc
                    i = k
            if (y[k] > 0 and alpha[k] > eps) or (y[k] < 0 and alpha[k] < C - eps):
                if sc < g_min:
                    g_min = sc
        if g_max - g_min < tol:
            return alpha, grad, it, _SMO_CONVERGED
        # j: second-order choice among low-set members that violate with i
        j = -1
        best = -np.inf
        kii = K[i, i]
        for k in range(m):
            if (y[k] > 0 and alpha[k] > eps) or (y[k] < 0 and alpha[k] < C - eps):
                b = g_max + y[k] * grad[k]
                if b > 0:
                    curv = kii + K[k, k] - 2.0 * K[i, k]
                    if curv <= 1e-12:
                        curv = 1e-12
                    gain = b * b / curv
                    if gain > best:
                        best = gain
                        j = k
        if j < 0:
            return alpha, grad, it, _SMO_STALLED
        curv = kii + K[j, j] - 2.0 * K[i, j]
        if curv <= 1e-12:
            curv = 1e-12
        t = (g_max + y[j] * grad[j]) / curv
        t_i = C - alpha[i] if y[i] > 0 else alpha[i]
        t_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(t, t_i, t_j)
        if t <= 0:
            return alpha, grad, it, _SMO_STALLED
        alpha[i] += t * y[i]
        alpha[j] -= t * y[j]
        for k in (i, j):
            if alpha[k] < eps:
                alpha[k] = 0.0
            elif alpha[k] > C - eps:
                alpha[k] = C
        total = 0.0
        ag = 0.0
        for k in range(m):
            grad[k] += t * y[k] * (K[k, i] - K[k, j])
            total += alpha[k]
            ag += alpha[k] * grad[k]
        new_dual = 0.5 * (total - ag)
        if new_dual < dual - 1e-10 * max(1.0, abs(dual)):
            return alpha, grad, it, _SMO_DECREASED
        dual = new_dual
    return alpha, grad, it, _SMO_MAX_ITER


def smo_train_binary(K, y, C: float = 1.0, tol: float = 1e-3, max_passes: int = 1000) -> BinaryModel:
    """Solve the binary soft-margin dual by SMO.

    Each step picks the maximal violating pair (first-order choice of ``i``,
    second-order choice of ``j``) and takes the exact clipped step along the
    direction that keeps ``sum(y * alpha)`` fixed. The dual objective is checked
    to be non-decreasing at every step.
    """
    K = _check_square(K)
    C = _check_C(C)
    y = np.asarray(y, dtype=float).ravel()
    m = K.shape[0]
    if y.shape[0] != m:
        raise ValueError(f"{y.shape[0]} labels for a {m}x{m} kernel")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    if np.all(y == y[0]):
        warnings.warn("single-class binary subproblem; returning a constant classifier", DegenerateProblemWarning)
        return BinaryModel(np.zeros(m), float(y[0]), C, y, 0, True, constant=float(y[0]))

    # a fixed floor keeps small but ill-conditioned problems from stopping early
    max_iter = max(MIN_SMO_ITERATIONS, max(1, int(max_passes)) * m)
    alpha, grad, it, status = _smo_loop(np.ascontiguousarray(K), y, C, float(tol), max_iter)
    if status == _SMO_DECREASED:
        raise MonotonicityError(f"dual objective decreased at SMO iteration {it}")
    converged = status == _SMO_CONVERGED
    if not converged:
        warnings.warn(f"SMO stopped after {it} iterations without meeting tol={tol}", ConvergenceWarning)

    score = -y * grad
    free = (alpha > SUPPORT_THRESHOLD) & (alpha < C - SUPPORT_THRESHOLD)
    if free.any():
        bias = float(score[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = score[up].max() if up.any() else 0.0
        lo = score[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)
    return BinaryModel(alpha, bias, C, y, it, converged)


def kkt_violation(model: BinaryModel, K) -> float:
    """Largest violation of the soft-margin optimality conditions."""
    margins = model.y * model.decision(np.asarray(K))
    a, C = model.alphas, model.C
    v = np.zeros_like(margins)
    at_zero = a <= SUPPORT_THRESHOLD
    at_c = a >= C - SUPPORT_THRESHOLD
    free = ~at_zero & ~at_c
    v[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    v[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    v[free] = np.abs(margins[free] - 1.0)
    return float(v.max()) if v.size else 0.0


# ---------------------------------------------------------------------------
# Crammer-Singer joint dual


@dataclass
class JointModel:
    alphas: np.ndarray  # m x l
    biases: np.ndarray  # l
    C: float
    labels: np.ndarray  # 1..l
    iterations: int = 0
    converged: bool = True

    @property
    def beta(self) -> np.ndarray:
        return joint_beta(self.alphas, self.labels)

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas.max(axis=1) > SUPPORT_THRESHOLD)

    def decision(self, k_rows) -> np.ndarray:
        k_rows = np.asarray(k_rows, dtype=float)
        if k_rows.shape[-1] != self.alphas.shape[0]:
            raise ValueError(f"kernel row length {k_rows.shape[-1]} != training size {self.alphas.shape[0]}")
        return k_rows @ self.beta + self.biases


def joint_beta(alphas, labels) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    labels = np.asarray(labels)
    m, l = alphas.shape
    beta = -alphas.copy()
    beta[np.arange(m), labels - 1] += alphas.sum(axis=1)
    return beta


def joint_constraint_residual(alphas, labels, C: float | None = None) -> float:
    """Largest violation among the fixed, box and per-class balance constraints."""
    alphas = np.asarray(alphas, dtype=float)
    labels = np.asarray(labels)
    m = alphas.shape[0]
    r = np.abs(joint_beta(alphas, labels).sum(axis=0)).max()
    r = max(r, np.abs(alphas[np.arange(m), labels - 1]).max(), -min(0.0, alphas.min()))
    if C is not None:
        r = max(r, alphas.max() - C)
    return float(r)


def _check_joint_feasible(alphas, labels, C=None, tol=1e-6):
    r = joint_constraint_residual(alphas, labels, C)
    if r > tol:
        raise ValueError(f"multipliers are infeasible (residual {r:.3g})")


def crammer_singer_objective(alphas, K, labels, check: bool = True) -> float:
    """Simplified joint dual, written as a sum over ``(s, i, j)``.

    ``2 sum alpha + 0.5 sum_{i,j} [-[y_i == y_j] A_i A_j + sum_s (2 alpha[i,s] alpha[j,y_i]
    - alpha[i,s] alpha[j,s])] K_ij``; the product of row totals appears once per
    ``(i, j)``, not once per class.
    """
    alphas = np.asarray(alphas, dtype=float)
    labels = np.asarray(labels)
    K = np.asarray(K, dtype=float)
    if check:
        _check_joint_feasible(alphas, labels)
    A = alphas.sum(axis=1)
    same = (labels[:, None] == labels[None, :]).astype(float)
    term1 = -same * np.outer(A, A)
    # sum_s alpha[i, s] * alpha[j, y_i] = A_i * alpha[j, y_i]
    term2 = 2.0 * A[:, None] * alphas[:, labels - 1].T
    term3 = -(alphas @ alphas.T)
    return float(2.0 * alphas.sum() + 0.5 * np.sum((term1 + term2 + term3) * K))


def crammer_singer_objective_expanded(alphas, K, labels, check: bool = True) -> float:
    """Joint dual before the Kronecker-delta simplification, summed literally over ``s``."""
    alphas = np.asarray(alphas, dtype=float)
    labels = np.asarray(labels)
    K = np.asarray(K, dtype=float)
    if check:
        _check_joint_feasible(alphas, labels)
    m, l = alphas.shape
    A = alphas.sum(axis=1)
    onehot = np.zeros((m, l))
    onehot[np.arange(m), labels - 1] = 1.0
    total = 0.0
    for s in range(l):
        da = onehot[:, s] * A  # delta_{i,s} A_i
        t1 = np.outer(da, da)
        t2 = -2.0 * alphas[:, s][:, None] * (onehot[:, labels - 1].T * A[None, :])
        t3 = 2.0 * alphas[:, s][:, None] * alphas[:, labels - 1].T
        t4 = -np.outer(alphas[:, s], alphas[:, s])
        total += np.sum((t1 + t2 + t3 + t4) * K)
    return float(2.0 * alphas.sum() + 0.5 * total)


def crammer_singer_objective_beta(alphas, K, labels) -> float:
    beta = joint_beta(alphas, labels)
    return float(2.0 * np.sum(alphas) - 0.5 * np.einsum("is,ij,js->", beta, np.asarray(K), beta))


class _JointState:
    """Mutable solver state for the joint dual: multipliers and F = K @ beta."""

    def __init__(self, K, labels, C, n_classes):
        self.K = K
        self.y = labels - 1
        self.m = K.shape[0]
        self.l = int(n_classes)
        self.C = C
        self.alpha = np.zeros((self.m, self.l))
        self.F = np.zeros((self.m, self.l))
        self.eps = 1e-12 * C
        self.rows = [np.flatnonzero(self.y == s) for s in range(self.l)]

    def gradient(self) -> np.ndarray:
        G = 2.0 - self.F[np.arange(self.m), self.y][:, None] + self.F
        G[np.arange(self.m), self.y] = -np.inf
        return G

    def arc_candidates(self, G):
        """Two best moves for each ordered class pair.

        A move changes one multiplier ``alpha[i, t]`` by ``+-delta``; increasing
        it raises the balance of class ``y_i`` and lowers that of ``t`` (arc
        ``y_i -> t``); decreasing it is the reverse arc. Returns ``best[u][v]``,
        a list of ``(gain, i, t, sign)`` sorted by gain.
        """
        l = self.l
        best = [[[] for _ in range(l)] for _ in range(l)]
        inc = np.where(self.alpha < self.C - self.eps, G, -np.inf)
        dec = np.where(self.alpha > self.eps, -G, -np.inf)
        dec[np.arange(self.m), self.y] = -np.inf
        for a in range(l):
            rows = self.rows[a]
            if rows.size == 0:
                continue
            for mat, sign in ((inc, 1), (dec, -1)):
                sub = mat[rows]
                k = min(2, rows.size)
                top = np.argpartition(-sub, k - 1, axis=0)[:k] if rows.size > 1 else np.zeros((1, l), int)
                for t in range(l):
                    if t == a:
                        continue
                    for r in top[:, t]:
                        g = sub[r, t]
                        if g == -np.inf:
                            continue
                        u, v = (a, t) if sign > 0 else (t, a)
                        best[u][v].append((float(g), int(rows[r]), t, sign))
        for u in range(l):
            for v in range(l):
                best[u][v].sort(key=lambda c: -c[0])
                del best[u][v][2:]
        return best

    def best_cycle(self, G, tol):
        l = self.l
        best = self.arc_candidates(G)
        W = np.full((l, l), -np.inf)
        for u in range(l):
            for v in range(l):
                if best[u][v]:
                    W[u, v] = best[u][v][0][0]
        top_gain, top_moves = tol, None
        for u in range(l):
            for v in range(u + 1, l):
                for c1 in best[u][v]:
                    for c2 in best[v][u]:
                        if c1[1:3] == c2[1:3]:
                            continue
                        if c1[0] + c2[0] > top_gain:
                            top_gain, top_moves = c1[0] + c2[0], [c1, c2]
        if l >= 3:
            for u in range(l):
                for v in range(l):
                    if v == u or W[u, v] == -np.inf:
                        continue
                    for w in range(l):
                        if w in (u, v):
                            continue
                        g = W[u, v] + W[v, w] + W[w, u]
                        if g > top_gain:
                            top_gain = g
                            top_moves = [best[u][v][0], best[v][w][0], best[w][u][0]]
        if top_moves is None and l >= 4:
            cyc = _positive_cycle(W, tol)
            if cyc is not None:
                top_moves = [best[cyc[k]][cyc[(k + 1) % len(cyc)]][0] for k in range(len(cyc))]
                top_gain = sum(c[0] for c in top_moves)
        return top_gain, top_moves

    def step(self, moves) -> float:
        gain = sum(c[0] for c in moves)
        idx = sorted({c[1] for c in moves})
        pos = {i: k for k, i in enumerate(idx)}
        dbeta = np.zeros((len(idx), self.l))
        room = np.inf
        for _, i, t, sign in moves:
            dbeta[pos[i], self.y[i]] += sign
            dbeta[pos[i], t] -= sign
            room = min(room, self.C - self.alpha[i, t] if sign > 0 else self.alpha[i, t])
        Ks = self.K[np.ix_(idx, idx)]
        curv = float(np.einsum("as,ab,bs->", dbeta, Ks, dbeta))
        delta = room if curv <= 1e-14 else min(gain / curv, room)
        if delta <= 0:
            return 0.0
        for _, i, t, sign in moves:
            a = self.alpha[i, t] + sign * delta
            if a < self.eps:
                a = 0.0
            elif a > self.C - self.eps:
                a = self.C
            self.alpha[i, t] = a
        self.F += self.K[:, idx] @ (delta * dbeta)
        return delta * gain - 0.5 * delta * delta * curv

    def objective(self) -> float:
        beta = joint_beta(self.alpha, self.y + 1)
        return float(2.0 * self.alpha.sum() - 0.5 * np.sum(beta * self.F))

    def biases(self, G) -> np.ndarray:
        free = (self.alpha > SUPPORT_THRESHOLD) & (self.alpha < self.C - SUPPORT_THRESHOLD)
        rows_i, cols_t = np.nonzero(free)
        if rows_i.size == 0:
            return np.zeros(self.l)
        # b_t - b_{y_i} = -G[i, t] on free multipliers, plus sum(b) = 0 to fix the offset
        M = np.zeros((rows_i.size + 1, self.l))
        rhs = np.zeros(rows_i.size + 1)
        for k, (i, t) in enumerate(zip(rows_i, cols_t)):
            M[k, t] += 1.0
            M[k, self.y[i]] -= 1.0
            rhs[k] = -G[i, t]
        M[-1, :] = 1.0
        return np.linalg.lstsq(M, rhs, rcond=None)[0]


def _positive_cycle(W, tol):
    """A simple cycle with total weight above ``tol`` in a dense weighted digraph, or None."""
    l = W.shape[0]
    w = np.where(np.isfinite(W), -W, np.inf)
    dist = np.zeros(l)
    pred = np.full(l, -1)
    last = -1
    for _ in range(l):
        last = -1
        for u in range(l):
            for v in range(l):
                if np.isfinite(w[u, v]) and dist[u] + w[u, v] < dist[v] - tol / l:
                    dist[v] = dist[u] + w[u, v]
                    pred[v] = u
                    last = v
        if last == -1:
            return None
    v = last
    for _ in range(l):
        v = pred[v]
    cycle = [v]
    u = pred[v]
    while u != v:
        cycle.append(u)
        u = pred[u]
    cycle.reverse()
    if sum(W[cycle[k], cycle[(k + 1) % len(cycle)]] for k in range(len(cycle))) <= tol:
        return None
    return cycle


def crammer_singer_train(K, labels, C: float = 1.0, tol: float = 1e-5, max_iters: int = 200_000,
                         n_classes: int | None = None) -> JointModel:
    """Maximize the joint dual by exact line searches along feasible cycles.

    A feasible direction must leave every class balance unchanged, so each step
    moves a set of multipliers whose balance effects form a cycle over the
    classes. Steps are chosen among the best 2- and 3-cycles (and, for four or
    more classes, any longer positive cycle), clipped to the box, so iterates
    stay feasible and the objective never decreases. The solver stops when no
    cycle has a directional gain above ``tol``.
    """
    K = _check_square(K)
    C = _check_C(C)
    labels = np.asarray(labels, dtype=int).ravel()
    if labels.shape[0] != K.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for a {K.shape[0]}x{K.shape[0]} kernel")
    if labels.min() < 1:
        raise ValueError("labels must be 1..l")
    st = _JointState(K, labels, C, n_classes or labels.max())
    if labels.max() > st.l:
        raise ValueError(f"labels exceed n_classes={st.l}")
    if st.l < 2:
        raise ValueError("need at least two classes")
    obj = 0.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        G = st.gradient()
        gain, moves = st.best_cycle(G, tol)
        if moves is None:
            converged = True
            break
        inc = st.step(moves)
        new_obj = obj + inc
        if inc < -1e-12 * max(1.0, abs(obj)):
            raise MonotonicityError(f"joint objective decreased by {-inc}")
        obj = new_obj
        if inc == 0.0:
            converged = True
            break
    if not converged:
        warnings.warn(f"joint solver stopped after {it} iterations without meeting tol={tol}", ConvergenceWarning)
    G = st.gradient()
    biases = st.biases(G)
    # a class with no training samples must never win the arg-max
    absent = np.bincount(labels - 1, minlength=st.l) == 0
    biases[absent] = -np.inf
    return JointModel(st.alpha.copy(), biases, C, labels, it, converged)


# ---------------------------------------------------------------------------
# multiclass wrappers


@dataclass
class MulticlassModel:
    strategy: str  # "ova" or "cs"
    n_classes: int
    C: float
    binary: list = field(default_factory=list)
    joint: JointModel | None = None
    train_digest: str = ""

    @property
    def n_train(self) -> int:
        if self.strategy == "cs":
            return self.joint.alphas.shape[0]
        return self.binary[0].alphas.shape[0]

    @property
    def support_indices(self) -> np.ndarray:
        if self.strategy == "cs":
            return self.joint.support_indices
        return np.unique(np.concatenate([b.support_indices for b in self.binary]))


def _train_digest(K, labels) -> str:
    h = hashlib.sha256(np.ascontiguousarray(K, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(labels, dtype=np.int64).tobytes())
    return h.hexdigest()


def _check_labels(labels, n_classes, allow_absent):
    labels = np.asarray(labels, dtype=int).ravel()
    l = int(n_classes if n_classes is not None else labels.max())
    if l < 2:
        raise ValueError("need at least two classes")
    if labels.min() < 1 or labels.max() > l:
        raise ValueError(f"labels must lie in 1..{l}")
    missing = sorted(set(range(1, l + 1)) - set(labels.tolist()))
    if missing and not allow_absent:
        raise ValueError(f"classes {missing} are absent from the training labels")
    return labels, l


def train_one_vs_all(K, labels, C: float = 1.0, n_classes: int | None = None, tol: float = 1e-3,
                     max_passes: int = 1000, workers: int = 1, allow_absent: bool = False) -> MulticlassModel:
    K = _check_square(K)
    labels, l = _check_labels(labels, n_classes, allow_absent)

    def fit(s):
        with warnings.catch_warnings():
            if allow_absent:
                warnings.simplefilter("ignore", DegenerateProblemWarning)
            return smo_train_binary(K, np.where(labels == s, 1.0, -1.0), C, tol, max_passes)

    classes = list(range(1, l + 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            models = list(ex.map(fit, classes))
    else:
        models = [fit(s) for s in classes]
    return MulticlassModel("ova", l, float(C), binary=models, train_digest=_train_digest(K, labels))


def train_crammer_singer(K, labels, C: float = 1.0, n_classes: int | None = None, tol: float = 1e-5,
                         max_iters: int = 200_000, allow_absent: bool = False) -> MulticlassModel:
    K = _check_square(K)
    labels, l = _check_labels(labels, n_classes, allow_absent)
    joint = crammer_singer_train(K, labels, C, tol, max_iters, n_classes=l)
    return MulticlassModel("cs", l, float(C), joint=joint, train_digest=_train_digest(K, labels))


def train(K, labels, C: float = 1.0, strategy: str = "ova", **kw) -> MulticlassModel:
    if strategy == "ova":
        return train_one_vs_all(K, labels, C, **kw)
    if strategy == "cs":
        kw.pop("workers", None)
        kw.pop("max_passes", None)
        return train_crammer_singer(K, labels, C, **kw)
    raise ValueError(f"unknown strategy {strategy!r}; use 'ova' or 'cs'")


def decision_values(model: MulticlassModel, k_rows) -> np.ndarray:
    """Per-class decision values; ``k_rows`` is ``(m,)`` or ``(n, m)`` kernel values against the training set."""
    k_rows = np.asarray(k_rows, dtype=float)
    if k_rows.shape[-1] != model.n_train:
        raise ValueError(f"kernel row length {k_rows.shape[-1]} != training size {model.n_train}")
    if model.strategy == "cs":
        return model.joint.decision(k_rows)
    return np.stack([b.decision(k_rows) for b in model.binary], axis=-1)


def predict(model: MulticlassModel, k_rows) -> np.ndarray:
    """Arg-max class (1-based); ties go to the lowest class index."""
    return np.argmax(decision_values(model, k_rows), axis=-1) + 1


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model: MulticlassModel) -> dict:
    d = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "strategy": model.strategy,
        "n_classes": model.n_classes,
        "C": model.C,
        "train_digest": model.train_digest,
        "support_indices": model.support_indices.tolist(),
    }
    if model.strategy == "cs":
        j = model.joint
        d.update(alphas=j.alphas.tolist(), biases=[float(b) if np.isfinite(b) else None for b in j.biases],
                 labels=j.labels.tolist())
    else:
        d.update(
            alphas=[b.alphas.tolist() for b in model.binary],
            biases=[b.bias for b in model.binary],
            labels=[b.y.tolist() for b in model.binary],
            constant=[b.constant for b in model.binary],
        )
    return d


def model_from_dict(d: dict) -> MulticlassModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a serialized model")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    C = float(d["C"])
    if d["strategy"] == "cs":
        biases = np.array([-np.inf if b is None else b for b in d["biases"]], dtype=float)
        joint = JointModel(np.array(d["alphas"], dtype=float), biases, C, np.array(d["labels"], dtype=int))
        return MulticlassModel("cs", d["n_classes"], C, joint=joint, train_digest=d["train_digest"])
    models = [
        BinaryModel(np.array(a, dtype=float), float(b), C, np.array(y, dtype=float), constant=c)
        for a, b, y, c in zip(d["alphas"], d["biases"], d["labels"], d["constant"])
    ]
    return MulticlassModel("ova", d["n_classes"], C, binary=models, train_digest=d["train_digest"])


def save_model(model: MulticlassModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> MulticlassModel:
    return model_from_dict(json.loads(Path(path).read_text()))
