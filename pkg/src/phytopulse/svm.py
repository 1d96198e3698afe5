"""Kernel SVM trained by simplified sequential minimal optimization.

Multiclass decisions use one-vs-one voting: one binary machine per label
pair, each trained on the rows of its two labels. Features are standardized
by the training mean/std inside the model by default. The SMO sweep keeps a
cached decision value per row and terminates once ``max_passes`` consecutive
full sweeps change no coefficient under the KKT tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .features import FeatureMatrix
from .rng import kernel_seed, rand_below

_KINDS = ("rbf", "poly")

# Hard cap on SMO sweeps; a safety net, never reached on sane problems.
_MAX_SWEEPS = 10_000

# Substream tag for the second-index choice of each binary machine.
_SMO_TAG = 2


@dataclass(frozen=True)
class KernelSpec:
    """rbf: exp(-gamma * ||x-z||^2); poly: (gamma * <x,z> + coef0) ^ degree.

    ``gamma=None`` resolves to 1/p when the model is trained.
    """

    kind: str = "rbf"
    gamma: float | None = None
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kernel kind must be one of {_KINDS}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be > 0 when set")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")


@dataclass(frozen=True)
class BinaryMachine:
    """One trained pair machine; coef holds alpha_i * y_i for support rows."""

    pos_index: int
    neg_index: int
    support_rows: np.ndarray
    coef: np.ndarray
    alpha: np.ndarray
    support_y: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float


@dataclass(frozen=True)
class SvmModel:
    label_set: tuple[str, ...]
    machines: tuple[BinaryMachine, ...]
    kernel: KernelSpec
    C: float
    scaling: tuple[np.ndarray, np.ndarray] | None


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """Kernel value for one row pair."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape or x.ndim != 1:
        raise ValueError("rows must be 1-d and of equal dimension")
    if spec.gamma is None:
        raise ValueError("gamma must be resolved before evaluation")
    if spec.kind == "rbf":
        return float(np.exp(-spec.gamma * np.sum((x - z) ** 2)))
    return float((spec.gamma * np.dot(x, z) + spec.coef0) ** spec.degree)


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.gamma is None:
        raise ValueError("gamma must be resolved before evaluation")
    if A.shape[1] != B.shape[1]:
        raise ValueError("rows must have equal dimension")
    if spec.kind == "rbf":
        sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-spec.gamma * sq)
    return (spec.gamma * (A @ B.T) + spec.coef0) ** spec.degree


@njit(cache=True, nogil=True)
def _smo(K, y, C, tol, max_passes, seed, max_sweeps):
    """Simplified SMO on a precomputed kernel matrix; returns (alpha, bias)."""
    n = K.shape[0]
    alpha = np.zeros(n, np.float64)
    f = np.zeros(n, np.float64)  # sum_j alpha_j y_j K_ij, bias excluded
    b = 0.0
    state = np.empty(1, np.uint64)
    state[0] = seed
    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            Ei = f[i] + b - y[i]
            ri = Ei * y[i]
            ai_old = alpha[i]
            if not ((ri < -tol and ai_old < C) or (ri > tol and ai_old > 0.0)):
                continue
            j = rand_below(state, n - 1)
            if j >= i:
                j += 1
            Ej = f[j] + b - y[j]
            aj_old = alpha[j]
            if y[i] != y[j]:
                L = aj_old - ai_old
                if L < 0.0:
                    L = 0.0
                H = C + aj_old - ai_old
                if H > C:
                    H = C
            else:
                L = ai_old + aj_old - C
                if L < 0.0:
                    L = 0.0
                H = ai_old + aj_old
                if H > C:
                    H = C
            if L >= H:
                continue
            eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
            if eta >= 0.0:
                continue
            aj = aj_old - y[j] * (Ei - Ej) / eta
            if aj > H:
                aj = H
            elif aj < L:
                aj = L
            if abs(aj - aj_old) < 1e-5:
                continue
            ai = ai_old + y[i] * y[j] * (aj_old - aj)
            di = y[i] * (ai - ai_old)
            dj = y[j] * (aj - aj_old)
            b1 = b - Ei - di * K[i, i] - dj * K[i, j]
            b2 = b - Ej - di * K[i, j] - dj * K[j, j]
            if 0.0 < ai and ai < C:
                b = b1
            elif 0.0 < aj and aj < C:
                b = b2
            else:
                b = 0.5 * (b1 + b2)
            for t in range(n):
                f[t] += di * K[i, t] + dj * K[j, t]
            alpha[i] = ai
            alpha[j] = aj
            changed += 1
        sweeps += 1
        if changed == 0:
            passes += 1
        else:
            passes = 0
    return alpha, b


def svm_train_binary(
    rows,
    y,
    kernel: KernelSpec,
    C: float,
    tol: float = 1e-3,
    max_passes: int = 10,
    seed: int = 0,
) -> BinaryMachine:
    """Train one machine on labels in {-1, +1}; rows are used as given."""
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != y.size:
        raise ValueError("rows and labels must align")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise ValueError("both labels must be present")
    if C <= 0:
        raise ValueError("C must be > 0")
    if kernel.gamma is None:
        kernel = replace(kernel, gamma=1.0 / rows.shape[1])
    K = kernel_matrix(kernel, rows, rows)
    alpha, bias = _smo(K, y, float(C), float(tol), int(max_passes),
                       np.uint64(seed), _MAX_SWEEPS)
    support = alpha > 0.0
    return BinaryMachine(
        pos_index=1,
        neg_index=0,
        support_rows=rows[support],
        coef=(alpha * y)[support],
        alpha=alpha[support],
        support_y=y[support],
        bias=float(bias),
        kernel=kernel,
        C=float(C),
    )


def machine_decision(machine: BinaryMachine, rows: np.ndarray) -> np.ndarray:
    """Decision values for already-standardized rows."""
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if machine.support_rows.shape[0] == 0:
        return np.full(rows.shape[0], machine.bias)
    return kernel_matrix(machine.kernel, rows, machine.support_rows) @ machine.coef + machine.bias


def _standardize_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = np.sqrt(np.mean((X - mean) ** 2, axis=0))
    std[std == 0.0] = 1.0
    return mean, std


def svm_train(
    features: FeatureMatrix,
    kernel: KernelSpec | None = None,
    C: float = 32.0,
    tol: float = 1e-3,
    max_passes: int = 10,
    seed: int = 0,
    scale: bool = True,
    label_set: tuple[str, ...] | None = None,
) -> SvmModel:
    """One-vs-one model: one binary machine per label pair."""
    kernel = kernel or KernelSpec()
    labels = list(features.labels)
    if any(l is None for l in labels):
        raise ValueError("all rows must be labeled")
    if label_set is None:
        label_set = tuple(dict.fromkeys(labels))
    else:
        label_set = tuple(label_set)
        if not set(labels) <= set(label_set):
            raise ValueError("training labels must be contained in label_set")
    present = [l for l in label_set if l in set(labels)]
    if len(present) < 2:
        raise ValueError("training requires at least 2 labels")

    X = np.asarray(features.rows, dtype=np.float64)
    if kernel.gamma is None:
        kernel = replace(kernel, gamma=1.0 / X.shape[1])
    scaling = None
    if scale:
        scaling = _standardize_fit(X)
        X = (X - scaling[0]) / scaling[1]
    codes = np.array([label_set.index(l) for l in labels], dtype=np.int64)

    machines = []
    for a in range(len(label_set)):
        for b in range(a + 1, len(label_set)):
            mask = (codes == a) | (codes == b)
            if not mask.any() or np.unique(codes[mask]).size < 2:
                continue
            ysub = np.where(codes[mask] == a, 1.0, -1.0)
            machine = svm_train_binary(
                X[mask], ysub, kernel, C, tol=tol, max_passes=max_passes,
                seed=kernel_seed(seed, _SMO_TAG, a, b),
            )
            machines.append(replace(machine, pos_index=a, neg_index=b))
    return SvmModel(
        label_set=label_set,
        machines=tuple(machines),
        kernel=kernel,
        C=float(C),
        scaling=scaling,
    )


def svm_predict_many(model: SvmModel, rows) -> list[str]:
    """One-vs-one vote; ties resolve by summed absolute decision values of
    the machines that voted for each tied label, then by label order."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("rows must be 2-d")
    if model.scaling is not None:
        rows = (rows - model.scaling[0]) / model.scaling[1]
    L = len(model.label_set)
    votes = np.zeros((rows.shape[0], L), np.int64)
    strength = np.zeros((rows.shape[0], L), np.float64)
    for machine in model.machines:
        dec = machine_decision(machine, rows)
        winner = np.where(dec > 0, machine.pos_index, machine.neg_index)
        votes[np.arange(rows.shape[0]), winner] += 1
        strength[np.arange(rows.shape[0]), winner] += np.abs(dec)
    out = []
    for q in range(rows.shape[0]):
        top = votes[q].max()
        tied = np.flatnonzero(votes[q] == top)
        if tied.size > 1:
            tied = tied[strength[q, tied] == strength[q, tied].max()]
        out.append(model.label_set[int(tied[0])])
    return out


def svm_predict(model: SvmModel, row) -> str:
    row = np.asarray(row, dtype=np.float64)
    if model.scaling is not None and row.size != model.scaling[0].size:
        raise ValueError(f"query must have {model.scaling[0].size} features")
    return svm_predict_many(model, row.reshape(1, -1))[0]
