"""Normalized multichannel DTW dissimilarity and the all-pairs matrix.

Two profiles are aligned jointly: sample t of a profile is the 8-vector of
all channels at t, and one shared warping path (steps down, right, diagonal)
matches the two vector sequences. The local cost of a matched pair (q, r) is

    s(q, r) = min(1, d(q, r) / max(d(q, 0), d(r, 0)))

with d the configured L1 or L2 norm and s = 0 when both points are zero.
The pair dissimilarity is the minimum over all admissible warping paths of
the path's mean local cost (total cost divided by its own number of matched
pairs), which keeps the result in [0, 1]. The dynamic program is stratified
by path length so this per-path-normalized objective is minimized exactly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .features import FAMILY_DISSIMILARITY, FeatureMatrix
from .signals import Dataset, PulseProfile

_NORMS = ("l1", "l2")


@dataclass(frozen=True)
class DtwConfig:
    """Point norm, optional Sakoe-Chiba half-width, and channel coupling.

    ``per_channel=True`` replaces the joint 8-dimensional alignment by eight
    independent single-channel alignments averaged afterwards; the joint
    alignment is the default.
    """

    point_norm: str = "l2"
    window: int | None = None
    per_channel: bool = False

    def __post_init__(self):
        if self.point_norm not in _NORMS:
            raise ValueError(f"point_norm must be one of {_NORMS}")
        if self.window is not None and self.window < 0:
            raise ValueError("window must be >= 0 when set")


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    """Symmetric n x n matrix of pair dissimilarities with a zero diagonal."""

    ids: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        entries = np.asarray(self.entries, dtype=np.float64)
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise ValueError("matrix ids must be distinct")
        if entries.shape != (n, n):
            raise ValueError(f"entries must be {n}x{n}")
        if n:
            if not np.all(np.isfinite(entries)):
                raise ValueError("matrix entries must be finite")
            if np.any(np.diag(entries) != 0.0):
                raise ValueError("matrix diagonal must be zero")
            if not np.array_equal(entries, entries.T):
                raise ValueError("matrix must be symmetric")
            if entries.min() < 0.0 or entries.max() > 1.0:
                raise ValueError("matrix entries must lie in [0, 1]")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def index_of(self, profile_id: str) -> int:
        if not hasattr(self, "_id_index"):
            object.__setattr__(self, "_id_index", {pid: i for i, pid in enumerate(self.ids)})
        idx = self._id_index.get(profile_id)
        if idx is None:
            raise ValueError(f"unknown profile id {profile_id!r}")
        return idx

    def __eq__(self, other) -> bool:
        if not isinstance(other, DissimilarityMatrix):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.entries, other.entries)


def local_dissimilarity(q, r, norm: str = "l2") -> float:
    """Normalized point cost in [0, 1]; 0 when both points are zero."""
    if norm not in _NORMS:
        raise ValueError(f"norm must be one of {_NORMS}")
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if q.shape != r.shape:
        raise ValueError("points must have equal dimension")
    if norm == "l1":
        d = float(np.sum(np.abs(q - r)))
        denom = max(float(np.sum(np.abs(q))), float(np.sum(np.abs(r))))
    else:
        d = float(np.sqrt(np.sum((q - r) ** 2)))
        denom = max(float(np.sqrt(np.sum(q**2))), float(np.sqrt(np.sum(r**2))))
    if denom == 0.0:
        return 0.0
    return min(1.0, d / denom)


@njit(cache=True, nogil=True)
def _pair_dp(a, b, p_norm, window):
    """Minimum per-path-normalized DTW cost between vector sequences a, b.

    Cost table is stratified by path length L: cell (i, j, L) holds the
    cheapest total cost of reaching (i, j) with exactly L matched pairs.
    Returns inf when the window admits no path.
    """
    n = a.shape[0]
    m = b.shape[0]
    d = a.shape[1]
    inf = np.inf

    na = np.empty(n, np.float64)
    for i in range(n):
        s = 0.0
        if p_norm == 1:
            for t in range(d):
                s += abs(a[i, t])
        else:
            for t in range(d):
                s += a[i, t] * a[i, t]
            s = np.sqrt(s)
        na[i] = s
    nb = np.empty(m, np.float64)
    for j in range(m):
        s = 0.0
        if p_norm == 1:
            for t in range(d):
                s += abs(b[j, t])
        else:
            for t in range(d):
                s += b[j, t] * b[j, t]
            s = np.sqrt(s)
        nb[j] = s

    lmax = n + m - 1
    prev = np.empty((m, lmax + 1), np.float64)
    cur = np.empty((m, lmax + 1), np.float64)
    for i in range(n):
        for j in range(m):
            for L in range(lmax + 1):
                cur[j, L] = inf
        jlo = 0
        jhi = m - 1
        if window >= 0:
            if i - window > jlo:
                jlo = i - window
            if i + window < jhi:
                jhi = i + window
        for j in range(jlo, jhi + 1):
            c = 0.0
            if p_norm == 1:
                for t in range(d):
                    c += abs(a[i, t] - b[j, t])
            else:
                for t in range(d):
                    diff = a[i, t] - b[j, t]
                    c += diff * diff
                c = np.sqrt(c)
            denom = na[i] if na[i] > nb[j] else nb[j]
            if denom > 0.0:
                c = c / denom
                if c > 1.0:
                    c = 1.0
            else:
                c = 0.0
            if i == 0 and j == 0:
                cur[0, 1] = c
                continue
            llo = (i if i > j else j) + 1
            lhi = i + j + 1
            for L in range(llo, lhi + 1):
                best = inf
                if j > 0:
                    v = cur[j - 1, L - 1]
                    if v < best:
                        best = v
                if i > 0:
                    v = prev[j, L - 1]
                    if v < best:
                        best = v
                    if j > 0:
                        v = prev[j - 1, L - 1]
                        if v < best:
                            best = v
                if best < inf:
                    cur[j, L] = best + c
        tmp = prev
        prev = cur
        cur = tmp

    best_ratio = inf
    lmin = n if n > m else m
    for L in range(lmin, lmax + 1):
        v = prev[m - 1, L]
        if v < inf:
            ratio = v / L
            if ratio < best_ratio:
                best_ratio = ratio
    return best_ratio


def _pair_value(a: np.ndarray, b: np.ndarray, config: DtwConfig) -> float:
    p_norm = 1 if config.point_norm == "l1" else 2
    window = -1 if config.window is None else int(config.window)
    if config.window is not None and abs(a.shape[0] - b.shape[0]) > config.window:
        raise ValueError(
            f"window {config.window} excludes all paths for lengths "
            f"{a.shape[0]} and {b.shape[0]}"
        )
    if config.per_channel:
        total = 0.0
        for t in range(a.shape[1]):
            total += _pair_dp(
                np.ascontiguousarray(a[:, t : t + 1]),
                np.ascontiguousarray(b[:, t : t + 1]),
                p_norm,
                window,
            )
        return total / a.shape[1]
    return float(_pair_dp(a, b, p_norm, window))


def dtw_dissimilarity(q: PulseProfile, r: PulseProfile, config: DtwConfig | None = None) -> float:
    """Joint-alignment DTW dissimilarity of two profiles, in [0, 1]."""
    config = config or DtwConfig()
    return _pair_value(
        np.ascontiguousarray(q.stacked()), np.ascontiguousarray(r.stacked()), config
    )


def dissimilarity_matrix(
    dataset: Dataset, config: DtwConfig | None = None, workers: int | None = None
) -> DissimilarityMatrix:
    """All-pairs dissimilarity matrix, upper triangle mirrored.

    Pairs are distributed over a thread pool; every worker writes a disjoint
    set of cells and each cell is a pure function of its pair, so the result
    is bit-identical for any worker count.
    """
    config = config or DtwConfig()
    stacks = [np.ascontiguousarray(p.stacked()) for p in dataset.profiles]
    n = len(stacks)
    if config.window is not None:
        lengths = [s.shape[0] for s in stacks]
        if lengths and max(lengths) - min(lengths) > config.window:
            raise ValueError(
                f"window {config.window} excludes all paths for lengths "
                f"{min(lengths)} and {max(lengths)}"
            )
    entries = np.zeros((n, n), dtype=np.float64)

    def fill_row(i: int) -> None:
        for j in range(i + 1, n):
            entries[i, j] = _pair_value(stacks[i], stacks[j], config)

    nworkers = workers or os.cpu_count() or 1
    if nworkers <= 1 or n < 3:
        for i in range(n):
            fill_row(i)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            list(pool.map(fill_row, range(n)))
    upper = np.triu_indices(n, k=1)
    entries[(upper[1], upper[0])] = entries[upper]
    return DissimilarityMatrix(ids=dataset.ids(), entries=entries)


def dissimilarity_columns(
    matrix: DissimilarityMatrix,
    reference_ids,
    target_ids,
    labels: dict[str, str | None] | None = None,
) -> FeatureMatrix:
    """Dissimilarity feature rows: one column per reference profile.

    Row x holds matrix[x, t] for t over reference_ids in the given order.
    ``labels`` optionally maps profile id to species name for the rows.
    """
    reference_ids = tuple(reference_ids)
    target_ids = tuple(target_ids)
    ref_idx = [matrix.index_of(rid) for rid in reference_ids]
    tgt_idx = [matrix.index_of(tid) for tid in target_ids]
    rows = matrix.entries[np.ix_(tgt_idx, ref_idx)] if target_ids else np.zeros((0, len(ref_idx)))
    row_labels = tuple((labels or {}).get(tid) for tid in target_ids)
    return FeatureMatrix(
        family=FAMILY_DISSIMILARITY,
        names=tuple(f"dtw_{rid}" for rid in reference_ids),
        rows=rows,
        row_ids=target_ids,
        labels=row_labels,
    )


def save_matrix_csv(matrix: DissimilarityMatrix, path) -> None:
    """CSV with an id header row; each data row starts with its id."""
    path = Path(path)
    for pid in matrix.ids:
        if "," in pid or "\n" in pid:
            raise ValueError(f"profile id {pid!r} cannot be written to CSV")
    with path.open("w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(matrix.ids) + "\n")
        for i, pid in enumerate(matrix.ids):
            fh.write(pid + "," + ",".join(repr(v) for v in matrix.entries[i].tolist()) + "\n")


def load_matrix_csv(path) -> DissimilarityMatrix:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:1] != ["id"]:
            raise ValueError(f"{path}: expected 'id' header column")
        ids = tuple(header[1:])
        rows = []
        row_ids = []
        for line in fh:
            if not line.strip():
                continue
            cells = line.rstrip("\n").split(",")
            row_ids.append(cells[0])
            rows.append([float(v) for v in cells[1:]])
    if tuple(row_ids) != ids:
        raise ValueError(f"{path}: row ids do not match header ids")
    return DissimilarityMatrix(ids=ids, entries=np.array(rows, dtype=np.float64))
