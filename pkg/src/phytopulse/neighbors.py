"""K-nearest-neighbor classification over features or a precomputed matrix.

Brute-force distances only; datasets in scope are small enough that exact,
reproducible search matters more than speed. Neighbor ranking sorts by
(distance, label order), which makes predictions invariant under any
permutation of the training rows even when distances tie.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtw import DissimilarityMatrix
from .features import FeatureMatrix

_MODES = ("euclidean_features", "precomputed")


@dataclass(frozen=True)
class KnnModel:
    k: int
    metric_mode: str
    label_set: tuple[str, ...]
    codes: np.ndarray
    rows: np.ndarray | None
    scaling: tuple[np.ndarray, np.ndarray] | None
    train_ids: tuple[str, ...] | None
    matrix: DissimilarityMatrix | None


def knn_train(
    features: FeatureMatrix,
    k: int = 1,
    metric_mode: str = "euclidean_features",
    scale: bool = False,
    matrix: DissimilarityMatrix | None = None,
    label_set: tuple[str, ...] | None = None,
) -> KnnModel:
    """Store training rows (or ids, for precomputed mode) and labels.

    With ``scale``, rows are standardized by the training mean/std; constant
    features get std 1 so they contribute zero to every distance.
    """
    labels = list(features.labels)
    if any(l is None for l in labels):
        raise ValueError("all rows must be labeled")
    n = len(labels)
    if n == 0:
        raise ValueError("training set is empty")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if metric_mode not in _MODES:
        raise ValueError(f"metric_mode must be one of {_MODES}")
    if label_set is None:
        label_set = tuple(dict.fromkeys(labels))
    else:
        label_set = tuple(label_set)
        if not set(labels) <= set(label_set):
            raise ValueError("training labels must be contained in label_set")
    codes = np.array([label_set.index(l) for l in labels], dtype=np.int64)

    if metric_mode == "precomputed":
        if matrix is None:
            raise ValueError("precomputed mode requires a dissimilarity matrix")
        for rid in features.row_ids:
            matrix.index_of(rid)  # raises for ids absent from the matrix
        return KnnModel(
            k=k,
            metric_mode=metric_mode,
            label_set=label_set,
            codes=codes,
            rows=None,
            scaling=None,
            train_ids=features.row_ids,
            matrix=matrix,
        )

    rows = np.asarray(features.rows, dtype=np.float64)
    scaling = None
    if scale:
        mean = rows.mean(axis=0)
        std = np.sqrt(np.mean((rows - mean) ** 2, axis=0))
        std[std == 0.0] = 1.0
        scaling = (mean, std)
        rows = (rows - mean) / std
    return KnnModel(
        k=k,
        metric_mode=metric_mode,
        label_set=label_set,
        codes=codes,
        rows=rows,
        scaling=scaling,
        train_ids=features.row_ids,
        matrix=None,
    )


def _vote(model: KnnModel, dists: np.ndarray) -> int:
    order = np.lexsort((model.codes, dists))[: model.k]
    chosen_codes = model.codes[order]
    chosen_dists = dists[order]
    counts = np.bincount(chosen_codes, minlength=len(model.label_set))
    tied = np.flatnonzero(counts == counts.max())
    if tied.size == 1:
        return int(tied[0])
    sums = np.array([chosen_dists[chosen_codes == c].sum() for c in tied])
    tied = tied[sums == sums.min()]
    return int(tied[0])


def _matrix_distances(model: KnnModel, query_id: str) -> np.ndarray:
    qi = model.matrix.index_of(query_id)
    train_idx = [model.matrix.index_of(t) for t in model.train_ids]
    return model.matrix.entries[qi, train_idx]


def knn_predict(model: KnnModel, query) -> str:
    """Majority label of the k nearest training rows.

    Vote ties break by the smallest summed distance among the tied labels,
    then by label order. The query is a feature row, or a profile id in
    precomputed mode.
    """
    if model.metric_mode == "precomputed":
        if not isinstance(query, str):
            raise ValueError("precomputed mode takes a profile id")
        return model.label_set[_vote(model, _matrix_distances(model, query))]
    row = np.asarray(query, dtype=np.float64)
    if row.ndim != 1 or row.size != model.rows.shape[1]:
        raise ValueError(f"query must have {model.rows.shape[1]} features")
    return knn_predict_many(model, row.reshape(1, -1))[0]


def knn_predict_many(model: KnnModel, queries) -> list[str]:
    if model.metric_mode == "precomputed":
        return [model.label_set[_vote(model, _matrix_distances(model, q))] for q in queries]
    rows = np.asarray(queries, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.rows.shape[1]:
        raise ValueError(f"queries must have {model.rows.shape[1]} features")
    if model.scaling is not None:
        rows = (rows - model.scaling[0]) / model.scaling[1]
    sq = (
        (rows**2).sum(axis=1)[:, None]
        + (model.rows**2).sum(axis=1)[None, :]
        - 2.0 * rows @ model.rows.T
    )
    dists = np.sqrt(np.maximum(sq, 0.0))
    return [model.label_set[_vote(model, d)] for d in dists]
