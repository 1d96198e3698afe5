"""CART-style random forest and its regularized variants.

All four variants (rf, rrf, grrf, grf) share one tree-growing routine that
differs only in the per-feature gain multiplier and in whether features
already used by the forest are exempt from it:

    rf    lambda_f = 1                          exemption off
    rrf   lambda_f = lambda                     exemption on (shared set F)
    grrf  lambda_f = (1-gamma)*lambda + gamma*imp_f   exemption on
    grf   lambda_f = (1-gamma) + gamma*imp_f    exemption off (penalty at
                                                every node, trees independent)

imp_f is the max-normalized Gini importance of a preliminary plain rf grown
with the same configuration from a derived seed. Because the code path and
per-tree random streams are identical, the reductions rrf(lambda=1) == rf,
grf(gamma=0) == rf and grrf(gamma=0) == rrf(lambda) hold tree for tree.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .features import FeatureMatrix
from .rng import kernel_seed, rand_below

_VARIANTS = ("rf", "rrf", "grrf", "grf")

# Substream tags under a forest's seed.
_TREE_TAG = 0
_PRELIM_TAG = 1


@dataclass(frozen=True)
class ForestConfig:
    """Training knobs; ``mtry=None`` resolves to ceil(sqrt(p)) at fit time.

    ``gamma=None`` resolves to the variant default (0.1 for grrf, 1.0 for
    grf). ``lam`` is the rrf/grrf base penalty, in (0, 1].
    """

    variant: str = "rf"
    ntree: int = 500
    mtry: int | None = None
    lam: float = 0.8
    gamma: float | None = None
    min_node: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}")
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1 when set")
        if not 0 < self.lam <= 1:
            raise ValueError("lam must lie in (0, 1]")
        if self.gamma is not None and not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.min_node < 1:
            raise ValueError("min_node must be >= 1")

    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        if self.variant == "grrf":
            return 0.1
        if self.variant == "grf":
            return 1.0
        return 0.0


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; feature[i] == -1 marks node i as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    leaf_label: np.ndarray
    bootstrap: np.ndarray
    importance: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    label_set: tuple[str, ...]
    importance: np.ndarray
    config: ForestConfig
    oob_error: float
    n_features: int


def gini_impurity(counts) -> float:
    """1 - sum((c_i / n)^2) over per-label counts; requires n >= 1."""
    arr = np.asarray(counts, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("counts must be a nonempty 1-d sequence")
    if np.any(arr < 0):
        raise ValueError("counts must be nonnegative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("node is empty")
    return float(1.0 - np.sum((arr / total) ** 2))


@njit(cache=True, nogil=True)
def _sort_pairs(vals, rows, lo, hi):
    """In-place quicksort of vals[lo:hi+1] with rows permuted alongside."""
    stack_lo = np.empty(64, np.int64)
    stack_hi = np.empty(64, np.int64)
    stack_lo[0] = lo
    stack_hi[0] = hi
    top = 1
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        while hi - lo > 15:
            mid = (lo + hi) >> 1
            if vals[mid] < vals[lo]:
                vals[mid], vals[lo] = vals[lo], vals[mid]
                rows[mid], rows[lo] = rows[lo], rows[mid]
            if vals[hi] < vals[lo]:
                vals[hi], vals[lo] = vals[lo], vals[hi]
                rows[hi], rows[lo] = rows[lo], rows[hi]
            if vals[hi] < vals[mid]:
                vals[hi], vals[mid] = vals[mid], vals[hi]
                rows[hi], rows[mid] = rows[mid], rows[hi]
            pivot = vals[mid]
            i = lo - 1
            j = hi + 1
            while True:
                i += 1
                while vals[i] < pivot:
                    i += 1
                j -= 1
                while vals[j] > pivot:
                    j -= 1
                if i >= j:
                    break
                vals[i], vals[j] = vals[j], vals[i]
                rows[i], rows[j] = rows[j], rows[i]
            # recurse into the smaller side, push the larger
            if j - lo < hi - j - 1:
                stack_lo[top] = j + 1
                stack_hi[top] = hi
                top += 1
                hi = j
            else:
                stack_lo[top] = lo
                stack_hi[top] = j
                top += 1
                lo = j + 1
        for i in range(lo + 1, hi + 1):
            v = vals[i]
            r = rows[i]
            j = i - 1
            while j >= lo and vals[j] > v:
                vals[j + 1] = vals[j]
                rows[j + 1] = rows[j]
                j -= 1
            vals[j + 1] = v
            rows[j + 1] = r


@njit(cache=True, nogil=True)
def _search_split(
    X,
    y,
    idx,
    start,
    end,
    cand,
    ncand,
    lam,
    use_selected,
    selected,
    min_node,
    total_counts,
    vals,
    rows,
    left_counts,
):
    """Best split of idx[start:end] by effective gain.

    Candidate thresholds are midpoints of consecutive distinct sorted values
    (skipped when rounding does not leave them strictly between). Effective
    gain is the raw Gini gain for features already in the selected set,
    lam[f] * gain otherwise. Ties go to the lowest feature index, then the
    lowest threshold. Returns (feature, threshold, raw_gain); feature == -1
    when no split has positive effective gain.
    """
    n_node = end - start
    n_labels = total_counts.size
    ssq = 0.0
    for l in range(n_labels):
        c = total_counts[l]
        ssq += c * c
    parent_gini = 1.0 - ssq / (float(n_node) * float(n_node))

    best_feat = -1
    best_thr = 0.0
    best_raw = 0.0
    best_eff = 0.0
    for ci in range(ncand):
        f = cand[ci]
        for r in range(n_node):
            row = idx[start + r]
            vals[r] = X[row, f]
            rows[r] = row
        _sort_pairs(vals, rows, 0, n_node - 1)
        for l in range(n_labels):
            left_counts[l] = 0
        nl = 0
        for r in range(n_node - 1):
            left_counts[y[rows[r]]] += 1
            nl += 1
            v0 = vals[r]
            v1 = vals[r + 1]
            if v0 == v1:
                continue
            nr = n_node - nl
            if nl < min_node or nr < min_node:
                continue
            thr = 0.5 * (v0 + v1)
            if not (v0 < thr and thr < v1):
                continue
            sl = 0.0
            sr = 0.0
            for l in range(n_labels):
                cl = left_counts[l]
                cr = total_counts[l] - cl
                sl += cl * cl
                sr += cr * cr
            gl = 1.0 - sl / (float(nl) * float(nl))
            gr = 1.0 - sr / (float(nr) * float(nr))
            gain = parent_gini - (nl * gl + nr * gr) / n_node
            if use_selected and selected[f] == 1:
                eff = gain
            else:
                eff = lam[f] * gain
            take = False
            if eff > best_eff:
                take = True
            elif eff == best_eff and best_feat >= 0:
                if f < best_feat or (f == best_feat and thr < best_thr):
                    take = True
            if take:
                best_feat = f
                best_thr = thr
                best_raw = gain
                best_eff = eff
    return best_feat, best_thr, best_raw


@njit(cache=True, nogil=True)
def _grow_tree(
    X,
    y,
    n_labels,
    mtry,
    min_node,
    lam,
    use_selected,
    selected,
    seed,
    feat_out,
    thr_out,
    left_out,
    right_out,
    counts_out,
    boot_out,
    imp_out,
):
    """Grow one tree on a bootstrap sample; returns the node count.

    Nodes are created depth-first (left child first) in preorder. Output
    arrays must be sized for 2n+1 nodes; importance is accumulated as
    (node size fraction) * gain per accepted split.
    """
    n, p = X.shape
    state = np.empty(1, np.uint64)
    state[0] = seed
    for i in range(n):
        boot_out[i] = rand_below(state, n)
    idx = boot_out.copy()

    vals = np.empty(n, np.float64)
    rows = np.empty(n, np.int64)
    tmp = np.empty(n, np.int64)
    left_counts = np.empty(n_labels, np.int64)
    total_counts = np.empty(n_labels, np.int64)
    perm = np.empty(p, np.int64)
    cand = np.empty(p, np.int64)

    cap = feat_out.size
    st_node = np.empty(cap, np.int64)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = n
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_s[top]
        e = st_e[top]
        n_node = e - s
        for l in range(n_labels):
            total_counts[l] = 0
        for r in range(s, e):
            total_counts[y[idx[r]]] += 1
        for l in range(n_labels):
            counts_out[node, l] = total_counts[l]
        maxc = 0
        for l in range(n_labels):
            if total_counts[l] > maxc:
                maxc = total_counts[l]
        if maxc == n_node or n_node < 2 or n_node < 2 * min_node:
            feat_out[node] = -1
            continue

        for t in range(p):
            perm[t] = t
        for t in range(mtry):
            u = t + rand_below(state, p - t)
            swap = perm[t]
            perm[t] = perm[u]
            perm[u] = swap
            cand[t] = perm[t]

        best_feat, best_thr, best_raw = _search_split(
            X, y, idx, s, e, cand, mtry, lam, use_selected, selected,
            min_node, total_counts, vals, rows, left_counts,
        )
        if best_feat < 0:
            feat_out[node] = -1
            continue

        imp_out[best_feat] += (n_node / n) * best_raw
        if use_selected:
            selected[best_feat] = 1

        k = s
        for r in range(s, e):
            if X[idx[r], best_feat] <= best_thr:
                tmp[k] = idx[r]
                k += 1
        kl = k
        for r in range(s, e):
            if not (X[idx[r], best_feat] <= best_thr):
                tmp[k] = idx[r]
                k += 1
        for r in range(s, e):
            idx[r] = tmp[r]

        feat_out[node] = best_feat
        thr_out[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left_out[node] = lid
        right_out[node] = rid
        st_node[top] = rid
        st_s[top] = kl
        st_e[top] = e
        top += 1
        st_node[top] = lid
        st_s[top] = s
        st_e[top] = kl
        top += 1
    return n_nodes


@njit(cache=True, nogil=True)
def _tree_labels(Xq, feat, thr, left, right, leaf_label, out):
    for q in range(Xq.shape[0]):
        node = 0
        f = feat[node]
        while f >= 0:
            if Xq[q, f] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
            f = feat[node]
        out[q] = leaf_label[node]


def best_split(X, y_codes, n_labels, candidates, penalties, selected, min_node: int = 1):
    """Best split of the whole row set; None when no candidate helps.

    ``penalties`` maps feature index to its gain multiplier; features whose
    ``selected`` flag is set keep their raw gain. Returns (feature index,
    threshold, raw gain).
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y_codes, dtype=np.int64))
    n = X.shape[0]
    if n < 2:
        raise ValueError("node must hold at least 2 rows")
    if np.unique(y).size < 2:
        raise ValueError("node must hold at least 2 labels")
    cand = np.ascontiguousarray(np.asarray(candidates, dtype=np.int64))
    lam = np.ascontiguousarray(np.asarray(penalties, dtype=np.float64))
    sel = np.ascontiguousarray(np.asarray(selected, dtype=np.uint8))
    idx = np.arange(n, dtype=np.int64)
    total_counts = np.bincount(y, minlength=n_labels).astype(np.int64)
    feat, thr, raw = _search_split(
        X, y, idx, 0, n, cand, cand.size, lam, True, sel, min_node,
        total_counts, np.empty(n, np.float64), np.empty(n, np.int64),
        np.empty(n_labels, np.int64),
    )
    if feat < 0:
        return None
    return int(feat), float(thr), float(raw)


def _fit_tree(X, y, n_labels, mtry, min_node, lam, use_selected, selected, seed) -> Tree:
    n = X.shape[0]
    cap = 2 * n + 1
    feat = np.empty(cap, np.int32)
    thr = np.zeros(cap, np.float64)
    left = np.zeros(cap, np.int32)
    right = np.zeros(cap, np.int32)
    counts = np.zeros((cap, n_labels), np.int64)
    boot = np.empty(n, np.int64)
    imp = np.zeros(X.shape[1], np.float64)
    n_nodes = _grow_tree(
        X, y, n_labels, mtry, min_node, lam, use_selected, selected, np.uint64(seed),
        feat, thr, left, right, counts, boot, imp,
    )
    counts = counts[:n_nodes].copy()
    return Tree(
        feature=feat[:n_nodes].copy(),
        threshold=thr[:n_nodes].copy(),
        left=left[:n_nodes].copy(),
        right=right[:n_nodes].copy(),
        counts=counts,
        leaf_label=np.argmax(counts, axis=1).astype(np.int16),
        bootstrap=boot,
        importance=imp,
    )


def train_forest(
    features: FeatureMatrix,
    config: ForestConfig,
    workers: int | None = None,
    label_set: tuple[str, ...] | None = None,
) -> ForestModel:
    """Fit the configured variant on a labeled feature matrix.

    Tree i draws from a substream keyed by (seed, tree, i), so rf/grf trees
    may be fitted by parallel workers with identical results. rrf and grrf
    always grow sequentially in tree order because their trees share the
    accreting selected-feature set. ``label_set`` fixes the vote tie-break
    order; it defaults to first appearance in the training labels.
    """
    labels = [l for l in features.labels]
    if any(l is None for l in labels):
        raise ValueError("all rows must be labeled")
    if label_set is None:
        label_set = tuple(dict.fromkeys(labels))
    else:
        label_set = tuple(label_set)
        if not set(labels) <= set(label_set):
            raise ValueError("training labels must be contained in label_set")
    if len(set(labels)) < 2:
        raise ValueError("training requires at least 2 labels")
    n, p = features.rows.shape
    if n < 2:
        raise ValueError("training requires at least 2 rows")
    code_of = {l: i for i, l in enumerate(label_set)}
    y = np.array([code_of[l] for l in labels], dtype=np.int64)
    X = np.ascontiguousarray(features.rows)

    mtry = config.mtry if config.mtry is not None else math.ceil(math.sqrt(p))
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}]")
    gamma = config.resolved_gamma()

    if config.variant in ("grrf", "grf"):
        prelim_cfg = ForestConfig(
            variant="rf",
            ntree=config.ntree,
            mtry=config.mtry,
            lam=config.lam,
            gamma=None,
            min_node=config.min_node,
            seed=kernel_seed(config.seed, _PRELIM_TAG),
        )
        imp_prime = train_forest(features, prelim_cfg, workers=workers, label_set=label_set).importance
    else:
        imp_prime = None

    if config.variant == "rf":
        lam = np.ones(p, np.float64)
        use_selected = False
    elif config.variant == "rrf":
        lam = np.full(p, config.lam, np.float64)
        use_selected = True
    elif config.variant == "grrf":
        lam = (1.0 - gamma) * config.lam + gamma * imp_prime
        use_selected = True
    else:  # grf: penalty applies at every node, no exemption
        lam = (1.0 - gamma) + gamma * imp_prime
        use_selected = False
    lam = np.ascontiguousarray(lam)

    selected = np.zeros(p, np.uint8)
    seeds = [kernel_seed(config.seed, _TREE_TAG, i) for i in range(config.ntree)]

    def fit(i: int) -> Tree:
        return _fit_tree(X, y, len(label_set), mtry, config.min_node, lam,
                         use_selected, selected, seeds[i])

    parallel_ok = config.variant in ("rf", "grf") and workers and workers > 1
    if parallel_ok:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = tuple(pool.map(fit, range(config.ntree)))
    else:
        trees = tuple(fit(i) for i in range(config.ntree))

    imp_mean = np.zeros(p, np.float64)
    for tree in trees:
        imp_mean += tree.importance
    imp_mean /= config.ntree
    peak = imp_mean.max()
    importance = imp_mean / peak if peak > 0 else imp_mean

    oob_votes = np.zeros((n, len(label_set)), np.int64)
    pred_buf = np.empty(n, np.int16)
    for tree in trees:
        inbag = np.zeros(n, dtype=bool)
        inbag[tree.bootstrap] = True
        oob = np.flatnonzero(~inbag)
        if oob.size == 0:
            continue
        _tree_labels(
            X[oob], tree.feature, tree.threshold, tree.left, tree.right,
            tree.leaf_label, pred_buf[: oob.size],
        )
        oob_votes[oob, pred_buf[: oob.size].astype(np.int64)] += 1
    voted = oob_votes.sum(axis=1) > 0
    if voted.any():
        oob_pred = np.argmax(oob_votes[voted], axis=1)
        oob_error = float(np.mean(oob_pred != y[voted]))
    else:
        oob_error = float("nan")

    return ForestModel(
        trees=trees,
        label_set=label_set,
        importance=importance,
        config=config,
        oob_error=oob_error,
        n_features=p,
    )


def _forest_votes(model: ForestModel, rows: np.ndarray) -> np.ndarray:
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if rows.ndim != 2 or rows.shape[1] != model.n_features:
        raise ValueError(f"query must have {model.n_features} features")
    votes = np.zeros((rows.shape[0], len(model.label_set)), np.int64)
    buf = np.empty(rows.shape[0], np.int16)
    for tree in model.trees:
        _tree_labels(rows, tree.feature, tree.threshold, tree.left, tree.right,
                     tree.leaf_label, buf)
        votes[np.arange(rows.shape[0]), buf.astype(np.int64)] += 1
    return votes


def forest_predict_many(model: ForestModel, rows) -> list[str]:
    """Majority vote over trees; ties resolve to the earliest label."""
    votes = _forest_votes(model, rows)
    return [model.label_set[i] for i in np.argmax(votes, axis=1)]


def forest_predict(model: ForestModel, row) -> str:
    return forest_predict_many(model, np.asarray(row, dtype=np.float64).reshape(1, -1))[0]


def feature_importance(model: ForestModel) -> np.ndarray:
    """Max-normalized mean decrease in Gini, one value per feature."""
    return model.importance.copy()
