"""Stratified repeated k-fold evaluation over (feature family, classifier).

One fold plan per run is shared by every grid cell so per-fold predictions
of different classifiers stay comparable in contingency tables. Each cell
draws classifier randomness from a substream keyed by (seed, repeat, fold,
classifier index), making every cell independently reproducible and the
whole grid safe to evaluate on parallel workers.

Dissimilarity features are sliced from one full matrix: by default the
reference columns are the training fold only (leakage-free); ``paper_mode``
switches to columns for every profile in the dataset. Reports record which
reference was used.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dtw import DissimilarityMatrix, DtwConfig, dissimilarity_columns, dissimilarity_matrix
from .features import (
    FAMILIES,
    FAMILY_DISSIMILARITY,
    FeatureMatrix,
    extract_features,
)
from .forest import ForestConfig, forest_predict_many, train_forest
from .neighbors import knn_predict_many, knn_train
from .rng import kernel_seed, substream
from .signals import Dataset
from .svm import KernelSpec, svm_predict_many, svm_train

# "stub" is a deterministic fake (strategy "oracle" or "majority") used to
# validate the harness itself.
_CLASSIFIER_KINDS = ("knn", "svm", "forest", "stub")


@dataclass(frozen=True)
class FoldPlan:
    """Per-repeat fold assignment; stratified within every label."""

    k: int
    repeats: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.assignment, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != self.repeats:
            raise ValueError("assignment must be (repeats, n)")
        arr.setflags(write=False)
        object.__setattr__(self, "assignment", arr)

    def test_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment[repeat] == fold)

    def train_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment[repeat] != fold)


def stratified_folds(labels, k: int, repeats: int, seed: int) -> FoldPlan:
    """Shuffle within each label per repeat and deal round-robin into folds."""
    labels = list(labels)
    if any(l is None for l in labels):
        raise ValueError("all profiles must be labeled")
    if k < 2:
        raise ValueError("k must be >= 2")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    order: list[str] = list(dict.fromkeys(labels))
    by_label = {l: np.flatnonzero(np.array(labels, dtype=object) == l) for l in order}
    for l, idx in by_label.items():
        if idx.size < k:
            raise ValueError(f"label {l!r} has {idx.size} profiles, fewer than k={k}")
    assignment = np.empty((repeats, len(labels)), dtype=np.int64)
    for rep in range(repeats):
        rng = substream(seed, rep)
        for l in order:
            shuffled = by_label[l][rng.permutation(by_label[l].size)]
            for pos, profile_idx in enumerate(shuffled):
                assignment[rep, profile_idx] = pos % k
    return FoldPlan(k=k, repeats=repeats, assignment=assignment, seed=seed)


@dataclass
class CvCell:
    family: str
    classifier: str
    accuracies: np.ndarray
    predictions: list[list[list[str]]]

    def average(self) -> float:
        return float(self.accuracies.mean())

    def fold_means(self) -> np.ndarray:
        return self.accuracies.mean(axis=0)


@dataclass
class CvReport:
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    label_set: tuple[str, ...]
    plan: FoldPlan
    families: tuple[str, ...]
    classifier_names: tuple[str, ...]
    cells: dict[str, CvCell]
    settings: dict = field(default_factory=dict)

    def cell(self, family: str, classifier: str) -> CvCell:
        key = f"{family}/{classifier}"
        if key not in self.cells:
            raise ValueError(f"no grid cell {key!r} in report")
        return self.cells[key]

    def truth(self, repeat: int, fold: int) -> list[str]:
        idx = self.plan.test_indices(repeat, fold)
        return [self.labels[i] for i in idx]


def _kernel_from_spec(spec: dict) -> KernelSpec:
    kind = spec.get("kernel", "rbf")
    if kind == "polynomial":
        kind = "poly"
    return KernelSpec(
        kind=kind,
        gamma=spec.get("gamma"),
        degree=int(spec.get("degree", 3)),
        coef0=float(spec.get("coef0", 0.0)),
    )


def _check_classifier_spec(spec: dict) -> None:
    kind = spec.get("kind")
    if kind not in _CLASSIFIER_KINDS:
        raise ValueError(f"classifier kind must be one of {_CLASSIFIER_KINDS}, got {kind!r}")


def _fit_predict(
    spec: dict,
    train_fm: FeatureMatrix,
    test_rows: np.ndarray,
    test_ids: tuple[str, ...],
    label_set: tuple[str, ...],
    seed: int,
    matrix: DissimilarityMatrix | None,
) -> list[str]:
    kind = spec["kind"]
    if spec.get("seed") is not None:
        seed = int(spec["seed"])  # explicit spec seed pins every fold
    if kind == "knn":
        mode = spec.get("mode", "euclidean_features")
        model = knn_train(
            train_fm,
            k=int(spec.get("k", 1)),
            metric_mode=mode,
            scale=bool(spec.get("scale", False)),
            matrix=matrix if mode == "precomputed" else None,
            label_set=label_set,
        )
        queries = list(test_ids) if mode == "precomputed" else test_rows
        return knn_predict_many(model, queries)
    if kind == "svm":
        model = svm_train(
            train_fm,
            kernel=_kernel_from_spec(spec),
            C=float(spec.get("C", 32.0)),
            tol=float(spec.get("tol", 1e-3)),
            max_passes=int(spec.get("max_passes", 10)),
            seed=seed,
            scale=bool(spec.get("scale", True)),
            label_set=label_set,
        )
        return svm_predict_many(model, test_rows)
    if kind == "forest":
        config = ForestConfig(
            variant=spec.get("variant", "rf"),
            ntree=int(spec.get("ntree", 500)),
            mtry=spec.get("mtry"),
            lam=float(spec.get("lambda", 0.8)),
            gamma=spec.get("gamma"),
            min_node=int(spec.get("min_node", 1)),
            seed=seed,
        )
        model = train_forest(train_fm, config, label_set=label_set)
        return forest_predict_many(model, test_rows)
    raise ValueError(f"unknown classifier kind {kind!r}")


def _run_fold(
    dataset: Dataset,
    family: str,
    spec: dict,
    features: FeatureMatrix | None,
    matrix: DissimilarityMatrix | None,
    paper_mode: bool,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    seed: int,
) -> list[str]:
    ids = dataset.ids()
    labels = dataset.labels()
    label_set = dataset.label_set
    train_ids = tuple(ids[i] for i in train_idx)
    test_ids = tuple(ids[i] for i in test_idx)
    label_map = dict(zip(ids, labels))
    if spec["kind"] == "stub":
        strategy = spec.get("strategy", "oracle")
        if strategy == "oracle":
            return [label_map[t] for t in test_ids]
        if strategy == "majority":
            train_labels = [labels[i] for i in train_idx]
            counts = {l: train_labels.count(l) for l in label_set}
            top = max(counts.values())
            winner = next(l for l in label_set if counts[l] == top)
            return [winner] * len(test_ids)
        raise ValueError(f"unknown stub strategy {strategy!r}")
    if family == FAMILY_DISSIMILARITY:
        if matrix is None:
            raise ValueError("dissimilarity family requires a dissimilarity matrix")
        reference_ids = ids if paper_mode else train_ids
        if not paper_mode:
            assert set(reference_ids) <= set(train_ids)
        train_fm = dissimilarity_columns(matrix, reference_ids, train_ids, label_map)
        test_rows = dissimilarity_columns(matrix, reference_ids, test_ids, label_map).rows
    else:
        if features is None:
            features = extract_features(dataset, family)
        train_fm = FeatureMatrix(
            family=family,
            names=features.names,
            rows=features.rows[train_idx],
            row_ids=train_ids,
            labels=tuple(labels[i] for i in train_idx),
        )
        test_rows = features.rows[test_idx]
    return _fit_predict(spec, train_fm, test_rows, test_ids, label_set, seed, matrix)


def cross_validate(
    dataset: Dataset,
    feature_family: str,
    classifier_spec: dict,
    plan: FoldPlan,
    dtw_matrix: DissimilarityMatrix | None = None,
    paper_mode: bool = False,
    features: FeatureMatrix | None = None,
    role: int = 0,
    name: str | None = None,
) -> CvCell:
    """Evaluate one grid cell over every repeat and fold of the plan.

    ``features`` optionally overrides the extracted derived/proposed matrix
    (it must cover the full dataset); ``role`` feeds the substream key so
    different grid columns stay independent.
    """
    if feature_family not in FAMILIES:
        raise ValueError(f"unknown feature family {feature_family!r}")
    _check_classifier_spec(classifier_spec)
    if any(l is None for l in dataset.labels()):
        raise ValueError("all profiles must be labeled")
    if feature_family == FAMILY_DISSIMILARITY and dtw_matrix is None:
        raise ValueError("dissimilarity family requires a dissimilarity matrix")
    if feature_family != FAMILY_DISSIMILARITY and features is None:
        features = extract_features(dataset, feature_family)
    truth = dataset.labels()
    accuracies = np.zeros((plan.repeats, plan.k), dtype=np.float64)
    predictions: list[list[list[str]]] = []
    for rep in range(plan.repeats):
        rep_preds: list[list[str]] = []
        for fold in range(plan.k):
            test_idx = plan.test_indices(rep, fold)
            train_idx = plan.train_indices(rep, fold)
            preds = _run_fold(
                dataset, feature_family, classifier_spec, features, dtw_matrix,
                paper_mode, train_idx, test_idx,
                seed=kernel_seed(plan.seed, rep, fold, role),
            )
            correct = sum(p == truth[i] for p, i in zip(preds, test_idx))
            accuracies[rep, fold] = correct / test_idx.size
            rep_preds.append(preds)
        predictions.append(rep_preds)
    return CvCell(
        family=feature_family,
        classifier=name or classifier_spec.get("name", classifier_spec["kind"]),
        accuracies=accuracies,
        predictions=predictions,
    )


@dataclass(frozen=True)
class EvalConfig:
    families: tuple[str, ...]
    classifiers: tuple[dict, ...]
    folds: int = 4
    repeats: int = 10
    seed: int = 0
    paper_mode: bool = False
    dtw: DtwConfig = field(default_factory=DtwConfig)

    def __post_init__(self):
        if not self.families:
            raise ValueError("config lists no feature families")
        for fam in self.families:
            if fam not in FAMILIES:
                raise ValueError(f"unknown feature family {fam!r}")
        if not self.classifiers:
            raise ValueError("config lists no classifiers")
        names = [c.get("name") or c.get("kind") for c in self.classifiers]
        if len(set(names)) != len(names):
            raise ValueError("classifier names must be distinct")
        for entry in self.classifiers:
            _check_classifier_spec(entry)

    def classifier_names(self) -> tuple[str, ...]:
        return tuple(c.get("name") or c.get("kind") for c in self.classifiers)


def eval_config_from_dict(data: dict) -> EvalConfig:
    if not isinstance(data, dict):
        raise ValueError("evaluation config must be a JSON object")
    dtw_cfg = data.get("dtw", {})
    return EvalConfig(
        families=tuple(data.get("families", FAMILIES)),
        classifiers=tuple(data["classifiers"]),
        folds=int(data.get("folds", data.get("k", 4))),
        repeats=int(data.get("repeats", 10)),
        seed=int(data.get("seed", 0)),
        paper_mode=bool(data.get("paper_mode", False)),
        dtw=DtwConfig(
            point_norm=dtw_cfg.get("norm", "l2"),
            window=dtw_cfg.get("window"),
        ),
    )


def load_eval_config(path) -> EvalConfig:
    with Path(path).open("r", encoding="utf-8") as fh:
        return eval_config_from_dict(json.load(fh))


def spec_for_family(entry: dict, family: str) -> dict:
    """Effective classifier spec for one family, with by_family overrides."""
    spec = {k: v for k, v in entry.items() if k not in ("by_family",)}
    overrides = entry.get("by_family", {}).get(family, {})
    spec.update(overrides)
    return spec


def run_grid(
    dataset: Dataset,
    config: EvalConfig,
    workers: int | None = None,
    matrix: DissimilarityMatrix | None = None,
) -> CvReport:
    """Evaluate the full (family x classifier) grid under one fold plan."""
    labels = dataset.labels()
    if any(l is None for l in labels):
        raise ValueError("all profiles must be labeled")
    plan = stratified_folds(labels, config.folds, config.repeats, config.seed)
    feature_cache: dict[str, FeatureMatrix] = {}
    for fam in config.families:
        if fam != FAMILY_DISSIMILARITY:
            feature_cache[fam] = extract_features(dataset, fam)
    if FAMILY_DISSIMILARITY in config.families:
        if matrix is None:
            matrix = dissimilarity_matrix(dataset, config.dtw, workers=workers)
        elif matrix.ids != dataset.ids():
            raise ValueError("provided matrix ids do not match the dataset")

    names = config.classifier_names()
    tasks = [
        (fam, ci, rep)
        for fam in config.families
        for ci in range(len(config.classifiers))
        for rep in range(config.repeats)
    ]

    def run_task(task: tuple[str, int, int]):
        fam, ci, rep = task
        spec = spec_for_family(config.classifiers[ci], fam)
        accs = np.zeros(plan.k, dtype=np.float64)
        preds: list[list[str]] = []
        for fold in range(plan.k):
            test_idx = plan.test_indices(rep, fold)
            train_idx = plan.train_indices(rep, fold)
            p = _run_fold(
                dataset, fam, spec, feature_cache.get(fam), matrix,
                config.paper_mode, train_idx, test_idx,
                seed=kernel_seed(plan.seed, rep, fold, ci),
            )
            accs[fold] = sum(pp == labels[i] for pp, i in zip(p, test_idx)) / test_idx.size
            preds.append(p)
        return task, accs, preds

    nworkers = workers or os.cpu_count() or 1
    if nworkers <= 1:
        results = [run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(run_task, tasks))

    cells: dict[str, CvCell] = {}
    by_task = {task: (accs, preds) for task, accs, preds in results}
    for fam in config.families:
        for ci, name in enumerate(names):
            accuracies = np.zeros((config.repeats, plan.k), dtype=np.float64)
            predictions: list[list[list[str]]] = []
            for rep in range(config.repeats):
                accs, preds = by_task[(fam, ci, rep)]
                accuracies[rep] = accs
                predictions.append(preds)
            cells[f"{fam}/{name}"] = CvCell(
                family=fam, classifier=name, accuracies=accuracies, predictions=predictions
            )

    settings = {
        "families": list(config.families),
        "classifiers": [dict(c) for c in config.classifiers],
        "folds": config.folds,
        "repeats": config.repeats,
        "seed": config.seed,
        "paper_mode": config.paper_mode,
        "dissimilarity_reference": "all_profiles" if config.paper_mode else "train_folds",
        "dtw": {"norm": config.dtw.point_norm, "window": config.dtw.window},
    }
    return CvReport(
        ids=dataset.ids(),
        labels=tuple(labels),
        label_set=dataset.label_set,
        plan=plan,
        families=config.families,
        classifier_names=names,
        cells=cells,
        settings=settings,
    )


def five_fold_validated(
    dataset: Dataset,
    feature_family: str,
    candidates: list[dict],
    seed: int,
    dtw_matrix: DissimilarityMatrix | None = None,
    paper_mode: bool = False,
    features: FeatureMatrix | None = None,
) -> dict:
    """5-fold scheme: train on 3 folds, pick a candidate on the validation
    fold, report accuracy on the test fold; rotations averaged.

    Candidate selection maximizes validation accuracy; ties keep the first
    candidate in the list.
    """
    if not candidates:
        raise ValueError("at least one candidate classifier spec is required")
    for spec in candidates:
        _check_classifier_spec(spec)
    labels = dataset.labels()
    if any(l is None for l in labels):
        raise ValueError("all profiles must be labeled")
    plan = stratified_folds(labels, 5, 1, seed)
    assignment = plan.assignment[0]
    if feature_family != FAMILY_DISSIMILARITY and features is None:
        features = extract_features(dataset, feature_family)
    rotations = []
    test_accuracies = []
    for test_fold in range(5):
        val_fold = (test_fold + 1) % 5
        train_idx = np.flatnonzero((assignment != test_fold) & (assignment != val_fold))
        val_idx = np.flatnonzero(assignment == val_fold)
        test_idx = np.flatnonzero(assignment == test_fold)
        val_accs = []
        test_accs = []
        for ci, spec in enumerate(candidates):
            fold_seed = kernel_seed(seed, test_fold, ci)
            val_preds = _run_fold(
                dataset, feature_family, spec, features, dtw_matrix, paper_mode,
                train_idx, val_idx, fold_seed,
            )
            val_accs.append(
                sum(p == labels[i] for p, i in zip(val_preds, val_idx)) / val_idx.size
            )
            test_preds = _run_fold(
                dataset, feature_family, spec, features, dtw_matrix, paper_mode,
                train_idx, test_idx, fold_seed,
            )
            test_accs.append(
                sum(p == labels[i] for p, i in zip(test_preds, test_idx)) / test_idx.size
            )
        chosen = int(np.argmax(val_accs))
        rotations.append(
            {
                "test_fold": test_fold,
                "validation_fold": val_fold,
                "validation_accuracies": [float(a) for a in val_accs],
                "chosen_candidate": chosen,
                "test_accuracy": float(test_accs[chosen]),
            }
        )
        test_accuracies.append(test_accs[chosen])
    return {
        "family": feature_family,
        "rotations": rotations,
        "average_test_accuracy": float(np.mean(test_accuracies)),
    }


def contingency(preds_a, preds_b, truth) -> np.ndarray:
    """2x2 joint-correctness counts [[TT, TF], [FT, FF]] (A rows, B columns)."""
    preds_a = list(preds_a)
    preds_b = list(preds_b)
    truth = list(truth)
    if not (len(preds_a) == len(preds_b) == len(truth)):
        raise ValueError("prediction and truth lengths must match")
    table = np.zeros((2, 2), dtype=np.int64)
    for a, b, t in zip(preds_a, preds_b, truth):
        table[0 if a == t else 1, 0 if b == t else 1] += 1
    return table


def _accuracy_table_text(report: CvReport, family: str) -> str:
    names = report.classifier_names
    header = f"Test accuracy by fold on the {family} features (%)"
    lines = [header, ""]
    width = max(9, max(len(n) for n in names) + 2)
    lines.append("Fold".ljust(10) + "".join(n.rjust(width) for n in names))
    fold_rows = []
    for name in names:
        fold_rows.append(report.cell(family, name).fold_means() * 100.0)
    k = report.plan.k
    for fold in range(k):
        cells = "".join(f"{fold_rows[ci][fold]:{width}.2f}" for ci in range(len(names)))
        lines.append(f"Fold{fold + 1}".ljust(10) + cells)
    averages = "".join(
        f"{report.cell(family, n).average() * 100.0:{width}.2f}" for n in names
    )
    lines.append("Average".ljust(10) + averages)
    return "\n".join(lines)


def _contingency_table_text(report: CvReport, key_a: str, key_b: str, repeat: int) -> str:
    cell_a = report.cells.get(key_a)
    cell_b = report.cells.get(key_b)
    if cell_a is None or cell_b is None:
        missing = key_a if cell_a is None else key_b
        raise ValueError(f"no grid cell {missing!r} in report")
    if not 0 <= repeat < report.plan.repeats:
        raise ValueError(f"repeat must lie in [0, {report.plan.repeats - 1}]")
    k = report.plan.k
    tables = []
    for fold in range(k):
        truth = report.truth(repeat, fold)
        tables.append(
            contingency(cell_a.predictions[repeat][fold], cell_b.predictions[repeat][fold], truth)
        )
    lines = [
        f"Joint correctness of A={key_a} and B={key_b} "
        f"(repeat {repeat + 1} of {report.plan.repeats})",
        "",
        "      " + "".join(f"Fold{f + 1}".center(14) for f in range(k)),
        "      " + "".join("  B=T    B=F  ".center(14) for _ in range(k)),
    ]
    for row, tag in ((0, "A=T"), (1, "A=F")):
        cells = "".join(f"{tables[f][row, 0]:6d} {tables[f][row, 1]:6d} " for f in range(k))
        lines.append(f"{tag}   " + cells)
    return "\n".join(lines)


def report_to_json(report: CvReport) -> dict:
    return {
        "settings": report.settings,
        "ids": list(report.ids),
        "labels": list(report.labels),
        "label_set": list(report.label_set),
        "plan": {
            "k": report.plan.k,
            "repeats": report.plan.repeats,
            "seed": report.plan.seed,
            "assignment": report.plan.assignment.tolist(),
        },
        "families": list(report.families),
        "classifiers": list(report.classifier_names),
        "cells": {
            key: {
                "family": cell.family,
                "classifier": cell.classifier,
                "accuracies": cell.accuracies.tolist(),
                "predictions": cell.predictions,
            }
            for key, cell in report.cells.items()
        },
    }


def report_from_json(data: dict) -> CvReport:
    plan = FoldPlan(
        k=int(data["plan"]["k"]),
        repeats=int(data["plan"]["repeats"]),
        assignment=np.array(data["plan"]["assignment"], dtype=np.int64),
        seed=int(data["plan"]["seed"]),
    )
    cells = {
        key: CvCell(
            family=c["family"],
            classifier=c["classifier"],
            accuracies=np.array(c["accuracies"], dtype=np.float64),
            predictions=c["predictions"],
        )
        for key, c in data["cells"].items()
    }
    return CvReport(
        ids=tuple(data["ids"]),
        labels=tuple(data["labels"]),
        label_set=tuple(data["label_set"]),
        plan=plan,
        families=tuple(data["families"]),
        classifier_names=tuple(data["classifiers"]),
        cells=cells,
        settings=data.get("settings", {}),
    )


def render_report(report: CvReport, tables: list[dict], out_dir) -> tuple[Path, Path]:
    """Write report.json plus a plain-text rendering of the requested tables.

    Each table request is {"kind": "accuracy", "family": ...} or
    {"kind": "contingency", "a": "family/name", "b": "family/name",
    "repeat": 0}. Raises when there is nothing to render.
    """
    if not report.cells:
        raise ValueError("nothing to render: report has no grid cells")
    if not tables:
        raise ValueError("nothing to render: no tables requested")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blocks = []
    for request in tables:
        kind = request.get("kind")
        if kind == "accuracy":
            blocks.append(_accuracy_table_text(report, request["family"]))
        elif kind == "contingency":
            blocks.append(
                _contingency_table_text(
                    report, request["a"], request["b"], int(request.get("repeat", 0))
                )
            )
        else:
            raise ValueError(f"unknown table kind {kind!r}")
    json_path = out_dir / "report.json"
    with json_path.open("w", encoding="utf-8") as fh:
        json.dump(report_to_json(report), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    text_path = out_dir / "tables.txt"
    text_path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
    return json_path, text_path
