import math

import numpy as np
import pytest

from phytopulse import KernelSpec, kernel_eval, svm_predict, svm_predict_many, svm_train, svm_train_binary
from phytopulse.features import FeatureMatrix
from phytopulse.svm import BinaryMachine, SvmModel, machine_decision


def fm_from(rows, labels):
    rows = np.asarray(rows, dtype=np.float64)
    return FeatureMatrix(
        family="dissimilarity",
        names=tuple(f"f{j}" for j in range(rows.shape[1])),
        rows=rows,
        row_ids=tuple(f"r{i}" for i in range(rows.shape[0])),
        labels=tuple(labels),
    )


def blobs(n_per=12, centers=((0.0, 0.0), (6.0, 6.0), (-6.0, 6.0)), seed=3, spread=0.4):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for ci, center in enumerate(centers):
        rows.extend(rng.normal(center, spread, size=(n_per, len(center))).tolist())
        labels.extend([f"c{ci}"] * n_per)
    return np.array(rows), labels


class TestKernels:
    def test_rbf_identical_rows(self):
        spec = KernelSpec("rbf", gamma=0.37)
        x = np.array([1.0, -2.0, 0.5])
        assert kernel_eval(spec, x, x) == 1.0

    def test_poly_direct(self):
        spec = KernelSpec("poly", gamma=1.0, degree=3, coef0=0.0)
        assert kernel_eval(spec, np.array([1.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(8.0)

    def test_rbf_paper_gamma(self):
        spec = KernelSpec("rbf", gamma=0.01)
        x = np.zeros(4)
        z = np.array([10.0, 0.0, 0.0, 0.0])  # squared distance 100
        assert kernel_eval(spec, x, z) == pytest.approx(math.exp(-1.0), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(KernelSpec("rbf", gamma=1.0), np.zeros(2), np.zeros(3))

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            KernelSpec("sigmoid")
        with pytest.raises(ValueError):
            KernelSpec("rbf", gamma=-1.0)
        with pytest.raises(ValueError):
            KernelSpec("poly", gamma=1.0, degree=0)


class TestBinaryTraining:
    def test_two_point_midpoint_decision(self):
        machine = svm_train_binary(
            np.array([[-1.0], [1.0]]),
            np.array([-1.0, 1.0]),
            KernelSpec("poly", gamma=1.0, degree=1, coef0=0.0),
            C=1e6,
        )
        assert machine_decision(machine, np.array([[0.0]]))[0] == pytest.approx(0.0, abs=1e-9)
        assert machine_decision(machine, np.array([[1.0]]))[0] == pytest.approx(1.0, abs=1e-6)

    def test_duplicated_point_with_both_labels(self):
        rows = np.array([[2.0], [2.0], [0.0], [4.0]])
        y = np.array([1.0, -1.0, -1.0, 1.0])
        machine = svm_train_binary(rows, y, KernelSpec("rbf", gamma=0.5), C=5.0)
        dec = machine_decision(machine, np.array([[2.0]]))[0]
        assert abs(dec) < 1.0

    def test_dual_constraint_holds(self):
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(40, 3))
        y = np.where(rows[:, 0] + 0.3 * rng.normal(size=40) > 0, 1.0, -1.0)
        if np.unique(y).size < 2:
            y[0] = -y[0]
        machine = svm_train_binary(rows, y, KernelSpec("rbf", gamma=0.7), C=3.0, seed=9)
        assert abs(float(np.sum(machine.alpha * machine.support_y))) <= 1e-9
        assert np.all(machine.alpha >= 0.0)
        assert np.all(machine.alpha <= 3.0 + 1e-12)

    def test_single_label_rejected(self):
        with pytest.raises(ValueError, match="both labels"):
            svm_train_binary(np.zeros((3, 1)), np.ones(3), KernelSpec("rbf", gamma=1.0), C=1.0)


class TestMulticlass:
    def test_seven_labels_give_21_machines(self):
        rng = np.random.default_rng(1)
        rows, labels = [], []
        for ci in range(7):
            rows.extend(rng.normal(3.0 * ci, 0.2, size=(6, 2)).tolist())
            labels.extend([f"s{ci}"] * 6)
        model = svm_train(fm_from(rows, labels), KernelSpec("rbf", gamma=0.5), C=10.0)
        assert len(model.machines) == 21

    def test_two_labels_reduce_to_sign(self):
        rows, labels = blobs(centers=((0.0, 0.0), (5.0, 5.0)))
        model = svm_train(fm_from(rows, labels), KernelSpec("rbf", gamma=0.5), C=10.0)
        assert len(model.machines) == 1
        machine = model.machines[0]
        scaled = (rows - model.scaling[0]) / model.scaling[1]
        dec = machine_decision(machine, scaled)
        expected = [model.label_set[machine.pos_index if d > 0 else machine.neg_index] for d in dec]
        assert svm_predict_many(model, rows) == expected

    def test_separable_training_accuracy_100(self):
        rows, labels = blobs()
        model = svm_train(fm_from(rows, labels), KernelSpec("rbf", gamma=1.0), C=1e4)
        assert svm_predict_many(model, rows) == labels
        for machine in model.machines:
            assert np.all(machine.alpha >= 0.0)
            assert np.all(machine.alpha <= 1e4 + 1e-9)
            assert abs(float(np.sum(machine.alpha * machine.support_y))) <= 1e-9

    def test_deep_interior_point(self):
        rows, labels = blobs()
        model = svm_train(fm_from(rows, labels), KernelSpec("rbf", gamma=1.0), C=100.0)
        assert svm_predict(model, np.array([6.0, 6.0])) == "c1"

    def test_totality(self):
        rows, labels = blobs()
        model = svm_train(fm_from(rows, labels), KernelSpec("rbf", gamma=1.0), C=10.0)
        rng = np.random.default_rng(5)
        for q in rng.normal(0, 10, size=(25, 2)):
            assert svm_predict(model, q) in model.label_set

    def test_permutation_invariant_predictions(self):
        rows, labels = blobs(spread=0.3)
        model = svm_train(fm_from(rows, labels), KernelSpec("rbf", gamma=1.0), C=50.0, seed=4)
        rng = np.random.default_rng(11)
        perm = rng.permutation(len(labels))
        model_p = svm_train(
            fm_from(rows[perm], [labels[i] for i in perm]),
            KernelSpec("rbf", gamma=1.0),
            C=50.0,
            seed=4,
            label_set=model.label_set,
        )
        queries = rng.normal(0, 6, size=(30, 2))
        assert svm_predict_many(model, queries) == svm_predict_many(model_p, queries)

    def test_fewer_than_two_labels_rejected(self):
        with pytest.raises(ValueError, match="2 labels"):
            svm_train(fm_from([[0.0], [1.0]], ["a", "a"]), KernelSpec("rbf", gamma=1.0), C=1.0)

    def test_standardization_constant_feature(self):
        rows = np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [4.0, 7.0]])
        model = svm_train(
            fm_from(rows, ["a", "a", "b", "b"]), KernelSpec("rbf", gamma=1.0), C=10.0
        )
        assert model.scaling[1][1] == 1.0
        assert svm_predict(model, np.array([1.2, 7.0])) == "a"
        assert svm_predict(model, np.array([3.9, 7.0])) == "b"

    def test_circular_vote_tie_resolved_by_decision_strength(self):
        # three constant-decision machines voting a 3-cycle; label c amasses
        # the largest absolute decision value and must win
        spec = KernelSpec("rbf", gamma=1.0)
        empty = np.zeros((0, 2))
        none = np.zeros(0)
        machines = (
            BinaryMachine(0, 1, empty, none, none, none, bias=0.5, kernel=spec, C=1.0),
            BinaryMachine(1, 2, empty, none, none, none, bias=0.3, kernel=spec, C=1.0),
            BinaryMachine(0, 2, empty, none, none, none, bias=-0.9, kernel=spec, C=1.0),
        )
        model = SvmModel(
            label_set=("a", "b", "c"), machines=machines, kernel=spec, C=1.0, scaling=None
        )
        assert svm_predict(model, np.zeros(2)) == "c"
