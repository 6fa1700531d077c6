import numpy as np
import pytest
from cvxopt import matrix, solvers

from reconet.classify import (FeatureTable, accuracy, accuracy_percent, form_groups, lda_train, loocv_accuracy,
                              standardize, svm_objectives, svm_train)
from reconet.errors import DataError

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-12
solvers.options["reltol"] = 1e-12
solvers.options["feastol"] = 1e-12


def _table(x, amp, ids=None):
    x = np.asarray(x, dtype=float)
    ids = ids or tuple(f"sub-{i + 1:02d}" for i in range(len(amp)))
    return FeatureTable(ids, x[:, 0], x[:, 1], np.asarray(amp, dtype=float))


# ------------------------------------------------------------------ groups

def test_form_groups_counts_and_order(rng):
    t = form_groups(_table(rng.normal(size=(21, 2)), np.arange(1, 22)), 9)
    assert t.group.count("high") == 9 and t.group.count("low") == 9 and t.group.count("unassigned") == 3
    assert [i + 1 for i, g in enumerate(t.group) if g == "high"] == list(range(13, 22))
    assert [i + 1 for i, g in enumerate(t.group) if g == "low"] == list(range(1, 10))


def test_form_groups_tie_break():
    amp = np.array([5.0, 1, 2, 3, 4, 5, 5, 6])
    t = form_groups(_table(np.zeros((8, 2)), amp), 3)
    # three 5s compete for two remaining high slots: rows 0 and 5 win over 6
    assert [i for i, g in enumerate(t.group) if g == "high"] == [0, 5, 7]
    amp = np.array([1.0, 1, 1, 9, 9, 9])
    t = form_groups(_table(np.zeros((6, 2)), amp), 2)
    assert [i for i, g in enumerate(t.group) if g == "low"] == [0, 1]
    assert [i for i, g in enumerate(t.group) if g == "high"] == [3, 4]


def test_form_groups_errors():
    with pytest.raises(DataError):
        form_groups(_table(np.zeros((17, 2)), np.arange(17)), 9)
    with pytest.raises(DataError):
        FeatureTable(("a",), [np.nan], [0.0], [1.0])


# --------------------------------------------------------------------- LDA

def test_lda_gaussian_clusters_near_bayes_rate():
    rng = np.random.default_rng(11)
    x = np.vstack([rng.normal(size=(50, 2)), rng.normal(size=(50, 2)) + 4])
    y = np.repeat([0, 1], 50)
    model = lda_train(x, y)
    fresh = np.vstack([rng.normal(size=(5000, 2)), rng.normal(size=(5000, 2)) + 4])
    err = np.mean(model.predict(fresh) != np.repeat([0, 1], 5000))
    # Bayes rate is Phi(-sqrt(32) / 2), about 0.23 %
    assert err < 0.02


def test_lda_closed_form_1d():
    x = np.array([-1.0, 0.0, 1.0, 1.0, 2.0, 3.0])[:, None]  # unit within-class variance
    y = np.array([0, 0, 0, 1, 1, 1])
    model = lda_train(x, y)
    assert model.weights[0] > 0
    assert -model.bias / model.weights[0] == pytest.approx(1.0, abs=1e-9)


def test_lda_identical_means_is_chance(rng):
    x = rng.normal(size=(40, 2))
    x -= x.mean(axis=0)
    x = np.vstack([x, x])
    y = np.repeat([0, 1], 40)
    model = lda_train(x, y)
    assert np.abs(model.weights).max() < 1e-9


def test_lda_affine_invariant_predictions(rng):
    x = np.vstack([rng.normal(size=(15, 2)), rng.normal(size=(15, 2)) + [1.5, 0.5]])
    y = np.repeat([0, 1], 15)
    test = rng.normal(size=(50, 2)) + 0.7
    a = np.array([[2.0, 0.7], [-0.3, 0.9]])
    shift = np.array([5.0, -2.0])
    base = lda_train(x, y).predict(test)
    moved = lda_train(x @ a.T + shift, y).predict(test @ a.T + shift)
    assert np.array_equal(base, moved)


def test_trainers_need_both_classes():
    for train in (lda_train, svm_train):
        with pytest.raises(DataError):
            train(np.zeros((4, 2)), np.zeros(4))


# --------------------------------------------------------------------- SVM

def _qp_oracle(x, y, c):
    """Dense dual QP solved by cvxopt: min 1/2 a'Qa - 1'a, 0 <= a <= C, s'a = 0."""
    s = np.where(y == 1, 1.0, -1.0)
    n = len(s)
    q = (s[:, None] * x) @ (s[:, None] * x).T
    g = np.vstack([-np.eye(n), np.eye(n)])
    h = np.concatenate([np.zeros(n), np.full(n, c)])
    sol = solvers.qp(matrix(q + 1e-12 * np.eye(n)), matrix(-np.ones(n)), matrix(g), matrix(h),
                     matrix(s[None, :]), matrix(0.0))
    alpha = np.array(sol["x"]).ravel()
    return -sol["primal objective"], alpha


def test_svm_symmetric_1d_margin():
    x = np.array([-2.0, -2.0, 2.0, 2.0])[:, None]
    y = np.array([0, 0, 1, 1])
    model = svm_train(x, y)
    assert -model.bias / model.weights[0] == pytest.approx(0.0, abs=1e-6)
    assert model.info["gap"] < 1e-6


def test_svm_objective_matches_qp_oracle():
    rng = np.random.default_rng(4)
    x = np.vstack([rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 1.0])
    y = np.repeat([0, 1], 4)
    model = svm_train(x, y, c=1.0)
    primal, dual = svm_objectives(x, y, model.weights, model.bias, model.info["alpha"], 1.0)
    oracle, _ = _qp_oracle(x, y, 1.0)
    assert dual == pytest.approx(oracle, abs=1e-6)
    assert primal == pytest.approx(oracle, abs=1e-6)


def test_svm_duplicated_points_same_decision():
    rng = np.random.default_rng(8)
    x = np.vstack([rng.normal(size=(6, 2)) - 3, rng.normal(size=(6, 2)) + 3])
    y = np.repeat([0, 1], 6)
    a = svm_train(x, y)
    assert a.info["alpha"].max() < 0.5  # hard-margin solution, so doubling the data leaves it optimal
    b = svm_train(np.vstack([x, x]), np.concatenate([y, y]))
    grid = rng.normal(size=(100, 2)) * 4
    np.testing.assert_allclose(a.decision(grid), b.decision(grid), atol=1e-6)


def test_svm_permutation_invariance(rng):
    x = np.vstack([rng.normal(size=(10, 2)), rng.normal(size=(10, 2)) + 1.2])
    y = np.repeat([0, 1], 10)
    perm = rng.permutation(20)
    a, b = svm_train(x, y), svm_train(x[perm], y[perm])
    grid = rng.normal(size=(50, 2))
    np.testing.assert_allclose(a.decision(grid), b.decision(grid), atol=1e-5)


# ------------------------------------------------------------------- LOOCV

def test_accuracy_examples():
    truth = np.array([1] * 9 + [0] * 9)
    pred = truth.copy()
    pred[[0, 3, 10, 12]] = 1 - pred[[0, 3, 10, 12]]
    assert accuracy(pred, truth) == pytest.approx(14 / 18)
    assert accuracy_percent(pred, truth) == 77.78
    with pytest.raises(DataError):
        accuracy([], [])


@pytest.mark.parametrize("kind", ["lda", "svm"])
def test_loocv_perfectly_separated(kind):
    rng = np.random.default_rng(2)
    amp = np.arange(18, dtype=float)
    x = np.where((amp >= 9)[:, None], 3.0, -3.0) + 0.3 * rng.normal(size=(18, 2))
    res = loocv_accuracy(form_groups(_table(x, amp)), kind)
    assert res.accuracy == 1.0 and res.scheme == "loocv"


@pytest.mark.parametrize("kind", ["lda", "svm"])
def test_loocv_shuffled_labels_chance(kind):
    rng = np.random.default_rng(5)
    acc = []
    for _ in range(100):
        x = rng.normal(size=(18, 2))
        table = form_groups(_table(x, rng.permutation(18).astype(float)))
        acc.append(loocv_accuracy(table, kind).accuracy)
    assert abs(np.mean(acc) - 0.5) <= 0.15


def test_loocv_deterministic_and_records(rng):
    x = rng.normal(size=(21, 2))
    table = form_groups(_table(x, rng.random(21)))
    a = loocv_accuracy(table, "svm")
    b = loocv_accuracy(table, "svm")
    assert np.array_equal(a.predicted, b.predicted)
    recs = a.records(table)
    assert len(recs) == 18 and {r["group"] for r in recs} == {"high", "low"}
    resub = loocv_accuracy(table, "lda", resubstitution=True)
    assert resub.scheme == "resubstitution"
    with pytest.raises(DataError):
        loocv_accuracy(table, "knn")


def test_standardize_uses_training_statistics():
    train = np.array([[0.0, 10.0], [2.0, 30.0]])
    a, b = standardize(train, np.array([[1.0, 20.0]]))
    np.testing.assert_allclose(a.std(axis=0, ddof=1), 1.0)
    np.testing.assert_allclose(b, 0.0)


def test_standardize_rescues_small_scale_features():
    # coherence-scale features: raw C = 1 barely moves w, z-scoring restores separation
    rng = np.random.default_rng(0)
    amp = np.arange(18, dtype=float)
    x = np.where((amp >= 9)[:, None], 0.05, -0.05) + 0.02 * rng.normal(size=(18, 2))
    table = form_groups(_table(x, amp))
    assert loocv_accuracy(table, "svm", standardize_features=True).accuracy >= 0.9
    assert loocv_accuracy(table, "lda").accuracy >= 0.9
