import numpy as np
import pytest
from hypothesis import given, strategies as st

from momentumlab.errors import ColumnMismatch, EmptyTrainingSet, LabelOutOfDomain, LengthMismatch, TooFewRows
from momentumlab.ingest import FeatureMatrix
from momentumlab.learners import metrics
from momentumlab.learners.metrics import CLASSIFICATION, REGRESSION, evaluate
from momentumlab.learners.models import (
    Kind,
    LearnerSpec,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    train,
)
from momentumlab.learners.trees import best_split, grow_tree
from momentumlab.learners.validation import kfold_cv, kfold_indices, split_train_test, tune_rounds


def fm_of(X):
    X = np.asarray(X, dtype=float)
    return FeatureMatrix.from_columns([(f"x{j}", X[:, j]) for j in range(X.shape[1])])


# ---------------------------------------------------------------------------
# splitting and folds


def test_split_sizes_and_determinism():
    fm = fm_of(np.arange(10.0)[:, None])
    s = split_train_test(fm, np.arange(10.0), 0.7, seed=4)
    assert (s.train.rows, s.test.rows) == (7, 3)
    assert sorted(np.concatenate([s.train_rows, s.test_rows]).tolist()) == list(range(10))
    again = split_train_test(fm, np.arange(10.0), 0.7, seed=4)
    assert np.array_equal(s.train_rows, again.train_rows)
    two = split_train_test(fm_of([[0.0], [1.0]]), [0.0, 1.0], 0.5, seed=0)
    assert (two.train.rows, two.test.rows) == (1, 1)


def test_split_too_few_rows():
    with pytest.raises(TooFewRows):
        split_train_test(fm_of([[1.0]]), [1.0], 0.7)


def test_fold_sizes_balanced_remainder():
    sizes = [len(f) for f in kfold_indices(23, 10, seed=0)]
    assert sizes == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]
    assert [len(f) for f in kfold_indices(4, 4, seed=1)] == [1, 1, 1, 1]


@given(st.integers(2, 200), st.integers(2, 20), st.integers(0, 1000))
def test_folds_partition(rows, k, seed):
    if rows < k:
        with pytest.raises(TooFewRows):
            kfold_indices(rows, k, seed)
        return
    folds = kfold_indices(rows, k, seed)
    cat = np.concatenate(folds)
    assert sorted(cat.tolist()) == list(range(rows))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


# ---------------------------------------------------------------------------
# metrics


def test_metric_examples():
    m = evaluate([110.0, 180.0], [100.0, 200.0])
    assert m.mape == pytest.approx(0.10) and m.mae == pytest.approx(15.0)
    perfect = evaluate([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (perfect.mape, perfect.mae, perfect.r2) == (0.0, 0.0, 1.0)
    assert evaluate([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]).r2 == 0.0


def test_mape_excludes_zero_targets():
    m = evaluate([1.0, 110.0], [0.0, 100.0])
    assert m.mape == pytest.approx(0.10) and m.mape_excluded == 1


def test_r2_undefined_flag():
    assert not evaluate([1.0, 2.0], [3.0, 3.0]).r2_defined


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        evaluate([1.0], [1.0, 2.0])


@given(st.integers(0, 2**32 - 1))
def test_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    y = rng.normal(size=n) * 10 + 0.5
    p = y + rng.normal(size=n)
    ape = [abs((a - b) / a) for a, b in zip(y, p) if a != 0]
    assert metrics.mape(p, y)[0] == pytest.approx(sum(ape) / len(ape), abs=1e-12)
    assert metrics.mae(p, y) == pytest.approx(sum(abs(a - b) for a, b in zip(y, p)) / n, abs=1e-12)
    mean = sum(y) / n
    ss_tot = sum((a - mean) ** 2 for a in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, p))
    if ss_tot > 0:
        assert metrics.r2(p, y)[0] == pytest.approx(1 - ss_res / ss_tot, abs=1e-10)
    labels = (rng.random(n) < 0.5).astype(float)
    scores = rng.random(n)
    acc = sum((1.0 if s > 0.5 else 0.0) == l for s, l in zip(scores, labels)) / n
    assert metrics.accuracy(scores, labels) == pytest.approx(acc, abs=1e-12)


# ---------------------------------------------------------------------------
# trees


def impurity(v, criterion):
    if criterion == "gini":
        p = v.mean()
        return len(v) * 2 * p * (1 - p)
    return float(((v - v.mean()) ** 2).sum())


def brute_best_split(X, y, criterion, min_leaf):
    """Scan every feature and midpoint; lowest impurity, then lowest feature/threshold."""
    best = None
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            left = X[:, j] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            cost = impurity(y[left], criterion) + impurity(y[~left], criterion)
            if best is None or cost < best[0] - 1e-9:
                best = (cost, j, t)
    return best


@given(st.integers(0, 2**32 - 1), st.sampled_from(["mse", "gini"]), st.integers(1, 3))
def test_best_split_matches_brute_force(seed, criterion, min_leaf):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 25)), int(rng.integers(1, 4))
    X = rng.integers(0, 6, size=(n, d)).astype(float)
    y = (rng.random(n) < 0.5).astype(float) if criterion == "gini" else rng.normal(size=n)
    got = best_split(X, y, np.arange(d), criterion, min_leaf)
    want = brute_best_split(X, y, criterion, min_leaf)
    if want is None or want[0] >= impurity(y, criterion) - 1e-9:
        assert got is None
        return
    assert got == (want[1], want[2])


def test_tree_constant_target():
    t = grow_tree(np.arange(5.0)[:, None], np.full(5, 2.5))
    assert t.n_nodes == 1 and np.all(t.predict(np.zeros((3, 1))) == 2.5)


# ---------------------------------------------------------------------------
# learners


def test_gbt_exact_two_point_fit():
    spec = LearnerSpec(Kind.GBT, {"num_round": 1, "learning_rate": 1.0, "max_depth": 1})
    m = train(spec, fm_of([[0.0], [1.0]]), [0.0, 1.0])
    assert m.predict(fm_of([[0.0], [1.0]])).tolist() == [0.0, 1.0]
    assert m.train_loss == (0.25, 0.0)


def test_gbt_depth_zero_predicts_mean():
    y = np.array([1.0, 2.0, 6.0])
    spec = LearnerSpec(Kind.GBT, {"num_round": 3, "learning_rate": 1.0, "max_depth": 0})
    m = train(spec, fm_of([[0.0], [1.0], [2.0]]), y)
    assert np.allclose(m.predict(fm_of([[5.0]])), 3.0)


def test_svm_separable():
    spec = LearnerSpec(Kind.SVM_LINEAR, {"C": 1000.0})
    m = train(spec, fm_of([[-1.0], [1.0]]), [0.0, 1.0])
    assert metrics.accuracy(m.predict(fm_of([[-1.0], [1.0]])), [0.0, 1.0]) == 1.0


@pytest.mark.parametrize("kind", list(Kind))
def test_constant_target_constant_prediction(kind, rng):
    X = rng.normal(size=(20, 3))
    task = CLASSIFICATION
    m = train(LearnerSpec(kind, {}, 0, task), fm_of(X), np.ones(20))
    p = m.predict(fm_of(rng.normal(size=(5, 3))))
    assert np.all(p > 0.5)
    if kind in (Kind.RANDOM_FOREST,):
        assert np.all(p == 1.0)
    if kind is Kind.GBT:
        reg = train(LearnerSpec(kind, {}, 0, REGRESSION), fm_of(X), np.full(20, 7.0))
        assert np.all(reg.predict(fm_of(X)) == 7.0)


@pytest.mark.parametrize("kind", list(Kind))
def test_empty_prediction_and_mismatch(kind, rng):
    m = train(LearnerSpec(kind, {}, 0, CLASSIFICATION), fm_of(rng.normal(size=(10, 2))),
              (np.arange(10) % 2).astype(float))
    assert m.predict(fm_of(np.zeros((0, 2)))).shape == (0,)
    with pytest.raises(ColumnMismatch):
        m.predict(FeatureMatrix.from_columns([("a", [1.0]), ("b", [2.0])]))


def test_training_errors():
    with pytest.raises(LabelOutOfDomain):
        train(LearnerSpec(Kind.SVM_LINEAR), fm_of([[1.0], [2.0]]), [0.0, 2.0])
    with pytest.raises(EmptyTrainingSet):
        train(LearnerSpec(Kind.GBT), fm_of(np.zeros((0, 1))), [])


@given(st.integers(0, 2**32 - 1))
def test_gbt_loss_non_increasing(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.normal(size=40)
    m = train(LearnerSpec(Kind.GBT, {"num_round": 30, "learning_rate": 0.3}), fm_of(X), y)
    assert np.all(np.diff(m.train_loss) <= 1e-12)
    assert len(m.train_loss) == 31


def test_rf_single_tree_equals_cart(rng):
    X, y = rng.normal(size=(50, 4)), rng.normal(size=50)
    spec = LearnerSpec(Kind.RANDOM_FOREST, {"n_trees": 1, "bootstrap": False, "feature_subsample": 1.0,
                                            "max_depth": 5})
    m = train(spec, fm_of(X), y)
    tree = grow_tree(X, y, criterion="mse", max_depth=5)
    Xt = rng.normal(size=(30, 4))
    assert np.array_equal(m.predict(fm_of(Xt)), tree.predict(Xt))


@pytest.mark.parametrize("kind", list(Kind))
def test_bit_deterministic_and_round_trip(kind, rng, tmp_path):
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] > 0).astype(float)
    spec = LearnerSpec(kind, {}, 11, CLASSIFICATION)
    a, b = train(spec, fm_of(X), y), train(spec, fm_of(X), y)
    assert model_to_dict(a) == model_to_dict(b)
    save_model(a, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.predict(fm_of(X)), a.predict(fm_of(X)))
    assert model_to_dict(model_from_dict(model_to_dict(a))) == model_to_dict(a)


def test_rf_seed_changes_forest(rng):
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    a = train(LearnerSpec(Kind.RANDOM_FOREST, {"n_trees": 5}, 1), fm_of(X), y)
    b = train(LearnerSpec(Kind.RANDOM_FOREST, {"n_trees": 5}, 2), fm_of(X), y)
    assert not np.array_equal(a.predict(fm_of(X)), b.predict(fm_of(X)))


# ---------------------------------------------------------------------------
# cross-validation and tuning


def test_kfold_cv_constant_labels_rf(rng):
    fm = fm_of(rng.normal(size=(30, 2)))
    res = kfold_cv(LearnerSpec(Kind.RANDOM_FOREST, {"n_trees": 5}, 0, CLASSIFICATION), fm, np.ones(30), k=10)
    assert res.fold_scores == (1.0,) * 10 and res.mean == 1.0


def test_kfold_cv_mean_is_fold_mean(rng):
    X = rng.normal(size=(30, 2))
    res = kfold_cv(LearnerSpec(Kind.LOGISTIC), fm_of(X), (X[:, 0] > 0).astype(float), k=5, seed=3)
    assert res.mean == pytest.approx(np.mean(res.fold_scores), abs=1e-15)
    assert len(res.fold_scores) == 5


def test_tune_rounds_cases(rng):
    X = rng.uniform(-2, 2, size=(60, 2))
    y = np.sin(2 * X[:, 0]) * X[:, 1]
    spec = LearnerSpec(Kind.GBT, {"learning_rate": 0.3})
    fm = fm_of(X)
    best, res = tune_rounds(spec, fm, y, [7], k=3)
    assert best == 7 and list(res) == [7]
    best, res = tune_rounds(spec, fm, y, [200, 1], k=5)
    assert best == 200 and res[200].mean > res[1].mean
    # depth 0 trees ignore the features: equal CV scores, smaller count wins the tie
    flat = LearnerSpec(Kind.GBT, {"learning_rate": 1.0, "max_depth": 0})
    best, res = tune_rounds(flat, fm, y, [5, 3], k=5)
    assert res[3].mean == pytest.approx(res[5].mean, abs=1e-12) and best == 3
