import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from momentumlab.errors import ColumnMismatch, DegenerateInput, UnknownColumn
from momentumlab.features import (
    DEFAULT_GROUP_PLAN,
    FeatureGroupPlan,
    GroupFusion,
    correlation_matrix,
    explained_ratios,
    fit_group_fusion,
    fuse_groups,
    jacobi_eigh,
    pca_fit,
    pca_inverse,
    pca_transform,
    permutation_importance,
    retained_count,
    shapley_sampled,
)
from momentumlab._parallel import substream
from momentumlab.ingest import FeatureMatrix, Stage


def std_fm(data, names=None):
    data = np.asarray(data, dtype=float)
    names = names or [f"x{i}" for i in range(data.shape[1])]
    return FeatureMatrix(names, data, Stage.STANDARDIZED)


def char_poly_roots(cov):
    """Eigenvalues of a 2x2 or 3x3 symmetric matrix from its characteristic polynomial."""
    if cov.shape == (2, 2):
        tr, det = cov[0, 0] + cov[1, 1], cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
        disc = math.sqrt(max(tr * tr / 4 - det, 0.0))
        return np.array([tr / 2 + disc, tr / 2 - disc])
    a = cov
    c2 = -np.trace(a)
    c1 = a[0, 0] * a[1, 1] + a[0, 0] * a[2, 2] + a[1, 1] * a[2, 2] - a[0, 1] ** 2 - a[0, 2] ** 2 - a[1, 2] ** 2
    c0 = -np.linalg.det(a)
    return np.sort(np.roots([1.0, c2, c1, c0]).real)[::-1]


def test_rank_one_data():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    m = pca_fit(std_fm(np.column_stack([x, x])))
    assert np.allclose(m.explained_ratio, [1.0, 0.0], atol=1e-12)
    assert m.retained_k == 1
    pc1 = pca_transform(m, std_fm(np.column_stack([x, x]))).column("pc1")
    expected = (x - x.mean()) * math.sqrt(2)  # signed distance along the diagonal
    assert np.allclose(np.abs(pc1), np.abs(expected)) and (np.allclose(pc1, expected) or np.allclose(pc1, -expected))


def test_hand_2x2_example():
    pts = np.array([(1, 1), (2, 2), (3, 3), (0, 1)], dtype=float)
    m = pca_fit(std_fm(pts))
    cov = np.cov(pts.T, bias=True)
    assert np.allclose(m.eigenvalues, char_poly_roots(cov), atol=1e-10)


def test_retained_count_threshold_examples():
    assert retained_count([0.6, 0.3, 0.1], 0.85) == 2
    assert retained_count([0.85, 0.1, 0.05], 0.85) == 1
    assert retained_count([0.5, 0.2, 0.3], 1.0) == 3


def test_transform_mean_row_is_zero(rng):
    X = rng.normal(size=(30, 4))
    m = pca_fit(std_fm(X))
    mean_row = std_fm(X.mean(axis=0, keepdims=True))
    assert np.allclose(pca_transform(m, mean_row, k=4).data, 0.0, atol=1e-12)


def test_transform_column_mismatch(rng):
    m = pca_fit(std_fm(rng.normal(size=(10, 3))))
    with pytest.raises(ColumnMismatch):
        pca_transform(m, std_fm(rng.normal(size=(10, 3)), ["a", "b", "c"]))


def test_pca_needs_two_rows():
    with pytest.raises(DegenerateInput):
        pca_fit(std_fm([[1.0, 2.0]]))


@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.integers(1, 8))
def test_pca_properties(seed, rows, cols):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, cols)) @ rng.normal(size=(cols, cols))
    fm = std_fm(X)
    m = pca_fit(fm)
    V = m.components
    assert np.allclose(V @ V.T, np.eye(cols), atol=1e-9)
    assert np.all(m.explained_ratio >= -1e-12)
    assert np.all(np.diff(m.explained_ratio) <= 1e-12)
    assert abs(m.cumulative_ratio[-1] - 1.0) <= 1e-9
    back = pca_inverse(m, pca_transform(m, fm, k=cols))
    assert np.allclose(back.data, X, atol=1e-8 * max(1.0, np.abs(X).max()))
    # largest-magnitude entry of each component is non-negative
    for v in V:
        assert v[np.argmax(np.abs(v))] >= 0


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_jacobi_matches_characteristic_polynomial(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A = A + A.T
    vals, _ = jacobi_eigh(A)
    assert np.allclose(np.sort(vals)[::-1], char_poly_roots(A), atol=1e-8)


def test_explained_ratios_zero_variance():
    assert explained_ratios(np.zeros(3)).tolist() == [1.0, 0.0, 0.0]


def _plan_matrix(rng, n=25):
    names = ["p1_points_won", "p2_points_won", "speed_mph", "set_no", "game_no", "point_no",
             "p1_sets", "p2_sets"]
    return std_fm(rng.normal(size=(n, len(names))), names)


def test_group_fusion_table_rows(rng):
    fm = _plan_matrix(rng)
    out = fuse_groups(fm)
    assert out.names == ("points_won_meta", "speed_mph", "match_no_meta", "sets_meta")
    assert out.stage is Stage.REDUCED
    assert np.array_equal(out.column("speed_mph"), fm.column("speed_mph"))


def test_group_fusion_equals_first_pc(rng):
    fm = _plan_matrix(rng)
    sub = fm.select(["set_no", "game_no", "point_no"])
    expect = pca_transform(pca_fit(sub), sub, k=1).column("pc1")
    assert np.allclose(fuse_groups(fm).column("match_no_meta"), expect, atol=1e-10)


def test_group_fusion_empty_plan_and_unknown(rng):
    fm = _plan_matrix(rng)
    assert fuse_groups(fm, FeatureGroupPlan(())).equals(fm)
    with pytest.raises(UnknownColumn):
        fuse_groups(fm.drop(["p2_sets"]))


def test_group_fusion_serialization(rng):
    fm = _plan_matrix(rng)
    gf = fit_group_fusion(fm, DEFAULT_GROUP_PLAN)
    again = GroupFusion.from_dict(gf.to_dict())
    assert again.transform(fm).equals(gf.transform(fm))


def test_correlation_examples():
    fm = FeatureMatrix.from_columns([("x", [1, 2, 3]), ("y", [3, 2, 1])])
    for method in ("pearson", "spearman"):
        c = correlation_matrix(fm, method).matrix
        assert c[0, 1] == pytest.approx(-1.0) and c[0, 0] == 1.0
    fm = FeatureMatrix.from_columns([("x", [1, 2, 3, 4]), ("y", [1, 3, 2, 4])])
    assert correlation_matrix(fm, "spearman").matrix[0, 1] == pytest.approx(0.8)


def test_correlation_zero_variance_flagged():
    fm = FeatureMatrix.from_columns([("x", [1, 2, 3]), ("c", [7, 7, 7])])
    corr = correlation_matrix(fm)
    assert corr.zero_variance == ("c",)
    assert corr.matrix[0, 1] == 0.0 and corr.matrix[1, 1] == 1.0


# integer data keeps the transforms exactly (not just mathematically) monotone
@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=30, unique=True),
       st.lists(st.integers(-1000, 1000), min_size=3, max_size=30))
def test_spearman_monotone_invariance(x, y):
    n = min(len(x), len(y))
    x, y = np.array(x[:n], float), np.array(y[:n], float)
    a = correlation_matrix(FeatureMatrix.from_columns([("x", x), ("y", y)]), "spearman").matrix
    b = correlation_matrix(FeatureMatrix.from_columns([("x", x ** 3 + 5 * x), ("y", 2 * y - 7)]),
                           "spearman").matrix
    assert np.allclose(a, b, atol=1e-9)
    assert np.all(np.abs(a) <= 1.0)


def test_permutation_importance_ignored_feature(rng):
    X = np.column_stack([rng.normal(size=20), np.zeros(20)])
    fm = FeatureMatrix.from_columns([("a", X[:, 0]), ("z", X[:, 1])])
    rep = permutation_importance(lambda A: 2 * A[:, 0], fm, 2 * X[:, 0], "mae", 5, seed=1)
    assert rep.scores[1] == 0.0 and rep.scores[0] > 0


def test_permutation_importance_identity_oracle(rng):
    x = rng.normal(size=15)
    fm = FeatureMatrix.from_columns([("x", x)])
    rep = permutation_importance(lambda A: A[:, 0], fm, x, "mae", 7, seed=3)
    brute = np.mean([np.mean(np.abs(x[substream(3, 0, r).permutation(15)] - x)) for r in range(7)])
    assert rep.scores[0] == pytest.approx(brute, abs=1e-12)
    assert rep.baseline_metric == 0.0


def test_permutation_importance_duplicates(rng):
    a, b = rng.normal(size=20), rng.normal(size=20)
    fm = FeatureMatrix.from_columns([("a", a), ("a_dup", a), ("b", b)])
    model = lambda A: 0.5 * A[:, 0] + 0.5 * A[:, 1] + A[:, 2]  # noqa: E731
    rep = permutation_importance(model, fm, a + b, "mae", 20, seed=0)
    assert max(rep.scores[0], rep.scores[1]) < rep.scores[2]


def test_permutation_importance_deterministic(rng):
    fm = FeatureMatrix.from_columns([("x", rng.normal(size=10)), ("y", rng.normal(size=10))])
    f = lambda A: A.sum(axis=1)  # noqa: E731
    r1 = permutation_importance(f, fm, np.zeros(10), "mse", 4, seed=9)
    r2 = permutation_importance(f, fm, np.zeros(10), "mse", 4, seed=9)
    assert np.array_equal(r1.scores, r2.scores)


def test_shapley_linear_model(rng):
    bg = FeatureMatrix.from_columns([("x1", rng.normal(size=200)), ("x2", rng.normal(size=200))])
    bg = bg.replace(data=bg.data - bg.data.mean(axis=0))
    est = shapley_sampled(lambda A: 2 * A[:, 0], bg, [3.0, -5.0], n_samples=400, seed=0)
    assert est.scores[0] == pytest.approx(6.0, abs=4 * est.std_errors[0] + 0.05)
    assert est.scores[1] == 0.0


def test_shapley_constant_model(rng):
    bg = FeatureMatrix.from_columns([("x1", rng.normal(size=10)), ("x2", rng.normal(size=10))])
    est = shapley_sampled(lambda A: np.full(len(A), 4.0), bg, [1.0, 2.0], 50, seed=2)
    assert np.all(est.scores == 0.0)


@given(st.integers(0, 2**32 - 1))
def test_shapley_efficiency(seed):
    rng = np.random.default_rng(seed)
    bg = FeatureMatrix.from_columns([(f"x{i}", rng.normal(size=30)) for i in range(4)])
    w = rng.normal(size=4)
    f = lambda A: np.tanh(A @ w) + A[:, 0] * A[:, 1]  # noqa: E731
    est = shapley_sampled(f, bg, rng.normal(size=4), n_samples=100, seed=seed)
    assert abs(est.efficiency_gap()) <= 3 * est.sum_std_error + 1e-12
