"""PCA, correlated-group fusion, correlation matrices and feature importance."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from ._parallel import substream
from .errors import ColumnMismatch, DegenerateInput, InputError, UnknownColumn
from .ingest import FeatureMatrix, Stage
from .learners.metrics import metric_fn

DEFAULT_RETENTION = 0.85
JACOBI_TOL = 1e-10


# ---------------------------------------------------------------------------
# eigendecomposition


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 100):
    """Eigen-decompose a symmetric matrix with cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` unsorted; eigenvectors are columns.
    Sweeps stop once the off-diagonal Frobenius norm is below
    ``tol * max(1, ||a||_F)``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InputError("jacobi_eigh needs a square matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = float(np.sqrt(np.sum(a[offdiag] ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                if apq == 0.0 or abs(apq) < 1e-300 * max(1.0, abs(diff)):
                    continue
                theta = diff / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def _fit_axes(X: np.ndarray):
    """Mean, descending eigenvalues and sign-normalised components (rows)."""
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / X.shape[0]
    vals, vecs = jacobi_eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals = np.clip(vals[order], 0.0, None)
    comps = vecs[:, order].T.copy()
    for i, row in enumerate(comps):
        if row[np.argmax(np.abs(row))] < 0:
            comps[i] = -row
    return mean, vals, comps


def explained_ratios(eigenvalues: np.ndarray) -> np.ndarray:
    total = float(np.sum(eigenvalues))
    if total <= 0.0:
        # no variance at all: attribute "everything" to the first axis
        out = np.zeros(len(eigenvalues))
        out[0] = 1.0
        return out
    return np.asarray(eigenvalues, dtype=float) / total


def retained_count(ratios: Sequence[float], retention: float) -> int:
    """Smallest k whose cumulative explained ratio reaches ``retention``."""
    if not 0.0 < retention <= 1.0:
        raise InputError(f"retention must lie in (0, 1], got {retention}")
    cum = np.cumsum(ratios)
    hit = np.flatnonzero(cum >= retention - 1e-12)
    return int(hit[0]) + 1 if hit.size else len(cum)


@dataclass(frozen=True)
class PcaModel:
    names: tuple[str, ...]
    mean: np.ndarray
    components: np.ndarray  # (n_components, n_features), rows orthonormal
    eigenvalues: np.ndarray
    explained_ratio: np.ndarray
    retained_k: int
    retention: float = DEFAULT_RETENTION

    @property
    def cumulative_ratio(self) -> np.ndarray:
        return np.cumsum(self.explained_ratio)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
            "retained_k": self.retained_k,
            "retention": self.retention,
        }


def pca_fit(fm: FeatureMatrix, retention: float = DEFAULT_RETENTION) -> PcaModel:
    """Eigen-decompose the population covariance of a standardized matrix."""
    if fm.stage != Stage.STANDARDIZED:
        raise InputError(f"pca_fit expects a STANDARDIZED matrix, got {fm.stage.name}")
    if fm.rows < 2:
        raise DegenerateInput(f"PCA needs at least 2 rows, got {fm.rows}")
    if not fm.names:
        raise DegenerateInput("PCA needs at least one column")
    mean, vals, comps = _fit_axes(fm.data)
    ratios = explained_ratios(vals)
    return PcaModel(fm.names, mean, comps, vals, ratios, retained_count(ratios, retention), retention)


def pca_transform(model: PcaModel, fm: FeatureMatrix, k: int | None = None) -> FeatureMatrix:
    """Project onto the first ``k`` (default ``retained_k``) components as pc1..pck."""
    if tuple(fm.names) != model.names:
        raise ColumnMismatch("matrix columns differ from the PCA training columns")
    k = model.retained_k if k is None else k
    if not 1 <= k <= len(model.components):
        raise InputError(f"k must lie in [1, {len(model.components)}]")
    scores = (fm.data - model.mean) @ model.components[:k].T
    return FeatureMatrix([f"pc{i + 1}" for i in range(k)], scores, Stage.REDUCED, fm.row_keys)


def pca_inverse(model: PcaModel, reduced: FeatureMatrix) -> FeatureMatrix:
    k = len(reduced.names)
    data = reduced.data @ model.components[:k] + model.mean
    return FeatureMatrix(model.names, data, Stage.STANDARDIZED, reduced.row_keys)


# ---------------------------------------------------------------------------
# group fusion


@dataclass(frozen=True)
class FeatureGroupPlan:
    groups: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        groups = tuple((name, tuple(members)) for name, members in self.groups)
        object.__setattr__(self, "groups", groups)
        seen: set[str] = set()
        for name, members in groups:
            if not members:
                raise InputError(f"group {name!r} has no members")
            overlap = seen.intersection(members)
            if overlap:
                raise InputError(f"groups overlap on {sorted(overlap)}")
            seen.update(members)

    @property
    def members(self) -> set[str]:
        return {m for _, ms in self.groups for m in ms}

    def passthrough(self, fm: FeatureMatrix) -> list[str]:
        return [n for n in fm.names if n not in self.members]

    def restrict_to(self, names: Sequence[str]) -> "FeatureGroupPlan":
        """Keep only the groups whose members all exist in ``names``."""
        have = set(names)
        return FeatureGroupPlan(tuple(g for g in self.groups if set(g[1]) <= have))

    def validate(self, fm: FeatureMatrix) -> None:
        for _, members in self.groups:
            for m in members:
                if m not in fm.names:
                    raise UnknownColumn(m)


DEFAULT_GROUP_PLAN = FeatureGroupPlan((
    ("points_won_meta", ("p1_points_won", "p2_points_won")),
    ("match_no_meta", ("set_no", "game_no", "point_no")),
    ("sets_meta", ("p1_sets", "p2_sets")),
))


@dataclass(frozen=True)
class GroupFusion:
    plan: FeatureGroupPlan
    input_names: tuple[str, ...]
    axes: Mapping[str, tuple[np.ndarray, np.ndarray]]  # group -> (mean, first component)

    def transform(self, fm: FeatureMatrix) -> FeatureMatrix:
        if tuple(fm.names) != self.input_names:
            raise ColumnMismatch("matrix columns differ from the fitted columns")
        if not self.plan.groups:
            return fm
        owner = {m: name for name, ms in self.plan.groups for m in ms}
        members = dict(self.plan.groups)
        names, cols = [], []
        for n in fm.names:
            if n not in owner:
                names.append(n)
                cols.append(fm.column(n))
            elif members[owner[n]][0] == n:
                group = owner[n]
                mean, axis = self.axes[group]
                block = fm.select(members[group]).data
                names.append(group)
                cols.append((block - mean) @ axis)
        data = np.column_stack(cols) if cols else np.zeros((fm.rows, 0))
        return FeatureMatrix(names, data, Stage.REDUCED, fm.row_keys)

    def to_dict(self) -> dict:
        return {
            "groups": [[name, list(ms)] for name, ms in self.plan.groups],
            "input_names": list(self.input_names),
            "axes": {g: {"mean": m.tolist(), "axis": a.tolist()} for g, (m, a) in self.axes.items()},
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GroupFusion":
        plan = FeatureGroupPlan(tuple((name, tuple(ms)) for name, ms in doc["groups"]))
        axes = {g: (np.asarray(v["mean"], float), np.asarray(v["axis"], float))
                for g, v in doc["axes"].items()}
        return cls(plan, tuple(doc["input_names"]), axes)


def fit_group_fusion(fm: FeatureMatrix, plan: FeatureGroupPlan) -> GroupFusion:
    plan.validate(fm)
    axes = {}
    for name, members in plan.groups:
        mean, _, comps = _fit_axes(fm.select(members).data)
        axes[name] = (mean, comps[0])
    return GroupFusion(plan, tuple(fm.names), axes)


def fuse_groups(fm: FeatureMatrix, plan: FeatureGroupPlan = DEFAULT_GROUP_PLAN,
                retention: float = DEFAULT_RETENTION) -> FeatureMatrix:
    """Replace each group by its first principal component, in place of its first member.

    ``retention`` is accepted for signature symmetry with :func:`pca_fit` and
    ignored: each group always maps to exactly one column.
    """
    return fit_group_fusion(fm, plan).transform(fm)


# ---------------------------------------------------------------------------
# correlation


class CorrelationMethod(str, enum.Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"


@dataclass(frozen=True)
class Correlation:
    names: tuple[str, ...]
    matrix: np.ndarray
    method: CorrelationMethod
    zero_variance: tuple[str, ...]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.names])
            for n, row in zip(self.names, self.matrix):
                w.writerow([n, *(repr(float(v)) for v in row)])


def correlation_matrix(fm: FeatureMatrix, method: str | CorrelationMethod = "pearson") -> Correlation:
    """Pearson or Spearman (average ranks) correlations.

    Zero-variance columns correlate 0 with every other column and are listed in
    ``zero_variance``.
    """
    method = CorrelationMethod(method)
    if fm.stage < Stage.ENCODED:
        raise InputError("correlation needs an encoded matrix")
    if fm.rows < 2:
        raise DegenerateInput("correlation needs at least 2 rows")
    X = fm.data
    if method is CorrelationMethod.SPEARMAN:
        X = np.column_stack([rankdata(X[:, j], method="average") for j in range(X.shape[1])]) \
            if X.shape[1] else X
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(Xc * Xc, axis=0))
    flat = (np.ptp(X, axis=0) == 0) if X.shape[1] else np.zeros(0, bool)
    safe = np.where(flat, 1.0, norms)
    Z = np.where(flat, 0.0, Xc / safe)
    corr = np.clip(Z.T @ Z, -1.0, 1.0)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    zero = tuple(n for n, f in zip(fm.names, flat) if f)
    return Correlation(fm.names, corr, method, zero)


# ---------------------------------------------------------------------------
# importance


Predictor = Callable[[np.ndarray], np.ndarray]


def as_predictor(model) -> Predictor:
    """Accept a fitted model exposing ``predict_array`` or a plain callable."""
    if hasattr(model, "predict_array"):
        return model.predict_array
    if callable(model):
        return lambda X: np.asarray(model(X), dtype=float)
    raise InputError("model must be callable or expose predict_array")


class ImportanceMethod(str, enum.Enum):
    PERMUTATION = "PERMUTATION"
    SHAPLEY_SAMPLED = "SHAPLEY_SAMPLED"


@dataclass(frozen=True)
class ImportanceReport:
    names: tuple[str, ...]
    scores: np.ndarray
    method: ImportanceMethod
    baseline_metric: float
    n_draws: int
    seed: int
    std_errors: np.ndarray | None = None

    def ranking(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.names)), key=lambda i: (-abs(self.scores[i]), i))
        return [(self.names[i], float(self.scores[i])) for i in order]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "score"])
            for n, s in zip(self.names, self.scores):
                w.writerow([n, repr(float(s))])


def permutation_importance(model, fm: FeatureMatrix, target, metric: str = "mae",
                           n_permutations: int = 10, seed: int = 0) -> ImportanceReport:
    """Mean change in ``metric`` when one column is shuffled (shuffled minus baseline).

    Permutation ``r`` of column ``j`` draws from sub-stream ``(seed, j, r)``, so
    results do not depend on evaluation order.
    """
    score = metric_fn(metric)
    if n_permutations < 1:
        raise InputError("n_permutations must be at least 1")
    f = as_predictor(model)
    y = np.asarray(target, dtype=float)
    X = np.array(fm.data, dtype=float)
    baseline = float(score(f(X), y))
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        deltas = []
        for r in range(n_permutations):
            Xp = X.copy()
            Xp[:, j] = X[substream(seed, j, r).permutation(len(X)), j]
            deltas.append(float(score(f(Xp), y)) - baseline)
        out[j] = float(np.mean(deltas))
    return ImportanceReport(fm.names, out, ImportanceMethod.PERMUTATION, baseline,
                            n_permutations, seed)


@dataclass(frozen=True)
class ShapleyEstimate:
    names: tuple[str, ...]
    scores: np.ndarray
    std_errors: np.ndarray
    prediction: float
    background_mean: float  # mean prediction over the whole background
    sum_std_error: float  # standard error of the sum of scores

    def efficiency_gap(self) -> float:
        return float(np.sum(self.scores) - (self.prediction - self.background_mean))

    def report(self, n_samples: int, seed: int) -> ImportanceReport:
        return ImportanceReport(self.names, self.scores, ImportanceMethod.SHAPLEY_SAMPLED,
                                self.background_mean, n_samples, seed, self.std_errors)


def shapley_sampled(model, background: FeatureMatrix, x, n_samples: int = 200,
                    seed: int = 0) -> ShapleyEstimate:
    """Monte Carlo permutation estimate of Shapley values for one row ``x``.

    Each sample draws a feature order and a background row; walking the order,
    features switch from the background value to ``x``'s value and the change in
    prediction is credited to the switched feature.
    """
    if n_samples < 1:
        raise InputError("n_samples must be at least 1")
    if background.rows == 0:
        raise InputError("background must be non-empty")
    if isinstance(x, FeatureMatrix):
        if x.names != background.names or x.rows != 1:
            raise ColumnMismatch("x must be a single row with the background's columns")
        x = x.data[0]
    x = np.asarray(x, dtype=float).ravel()
    d = background.data.shape[1]
    if len(x) != d:
        raise ColumnMismatch(f"x has {len(x)} values for {d} columns")
    f = as_predictor(model)

    # all coalition rows for every sample, evaluated in one batch
    batch = np.empty((n_samples, d + 1, d))
    orders = np.empty((n_samples, d), dtype=int)
    for s in range(n_samples):
        rng = substream(seed, s)
        orders[s] = rng.permutation(d)
        z = background.data[rng.integers(background.rows)].copy()
        batch[s, 0] = z
        for step, j in enumerate(orders[s]):
            z[j] = x[j]
            batch[s, step + 1] = z
    preds = f(batch.reshape(-1, d)).reshape(n_samples, d + 1)
    marg = np.zeros((n_samples, d))
    rows = np.arange(n_samples)[:, None]
    marg[rows, orders] = np.diff(preds, axis=1)
    scores = marg.mean(axis=0)
    ddof = 1 if n_samples > 1 else 0
    se = marg.std(axis=0, ddof=ddof) / np.sqrt(n_samples)
    sum_se = float(np.std(marg.sum(axis=1), ddof=ddof) / np.sqrt(n_samples))
    return ShapleyEstimate(
        background.names, scores, se, float(f(x[None, :])[0]),
        float(np.mean(f(background.data))), sum_se,
    )
