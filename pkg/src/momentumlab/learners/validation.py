"""Random train/test splits, k-fold cross-validation and round tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .._parallel import ordered_map
from ..errors import InputError, LengthMismatch, TooFewRows
from ..ingest import FeatureMatrix
from .metrics import CLASSIFICATION, HIGHER_IS_BETTER, metric_fn
from .models import Kind, LearnerSpec


class Recipe(Protocol):
    """Anything that can be fitted: a LearnerSpec or a fusion recipe."""

    def fit(self, fm: FeatureMatrix, target): ...


@dataclass(frozen=True)
class Split:
    train: FeatureMatrix
    train_target: np.ndarray
    test: FeatureMatrix
    test_target: np.ndarray
    train_rows: np.ndarray
    test_rows: np.ndarray


def _target(fm: FeatureMatrix, target) -> np.ndarray:
    y = np.asarray(target, dtype=float).ravel()
    if len(y) != fm.rows:
        raise LengthMismatch(f"{len(y)} targets for {fm.rows} rows")
    return y


def split_rows(rows: int, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < ratio < 1.0:
        raise InputError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    # tolerance keeps 0.7 * 10 from flooring to 6 on representation error
    n_train = math.floor(rows * ratio + 1e-9)
    if rows < 2 or n_train < 1 or n_train >= rows:
        raise TooFewRows(f"cannot split {rows} rows at ratio {ratio}")
    perm = np.random.default_rng(seed).permutation(rows)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_train_test(fm: FeatureMatrix, target, ratio: float = 0.7, seed: int = 0) -> Split:
    """Disjoint random partition with floor(rows * ratio) training rows."""
    y = _target(fm, target)
    tr, te = split_rows(fm.rows, ratio, seed)
    return Split(fm.take(tr), y[tr], fm.take(te), y[te], tr, te)


def kfold_indices(rows: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle once, then cut into k folds; the first rows % k folds get one extra row."""
    if k < 2:
        raise InputError("k must be at least 2")
    if rows < k:
        raise TooFewRows(f"{rows} rows cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(rows)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass(frozen=True)
class CvResult:
    fold_scores: tuple[float, ...]
    mean: float
    seed: int
    metric: str = "accuracy"

    def to_dict(self) -> dict:
        return {"fold_scores": list(self.fold_scores), "mean": self.mean, "seed": self.seed,
                "metric": self.metric}


def default_metric(recipe) -> str:
    task = getattr(recipe, "resolved_task", CLASSIFICATION)
    return "accuracy" if task == CLASSIFICATION else "r2"


def kfold_cv(recipe: Recipe, fm: FeatureMatrix, target, k: int = 10, metric: str | None = None,
             seed: int = 0, workers: int | None = None) -> CvResult:
    """Each fold held out once; scores listed in fold order."""
    y = _target(fm, target)
    metric = metric or default_metric(recipe)
    score = metric_fn(metric)
    folds = kfold_indices(fm.rows, k, seed)
    all_rows = np.arange(fm.rows)

    def run(fold: np.ndarray) -> float:
        tr = np.setdiff1d(all_rows, fold, assume_unique=True)
        model = recipe.fit(fm.take(tr), y[tr])
        return float(score(model.predict(fm.take(fold)), y[fold]))

    scores = tuple(ordered_map(run, folds, workers))
    return CvResult(scores, float(np.mean(scores)), seed, metric)


def better(metric: str, a: float, b: float) -> bool:
    """True if score ``a`` strictly beats ``b`` under ``metric``'s direction."""
    return a > b if metric in HIGHER_IS_BETTER else a < b


def tune_rounds(spec: LearnerSpec, fm: FeatureMatrix, target, candidates: Sequence[int],
                k: int = 10, seed: int = 0, metric: str | None = None) -> tuple[int, dict[int, CvResult]]:
    """Exhaustive CV search over GBT ``num_round``; ties go to the smaller count."""
    if spec.kind is not Kind.GBT:
        raise InputError("tune_rounds applies to GBT specs")
    if not candidates:
        raise InputError("no candidate round counts")
    metric = metric or default_metric(spec)
    results = {}
    for n in sorted(set(int(c) for c in candidates)):
        results[n] = kfold_cv(spec.with_params(num_round=n), fm, target, k, metric, seed)
    best = None
    for n, res in results.items():  # ascending, so strict comparison keeps the smaller on ties
        if best is None or better(metric, res.mean, results[best].mean):
            best = n
    return best, results
