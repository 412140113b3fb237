"""Weighted-average and stacked fusion of three binary classifiers."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ColumnMismatch, InputError, InvariantViolation, NonPositiveAccuracy, TooFewRows
from .ingest import FeatureMatrix, Stage
from .learners.metrics import CLASSIFICATION, hard_labels
from .learners.models import Kind, LearnerSpec, TrainedModel, model_from_dict, model_to_dict, train
from .learners.validation import CvResult, kfold_cv, kfold_indices

FUSION_FORMAT = "momentumlab/fusion"
FORMAT_VERSION = 1


class FusionMode(str, enum.Enum):
    WEIGHTED_AVERAGE = "WEIGHTED_AVERAGE"
    STACKING = "STACKING"


def default_specs(seed: int = 0, **overrides) -> tuple[LearnerSpec, LearnerSpec, LearnerSpec]:
    """SVM, random forest and GBT classifiers; ``overrides`` maps kind -> hyperparameters."""
    return tuple(
        LearnerSpec(kind, overrides.get(kind.name, {}), seed, CLASSIFICATION)
        for kind in (Kind.SVM_LINEAR, Kind.RANDOM_FOREST, Kind.GBT)
    )


def weights_from_accuracy(accuracies: Sequence[float]) -> np.ndarray:
    """Normalise accuracies to weights: w_i = a_i / sum(a)."""
    a = np.asarray(accuracies, dtype=float).ravel()
    if a.size == 0:
        raise InputError("need at least one accuracy")
    if not np.all((a > 0) & (a <= 1)):
        raise NonPositiveAccuracy(f"accuracies must lie in (0, 1], got {a.tolist()}")
    return a / a.sum()


def meta_feature_names(n: int) -> tuple[str, ...]:
    return tuple(f"base{i}" for i in range(n))


@dataclass(frozen=True)
class OutOfFold:
    """Leak-free meta-features with the fold bookkeeping that produced them."""

    meta_features: np.ndarray  # (rows, n_base)
    folds: tuple[np.ndarray, ...]
    train_rows: tuple[np.ndarray, ...]  # rows each fold's base models were fitted on

    def fold_of_row(self) -> np.ndarray:
        out = np.empty(len(self.meta_features), dtype=int)
        for f, rows in enumerate(self.folds):
            out[rows] = f
        return out


@dataclass(frozen=True)
class FusionModel:
    base: tuple[TrainedModel, ...]
    weights: np.ndarray
    mode: FusionMode
    meta: TrainedModel | None = None
    cv: tuple[CvResult, ...] = ()
    oof: OutOfFold | None = field(default=None, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.base) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvariantViolation(f"fusion weights must be non-negative and sum to 1, got {w}")
        if self.mode is FusionMode.STACKING:
            if self.meta is None or len(self.meta.feature_names) != len(self.base):
                raise InvariantViolation("stacking needs a meta-model over the base scores")
        names = {m.feature_names for m in self.base}
        if len(names) != 1:
            raise InvariantViolation("base models disagree on feature columns")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.base[0].feature_names

    def base_scores(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([m.predict_array(X) for m in self.base])

    def predict_array(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            return np.zeros(0)
        scores = self.base_scores(X)
        if self.mode is FusionMode.WEIGHTED_AVERAGE:
            return np.clip(scores @ self.weights, 0.0, 1.0)
        return self.meta.predict_array(scores)

    def predict(self, fm: FeatureMatrix) -> np.ndarray:
        if tuple(fm.names) != self.feature_names:
            raise ColumnMismatch("feature columns differ from the training columns")
        return self.predict_array(fm.data)


def fusion_predict(model: FusionModel, fm: FeatureMatrix) -> np.ndarray:
    return model.predict(fm)


def _as_classifiers(specs: Sequence[LearnerSpec]) -> list[LearnerSpec]:
    if not specs:
        raise InputError("need at least one base learner")
    return [replace(s, task=CLASSIFICATION) for s in specs]


Scorer = Callable[[LearnerSpec, FeatureMatrix, np.ndarray, int, int], CvResult]


def _cv_accuracy(spec, fm, target, k, seed) -> CvResult:
    return kfold_cv(spec, fm, target, k, "accuracy", seed)


def fit_weighted(specs: Sequence[LearnerSpec], fm: FeatureMatrix, target, k: int = 10,
                 seed: int = 0, scorer: Scorer | None = None) -> FusionModel:
    """Weights from mean k-fold CV accuracy, then refit every base on all rows."""
    specs = _as_classifiers(specs)
    y = np.asarray(target, dtype=float)
    scorer = scorer or _cv_accuracy
    cv = tuple(scorer(s, fm, y, k, seed) for s in specs)
    weights = weights_from_accuracy([c.mean for c in cv])
    base = tuple(train(s, fm, y) for s in specs)
    return FusionModel(base, weights, FusionMode.WEIGHTED_AVERAGE, None, cv)


def out_of_fold_predictions(specs: Sequence[LearnerSpec], fm: FeatureMatrix, target, k: int = 10,
                            seed: int = 0) -> OutOfFold:
    """Each row's meta-features come from base models fitted without that row."""
    specs = _as_classifiers(specs)
    y = np.asarray(target, dtype=float)
    if fm.rows < 2 * k:
        raise TooFewRows(f"stacking with k={k} needs at least {2 * k} rows, got {fm.rows}")
    folds = kfold_indices(fm.rows, k, seed)
    all_rows = np.arange(fm.rows)
    meta = np.zeros((fm.rows, len(specs)))
    train_rows = []
    for fold in folds:
        tr = np.setdiff1d(all_rows, fold, assume_unique=True)
        train_rows.append(tr)
        for j, spec in enumerate(specs):
            meta[fold, j] = train(spec, fm.take(tr), y[tr]).predict(fm.take(fold))
    return OutOfFold(meta, tuple(folds), tuple(train_rows))


def default_meta_spec(seed: int = 0) -> LearnerSpec:
    return LearnerSpec(Kind.LOGISTIC, {}, seed, CLASSIFICATION)


def fit_stacking(specs: Sequence[LearnerSpec], fm: FeatureMatrix, target, k: int = 10,
                 seed: int = 0, meta_spec: LearnerSpec | None = None) -> FusionModel:
    """Logistic meta-model over out-of-fold base scores; bases refit on all rows."""
    specs = _as_classifiers(specs)
    y = np.asarray(target, dtype=float)
    oof = out_of_fold_predictions(specs, fm, y, k, seed)
    meta_fm = FeatureMatrix(meta_feature_names(len(specs)), oof.meta_features, Stage.ENCODED)
    meta = train(meta_spec or default_meta_spec(seed), meta_fm, y)
    base = tuple(train(s, fm, y) for s in specs)
    # informational only in STACKING mode: pooled out-of-fold accuracy per base
    oof_acc = [float(np.mean(hard_labels(oof.meta_features[:, j]) == y)) for j in range(len(specs))]
    if min(oof_acc) > 0:
        weights = weights_from_accuracy(oof_acc)
    else:
        weights = np.full(len(specs), 1.0 / len(specs))
    return FusionModel(base, weights, FusionMode.STACKING, meta, (), oof)


@dataclass(frozen=True)
class FusionRecipe:
    """Fit-able fusion configuration, usable wherever a LearnerSpec is."""

    mode: FusionMode
    specs: tuple[LearnerSpec, ...]
    k: int = 10
    seed: int = 0

    resolved_task = CLASSIFICATION

    def fit(self, fm: FeatureMatrix, target) -> FusionModel:
        if FusionMode(self.mode) is FusionMode.WEIGHTED_AVERAGE:
            return fit_weighted(self.specs, fm, target, self.k, self.seed)
        return fit_stacking(self.specs, fm, target, self.k, self.seed)

    def to_dict(self) -> dict:
        return {"mode": FusionMode(self.mode).value, "specs": [s.to_dict() for s in self.specs],
                "k": self.k, "seed": self.seed}


# ---------------------------------------------------------------------------
# persistence


def fusion_to_dict(model: FusionModel) -> dict:
    return {
        "format": FUSION_FORMAT,
        "version": FORMAT_VERSION,
        "mode": model.mode.value,
        "weights": model.weights.tolist(),
        "cv": [c.to_dict() for c in model.cv],
        "base": [model_to_dict(m) for m in model.base],
        "meta": model_to_dict(model.meta) if model.meta is not None else None,
    }


def fusion_from_dict(doc: Mapping) -> FusionModel:
    if doc.get("format") != FUSION_FORMAT:
        raise InputError(f"not a fusion document (format={doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported fusion document version {doc.get('version')!r}")
    cv = tuple(
        CvResult(tuple(c["fold_scores"]), c["mean"], c["seed"], c.get("metric", "accuracy"))
        for c in doc.get("cv", ())
    )
    return FusionModel(
        tuple(model_from_dict(m) for m in doc["base"]),
        np.asarray(doc["weights"], dtype=float),
        FusionMode(doc["mode"]),
        model_from_dict(doc["meta"]) if doc.get("meta") else None,
        cv,
    )


def save_fusion(model: FusionModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(fusion_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")


def load_fusion(path: str | Path) -> FusionModel:
    return fusion_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
