"""Base learners: linear SVM, random forest, gradient-boosted trees, logistic."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .._parallel import ordered_map, substream
from ..errors import ColumnMismatch, EmptyTrainingSet, InputError, LabelOutOfDomain, LengthMismatch
from ..ingest import FeatureMatrix
from .metrics import CLASSIFICATION, REGRESSION
from .trees import Tree, grow_tree

MODEL_FORMAT = "momentumlab/model"
FORMAT_VERSION = 1


class Kind(str, enum.Enum):
    SVM_LINEAR = "SVM_LINEAR"
    RANDOM_FOREST = "RANDOM_FOREST"
    GBT = "GBT"
    LOGISTIC = "LOGISTIC"


DEFAULTS: dict[Kind, dict[str, Any]] = {
    Kind.SVM_LINEAR: {"C": 1.0, "epochs": 200, "learning_rate": 0.1},
    Kind.RANDOM_FOREST: {
        "n_trees": 50,
        "max_depth": 8,
        "min_samples_leaf": 1,
        "feature_subsample": None,  # None -> sqrt(n_features)
        "bootstrap": True,
    },
    Kind.GBT: {"num_round": 126, "learning_rate": 0.1, "max_depth": 4, "min_samples_leaf": 1},
    Kind.LOGISTIC: {"l2_penalty": 1e-3, "epochs": 1000, "learning_rate": 1.0},
}
CLASSIFICATION_ONLY = (Kind.SVM_LINEAR, Kind.LOGISTIC)
_PROB_CLIP = 1e-6


@dataclass(frozen=True)
class LearnerSpec:
    """What to train: learner kind, hyperparameters, seed and task.

    ``task`` defaults to classification for SVM/logistic and regression for the
    tree learners.
    """

    kind: Kind
    hyperparameters: Mapping[str, Any] = field(default_factory=dict, hash=False)
    seed: int = 0
    task: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise InputError(f"unknown {self.kind.value} hyperparameter(s): {sorted(unknown)}")
        if self.task not in (None, CLASSIFICATION, REGRESSION):
            raise InputError(f"unknown task {self.task!r}")
        if self.kind in CLASSIFICATION_ONLY and self.task == REGRESSION:
            raise InputError(f"{self.kind.value} supports binary classification only")
        _validate(self.kind, self.params)

    @property
    def params(self) -> dict[str, Any]:
        p = dict(DEFAULTS[self.kind])
        p.update(self.hyperparameters)
        return p

    @property
    def resolved_task(self) -> str:
        if self.task is not None:
            return self.task
        return CLASSIFICATION if self.kind in CLASSIFICATION_ONLY else REGRESSION

    def with_params(self, **hp) -> "LearnerSpec":
        merged = dict(self.hyperparameters)
        merged.update(hp)
        return replace(self, hyperparameters=merged)

    def fit(self, fm: FeatureMatrix, target) -> "TrainedModel":
        return train(self, fm, target)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "hyperparameters": dict(self.hyperparameters),
            "seed": self.seed,
            "task": self.task,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "LearnerSpec":
        return cls(Kind(doc["kind"]), doc.get("hyperparameters", {}), doc.get("seed", 0), doc.get("task"))


def _validate(kind: Kind, p: Mapping[str, Any]) -> None:
    def positive_int(name):
        v = p[name]
        if not (isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= 1):
            raise InputError(f"{name} must be a positive integer, got {v!r}")

    def rate(name):
        v = p[name]
        if not (isinstance(v, (int, float)) and 0.0 < v <= 1.0):
            raise InputError(f"{name} must lie in (0, 1], got {v!r}")

    if kind is Kind.SVM_LINEAR:
        positive_int("epochs")
        rate("learning_rate")
        if not p["C"] > 0:
            raise InputError("C must be positive")
    elif kind is Kind.LOGISTIC:
        positive_int("epochs")
        if not p["learning_rate"] > 0:
            raise InputError("learning_rate must be positive")
        if p["l2_penalty"] < 0:
            raise InputError("l2_penalty must be non-negative")
    else:
        if kind is Kind.RANDOM_FOREST:
            positive_int("n_trees")
            if p["feature_subsample"] is not None:
                rate("feature_subsample")
        else:
            positive_int("num_round")
            rate("learning_rate")
        positive_int("min_samples_leaf")
        if p["max_depth"] is not None and not (isinstance(p["max_depth"], int) and p["max_depth"] >= 0):
            raise InputError("max_depth must be a non-negative integer or None")


def sigmoid(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class TrainedModel:
    spec: LearnerSpec
    task: str
    feature_names: tuple[str, ...]
    parameters: Mapping[str, Any] = field(hash=False)

    def predict_array(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ColumnMismatch(
                f"expected {len(self.feature_names)} feature columns, got shape {X.shape}"
            )
        if X.shape[0] == 0:
            return np.zeros(0)
        kind, p = self.spec.kind, self.parameters
        if kind in CLASSIFICATION_ONLY:
            return sigmoid(X @ p["w"] + p["b"])
        if kind is Kind.RANDOM_FOREST:
            out = np.mean([t.predict(X) for t in p["trees"]], axis=0)
            return np.clip(out, 0.0, 1.0) if self.task == CLASSIFICATION else out
        raw = np.full(X.shape[0], p["init"])
        lr = self.spec.params["learning_rate"]
        for t in p["trees"]:
            raw = raw + lr * t.predict(X)
        return sigmoid(raw) if self.task == CLASSIFICATION else raw

    def predict(self, fm: FeatureMatrix) -> np.ndarray:
        if tuple(fm.names) != self.feature_names:
            raise ColumnMismatch("feature columns differ from the training columns")
        return self.predict_array(fm.data)

    @property
    def train_loss(self) -> tuple[float, ...]:
        """Per-round training loss for GBT (index 0 = initial constant model)."""
        return tuple(self.parameters.get("train_loss", ()))


def predict(model, fm: FeatureMatrix) -> np.ndarray:
    return model.predict(fm)


def _check_training_data(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, task: str):
    if X.shape[0] == 0:
        raise EmptyTrainingSet("no training rows")
    if len(y) != X.shape[0]:
        raise LengthMismatch(f"{len(y)} targets for {X.shape[0]} rows")
    if not np.isfinite(y).all():
        raise LabelOutOfDomain("targets must be finite")
    if task == CLASSIFICATION and not np.isin(y, (0.0, 1.0)).all():
        raise LabelOutOfDomain("classification targets must be 0 or 1")


def train(spec: LearnerSpec, fm: FeatureMatrix, target) -> TrainedModel:
    """Fit ``spec`` on ``fm``; deterministic given the spec's seed."""
    X = np.asarray(fm.data, dtype=float)
    y = np.asarray(target, dtype=float).ravel()
    task = spec.resolved_task
    _check_training_data(spec, X, y, task)
    fitter = {
        Kind.SVM_LINEAR: _fit_svm,
        Kind.LOGISTIC: _fit_logistic,
        Kind.RANDOM_FOREST: _fit_forest,
        Kind.GBT: _fit_gbt,
    }[spec.kind]
    params = fitter(spec.params, X, y, task, spec.seed)
    return TrainedModel(spec, task, tuple(fm.names), params)


def _fit_svm(p, X, y, task, seed):
    """Hinge loss + L2 by full-batch subgradient descent, step lr/sqrt(t+1)."""
    n, d = X.shape
    s = 2.0 * y - 1.0
    lam = 1.0 / (p["C"] * n)
    w = np.zeros(d)
    b = 0.0
    for t in range(p["epochs"]):
        margin = s * (X @ w + b)
        viol = margin < 1.0
        gw = lam * w - (s[viol] @ X[viol]) / n
        gb = -s[viol].sum() / n
        step = p["learning_rate"] / math.sqrt(t + 1.0)
        w = w - step * gw
        b = b - step * gb
    return {"w": w, "b": float(b)}


def _fit_logistic(p, X, y, task, seed):
    """L2-penalised mean log-loss by fixed-step gradient descent."""
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    lr, l2 = p["learning_rate"], p["l2_penalty"]
    for _ in range(p["epochs"]):
        r = sigmoid(X @ w + b) - y
        w = w - lr * ((X.T @ r) / n + l2 * w)
        b = b - lr * r.mean()
    return {"w": w, "b": float(b)}


def _max_features(p, d: int) -> int:
    frac = p["feature_subsample"]
    if frac is None:
        return max(1, int(round(math.sqrt(d))))
    return max(1, min(d, int(round(frac * d))))


def _fit_forest(p, X, y, task, seed):
    n, d = X.shape
    criterion = "gini" if task == CLASSIFICATION else "mse"
    mf = _max_features(p, d)

    def one(t: int) -> Tree:
        rng = substream(seed, t)
        rows = rng.integers(0, n, size=n) if p["bootstrap"] else np.arange(n)
        return grow_tree(X[rows], y[rows], criterion=criterion, max_depth=p["max_depth"],
                         min_samples_leaf=p["min_samples_leaf"], max_features=mf, rng=rng)

    return {"trees": ordered_map(one, range(p["n_trees"]))}


def _gbt_loss(raw, y, task) -> float:
    if task == CLASSIFICATION:
        prob = np.clip(sigmoid(raw), _PROB_CLIP, 1 - _PROB_CLIP)
        return float(-np.mean(y * np.log(prob) + (1 - y) * np.log(1 - prob)))
    return float(np.mean((y - raw) ** 2))


def _fit_gbt(p, X, y, task, seed):
    """Stagewise regression trees on residuals (squared or logistic loss)."""
    if task == CLASSIFICATION:
        prior = min(max(y.mean(), _PROB_CLIP), 1 - _PROB_CLIP)
        init = math.log(prior / (1 - prior))
    else:
        init = float(y.mean())
    raw = np.full(len(y), init)
    lr = p["learning_rate"]
    trees, losses = [], [_gbt_loss(raw, y, task)]
    for _ in range(p["num_round"]):
        resid = y - (sigmoid(raw) if task == CLASSIFICATION else raw)
        tree = grow_tree(X, resid, criterion="mse", max_depth=p["max_depth"],
                         min_samples_leaf=p["min_samples_leaf"])
        raw = raw + lr * tree.predict(X)
        trees.append(tree)
        losses.append(_gbt_loss(raw, y, task))
    return {"init": init, "trees": trees, "train_loss": losses}


# ---------------------------------------------------------------------------
# persistence


def _params_to_json(kind: Kind, params: Mapping) -> dict:
    if kind in CLASSIFICATION_ONLY:
        return {"w": np.asarray(params["w"]).tolist(), "b": params["b"]}
    out = {"trees": [t.to_dict() for t in params["trees"]]}
    if kind is Kind.GBT:
        out["init"] = params["init"]
        out["train_loss"] = list(params["train_loss"])
    return out


def _params_from_json(kind: Kind, doc: Mapping) -> dict:
    if kind in CLASSIFICATION_ONLY:
        return {"w": np.asarray(doc["w"], dtype=float), "b": float(doc["b"])}
    out = {"trees": [Tree.from_dict(t) for t in doc["trees"]]}
    if kind is Kind.GBT:
        out["init"] = float(doc["init"])
        out["train_loss"] = list(doc["train_loss"])
    return out


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "task": model.task,
        "feature_names": list(model.feature_names),
        "parameters": _params_to_json(model.spec.kind, model.parameters),
    }


def model_from_dict(doc: Mapping) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise InputError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported model document version {doc.get('version')!r}")
    spec = LearnerSpec.from_dict(doc["spec"])
    return TrainedModel(spec, doc["task"], tuple(doc["feature_names"]),
                        _params_from_json(spec.kind, doc["parameters"]))


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
