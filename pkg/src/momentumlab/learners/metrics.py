"""Evaluation metrics (MAPE reported as a fraction, never a percentage)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, LengthMismatch, UnknownMetric

CLASSIFICATION = "binary_classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class MetricSet:
    mape: float
    mae: float
    r2: float
    accuracy: float | None = None
    mape_excluded: int = 0
    r2_defined: bool = True

    def as_dict(self) -> dict:
        return {
            "mape": self.mape,
            "mae": self.mae,
            "r2": self.r2,
            "accuracy": self.accuracy,
            "mape_excluded": self.mape_excluded,
            "r2_defined": self.r2_defined,
        }


def _pair(predictions, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if len(p) != len(y):
        raise LengthMismatch(f"{len(p)} predictions for {len(y)} targets")
    if len(y) == 0:
        raise InputError("cannot evaluate an empty prediction set")
    return p, y


def mae(predictions, targets) -> float:
    p, y = _pair(predictions, targets)
    return float(np.mean(np.abs(y - p)))


def mse(predictions, targets) -> float:
    p, y = _pair(predictions, targets)
    return float(np.mean((y - p) ** 2))


def mape(predictions, targets) -> tuple[float, int]:
    """Mean |(y - p) / y| over nonzero targets; returns (value, n_excluded)."""
    p, y = _pair(predictions, targets)
    keep = y != 0
    excluded = int((~keep).sum())
    if not keep.any():
        return float("nan"), excluded
    return float(np.mean(np.abs((y[keep] - p[keep]) / y[keep]))), excluded


def r2(predictions, targets) -> tuple[float, bool]:
    p, y = _pair(predictions, targets)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - p) ** 2))
    if ss_tot == 0.0:
        return float("nan"), False
    return 1.0 - ss_res / ss_tot, True


def hard_labels(scores) -> np.ndarray:
    return (np.asarray(scores, dtype=float) > 0.5).astype(float)


def accuracy(predictions, targets) -> float:
    p, y = _pair(predictions, targets)
    return float(np.mean(hard_labels(p) == y))


def evaluate(predictions, targets, task: str = REGRESSION) -> MetricSet:
    m, excluded = mape(predictions, targets)
    r, defined = r2(predictions, targets)
    acc = accuracy(predictions, targets) if task == CLASSIFICATION else None
    return MetricSet(m, mae(predictions, targets), r, acc, excluded, defined)


METRICS = {
    "accuracy": accuracy,
    "mae": mae,
    "mse": mse,
    "mape": lambda p, y: mape(p, y)[0],
    "r2": lambda p, y: r2(p, y)[0],
}
HIGHER_IS_BETTER = frozenset({"accuracy", "r2"})


def metric_fn(metric: str):
    try:
        return METRICS[metric]
    except KeyError:
        raise UnknownMetric(f"unknown metric {metric!r}; choose from {sorted(METRICS)}") from None


def metric_value(metric: str, predictions, targets) -> float:
    return float(metric_fn(metric)(predictions, targets))
