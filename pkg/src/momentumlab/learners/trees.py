"""CART regression/classification trees grown by exhaustive midpoint scan.

Splits maximise variance reduction (``"mse"``) or Gini decrease (``"gini"``,
binary 0/1 labels). Candidate thresholds are midpoints between consecutive
distinct sorted values; ties go to the lowest feature index, then the lowest
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # int, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            np.asarray(doc["feature"], dtype=int),
            np.asarray(doc["threshold"], dtype=float),
            np.asarray(doc["left"], dtype=int),
            np.asarray(doc["right"], dtype=int),
            np.asarray(doc["value"], dtype=float),
        )


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, criterion: str,
               min_samples_leaf: int) -> tuple[int, float] | None:
    """Best (feature, threshold) for one node, or None if no split helps."""
    m = len(y)
    if m < 2 * min_samples_leaf or m < 2 or y.min() == y.max():
        return None
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[order]
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    left_sum = np.cumsum(ys, axis=0)[:-1]
    total = y.sum()
    if criterion == "mse":
        left_sq = np.cumsum(ys * ys, axis=0)[:-1]
        total_sq = float(np.dot(y, y))
        parent = total_sq - total * total / m
        child = (left_sq - left_sum ** 2 / n_left) + (
            (total_sq - left_sq) - (total - left_sum) ** 2 / n_right
        )
    elif criterion == "gini":
        p = total / m
        parent = 2.0 * m * p * (1.0 - p)
        pl = left_sum / n_left
        pr = (total - left_sum) / n_right
        child = 2.0 * (n_left * pl * (1.0 - pl) + n_right * pr * (1.0 - pr))
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    if parent <= 0.0:
        return None
    gain = parent - child
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    gain = np.where(valid, gain, -np.inf)
    # feature-major flattening: the first near-maximal entry is the lowest feature,
    # lowest threshold; the slack absorbs cumulative-sum rounding between equal splits
    flat = gain.T.ravel()
    top = float(flat.max())
    if not top > 1e-12 * parent:
        return None
    best = int(np.argmax(flat >= top - 1e-10 * parent))
    f_pos, row = divmod(best, m - 1)
    thr = 0.5 * (xs[row, f_pos] + xs[row + 1, f_pos])
    if not thr < xs[row + 1, f_pos]:  # adjacent floats: midpoint rounds up
        thr = float(xs[row, f_pos])
    return int(features[f_pos]), float(thr)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    criterion: str = "mse",
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow a CART tree depth-first.

    ``max_features`` < n_features draws a fresh sorted feature subset at each
    node from ``rng``; otherwise every feature is scanned and ``rng`` is unused.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    all_features = np.arange(d)
    subsample = max_features is not None and max_features < d
    if subsample and rng is None:
        raise ValueError("feature subsampling needs an rng")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    root_rows = np.arange(len(y))
    stack = [(new_node(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        feats = np.sort(rng.choice(d, size=max_features, replace=False)) if subsample else all_features
        split = best_split(X[rows], y[rows], feats, criterion, min_samples_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # right pushed first so the left subtree is expanded next
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    return Tree(
        np.asarray(feature, dtype=int),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=int),
        np.asarray(right, dtype=int),
        np.asarray(value, dtype=float),
    )
