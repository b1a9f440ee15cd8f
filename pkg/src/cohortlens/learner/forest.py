"""Random forest of Gini-split binary trees on bootstrap resamples.

Each node examines ceil(sqrt(p)) randomly drawn features and takes the
threshold (midpoint between adjacent distinct values) with the lowest
weighted child impurity.  Impure nodes split even when no candidate improves
on the parent: that keeps parity-style patterns learnable, where the first
cut gains nothing but enables the next one.  Trees store class-1 probability
at the leaves; the ensemble averages them.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import TrainingError

# Nodes are plain dicts so ensembles serialize to JSON untouched:
# {"feature": int, "threshold": float, "left": node, "right": node}
# or {"prob": float} at a leaf.


def _gini(pos: float, n: float) -> float:
    q = pos / n
    return 1.0 - q * q - (1.0 - q) * (1.0 - q)


def _best_split(
    X: np.ndarray, y: np.ndarray, rows: np.ndarray, cols: np.ndarray
) -> tuple[float, int, float] | None:
    """(weighted child impurity, feature, threshold) or None if no cut exists."""
    n = len(rows)
    total_pos = float(y[rows].sum())
    best: tuple[float, int, float] | None = None
    for col in cols:
        xs = X[rows, col]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = y[rows][order]
        boundaries = np.nonzero(xs_sorted[1:] != xs_sorted[:-1])[0]
        if len(boundaries) == 0:
            continue
        n_left = boundaries + 1.0
        pos_left = np.cumsum(ys_sorted)[boundaries].astype(float)
        n_right = n - n_left
        pos_right = total_pos - pos_left
        q_l = pos_left / n_left
        q_r = pos_right / n_right
        gini_l = 1.0 - q_l * q_l - (1.0 - q_l) * (1.0 - q_l)
        gini_r = 1.0 - q_r * q_r - (1.0 - q_r) * (1.0 - q_r)
        weighted = (n_left * gini_l + n_right * gini_r) / n
        i = int(np.argmin(weighted))
        score = float(weighted[i])
        if best is None or score < best[0]:
            cut = boundaries[i]
            thr = (float(xs_sorted[cut]) + float(xs_sorted[cut + 1])) / 2.0
            best = (score, int(col), thr)
    return best


def _build_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    rng: np.random.Generator,
    max_depth: int | None,
    mtry: int,
) -> dict:
    p = X.shape[1]
    root: dict = {}
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        pos = float(y[idx].sum())
        n = len(idx)
        if (
            pos == 0.0
            or pos == n
            or n < 2
            or (max_depth is not None and depth >= max_depth)
        ):
            node["prob"] = pos / n
            continue
        cols = rng.choice(p, size=mtry, replace=False)
        best = _best_split(X, y, idx, cols)
        if best is None and mtry < p:
            # the sampled features were constant on this node; an impure node
            # must still split if any feature allows it
            best = _best_split(X, y, idx, np.arange(p))
        if best is None:
            node["prob"] = pos / n
            continue
        _, col, thr = best
        left = idx[X[idx, col] <= thr]
        right = idx[X[idx, col] > thr]
        node["feature"] = col
        node["threshold"] = thr
        node["left"] = {}
        node["right"] = {}
        stack.append((node["right"], right, depth + 1))
        stack.append((node["left"], left, depth + 1))
    return root


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None,
    n_trees: int,
    seed: int,
) -> list[dict]:
    if n_trees < 1:
        raise TrainingError(f"n_trees must be >= 1, got {n_trees}")
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise TrainingError("degenerate target: all labels identical")
    n, p = X.shape
    mtry = max(1, math.isqrt(p) + (0 if math.isqrt(p) ** 2 == p else 1))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n)
        trees.append(_build_tree(X, y, rows, rng, max_depth, mtry))
    return trees


def _tree_prob(node: dict, x: np.ndarray) -> float:
    while "prob" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["prob"]


def predict_proba_forest(X: np.ndarray, trees: list[dict]) -> np.ndarray:
    probs = np.zeros(len(X))
    for i, x in enumerate(X):
        probs[i] = sum(_tree_prob(t, x) for t in trees) / len(trees)
    return probs
