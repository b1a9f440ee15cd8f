"""Stratified cross-validation, F1 scoring, majority downsampling and grid
search over the model families' hyperparameter grids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError, ValidationError
from .model import TrainedModel, train

log = logging.getLogger(__name__)

# Grid order is part of the contract: ties in mean F1 go to the earlier point.
LOGISTIC_GRID: tuple[dict, ...] = tuple(
    {"penalty": penalty, "C": c, "tol": tol}
    for penalty in ("l1", "l2")
    for c in (0.01, 0.1, 1.0, 10.0, 100.0)
    for tol in (1e-4, 1e-3)
)
FOREST_GRID: tuple[dict, ...] = tuple(
    {"max_depth": depth, "n_trees": 100} for depth in (2, 4, 6, 8, None)
)


@dataclass(frozen=True)
class ModelSpec:
    family: str
    grid: tuple[dict, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ValidationError("hyperparameter grid must be non-empty")
        for point in self.grid:
            if "C" in point and point["C"] <= 0:
                raise ValidationError(f"C must be positive, got {point['C']}")
            if "n_trees" in point and point["n_trees"] < 1:
                raise ValidationError(f"n_trees must be >= 1, got {point['n_trees']}")

    @classmethod
    def logistic(cls, seed: int = 0) -> "ModelSpec":
        return cls(family="logistic", grid=LOGISTIC_GRID, seed=seed)

    @classmethod
    def forest(cls, seed: int = 0) -> "ModelSpec":
        return cls(family="forest", grid=FOREST_GRID, seed=seed)

    @classmethod
    def for_family(cls, family: str, seed: int = 0) -> "ModelSpec":
        if family == "logistic":
            return cls.logistic(seed)
        if family == "forest":
            return cls.forest(seed)
        raise ValidationError(f"unknown model family {family!r}")


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold id per sample; folds sized within one of each other and each
    class spread across folds as evenly as arithmetic allows.

    Per class the shuffled members are dealt out q or q+1 at a time; the
    folds receiving the extra sample rotate across classes so overall fold
    sizes stay balanced too.
    """
    y = np.asarray(labels)
    n = len(y)
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=int)
    ptr = 0
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        if len(idx) < k:
            raise ValidationError(
                f"class {cls!r} has {len(idx)} members, fewer than k={k}"
            )
        shuffled = idx[rng.permutation(len(idx))]
        q, r = divmod(len(idx), k)
        start = 0
        for f in range(k):
            size = q + (1 if (f - ptr) % k < r else 0)
            fold[shuffled[start : start + size]] = f
            start += size
        ptr = (ptr + r) % k
    return fold


def f1(y_true, y_pred, positive_class=1) -> float:
    """Harmonic mean of precision and recall on the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) != len(y_pred):
        raise ValidationError("f1 needs equal-length label vectors")
    tp = int(np.sum((y_true == positive_class) & (y_pred == positive_class)))
    fp = int(np.sum((y_true != positive_class) & (y_pred == positive_class)))
    fn = int(np.sum((y_true == positive_class) & (y_pred != positive_class)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def downsample_indices(y, ratio: int = 2, seed: int = 0) -> np.ndarray:
    """Row indices keeping the whole minority class plus a uniform sample of
    at most ratio x |minority| majority rows, in original row order."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        return np.arange(len(y))
    # ties go to the higher label so a balanced binary input keeps class 1
    order = np.lexsort((-classes, counts))
    minority = classes[order[0]]
    minority_idx = np.nonzero(y == minority)[0]
    majority_idx = np.nonzero(y != minority)[0]
    want = min(len(majority_idx), ratio * len(minority_idx))
    rng = np.random.default_rng(seed)
    sampled = rng.choice(majority_idx, size=want, replace=False)
    return np.sort(np.concatenate([minority_idx, sampled]))


def downsample_majority(
    X: np.ndarray, y, ratio: int = 2, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    idx = downsample_indices(y, ratio=ratio, seed=seed)
    return np.asarray(X)[idx], np.asarray(y)[idx]


@dataclass(frozen=True)
class GridSearchResult:
    best_point: dict
    mean_f1: float
    model: TrainedModel
    point_scores: tuple[float, ...]


def grid_search_cv(
    X: np.ndarray,
    y,
    spec: ModelSpec,
    feature_names,
    k: int = 5,
    seed: int = 0,
) -> GridSearchResult:
    """Pick the grid point with the best mean F1 over one shared stratified
    k-fold split, then refit it on all rows.

    Ties keep the earliest point in grid order.  A point whose training
    fails on some fold is skipped; if every point fails the search errors.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    fold = stratified_kfold(y, k=k, seed=seed)
    scores: list[float] = []
    for point in spec.grid:
        fold_scores = []
        try:
            for f in range(k):
                train_rows = fold != f
                model = train(
                    X[train_rows], y[train_rows], spec.family, point,
                    feature_names, seed=spec.seed,
                )
                pred = model.predict(X[fold == f], feature_names)
                fold_scores.append(f1(y[fold == f], pred))
        except TrainingError as exc:
            log.warning("grid point %s failed: %s", point, exc)
            scores.append(float("-inf"))
            continue
        scores.append(float(np.mean(fold_scores)))
    best = int(np.argmax(scores))
    if scores[best] == float("-inf"):
        raise TrainingError("every grid point failed to train")
    best_point = spec.grid[best]
    model = train(X, y, spec.family, best_point, feature_names, seed=spec.seed)
    return GridSearchResult(
        best_point=dict(best_point),
        mean_f1=scores[best],
        model=model,
        point_scores=tuple(scores),
    )
