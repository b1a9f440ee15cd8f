"""Rank statistics for feature screening: Spearman correlation with a
t-approximation p-value, chi-square scores on non-negative feature magnitudes,
and the sudden-drop elbow rule for picking how many ranked features to keep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import ValidationError
from .features import FeatureMatrix

log = logging.getLogger(__name__)

DEFAULT_ELBOW_WINDOW = (5, 25)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    n = len(x)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Spearman's rho and its two-tailed p-value.

    Rho is the Pearson correlation of average ranks.  Significance uses the
    usual transform t = rho * sqrt((n-2) / (1-rho^2)) against Student's t
    with n-2 degrees of freedom, evaluated through the regularized
    incomplete beta function; |rho| = 1 maps to p = 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ValidationError("spearman needs two equal-length vectors")
    n = len(x)
    if n < 3:
        raise ValidationError(f"spearman needs n >= 3, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValidationError("correlation undefined for a constant vector")

    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(rx @ ry / np.sqrt((rx @ rx) * (ry @ ry)))
    rho = max(-1.0, min(1.0, rho))

    if abs(rho) >= 1.0 - 1e-15:
        return (1.0 if rho > 0 else -1.0), 0.0
    df = n - 2
    t2 = rho * rho * df / (1.0 - rho * rho)
    p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return rho, p


@dataclass(frozen=True)
class RankedFeatures:
    """Features ordered by decreasing score, plus how many to keep."""

    ranking: tuple[tuple[str, float], ...]
    selected_k: int

    def __post_init__(self):
        scores = [s for _, s in self.ranking]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValidationError("ranking scores must be non-increasing")
        if not 1 <= self.selected_k <= len(self.ranking):
            raise ValidationError(
                f"selected_k {self.selected_k} outside 1..{len(self.ranking)}"
            )

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.ranking)

    def scores(self) -> tuple[float, ...]:
        return tuple(score for _, score in self.ranking)

    def selected(self) -> tuple[str, ...]:
        return self.names()[: self.selected_k]


def chi2_scores_array(
    X: np.ndarray, y: np.ndarray, names: Sequence[str]
) -> list[tuple[str, float]]:
    """Chi-square score per column, sorted descending (ties by name).

    Columns with negative entries are shifted up by their minimum first.
    Observed mass per class is the column sum over that class; expected is
    the class prevalence times the grand total.  An all-zero column scores 0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape != (len(y), len(names)):
        raise ValidationError("feature array shape does not match labels/names")
    mins = X.min(axis=0)
    shifted = np.where(mins < 0, X - mins, X)
    totals = shifted.sum(axis=0)
    scores = np.zeros(len(names))
    n = len(y)
    for cls in np.unique(y):
        mask = y == cls
        observed = shifted[mask].sum(axis=0)
        expected = (mask.sum() / n) * totals
        nonzero = expected > 0
        scores[nonzero] += (observed[nonzero] - expected[nonzero]) ** 2 / expected[nonzero]
    pairs = sorted(zip(names, scores.tolist()), key=lambda kv: (-kv[1], kv[0]))
    return pairs


def chi2_scores(m: FeatureMatrix, target: np.ndarray) -> RankedFeatures:
    """Rank every matrix column against a label vector; keeps all features."""
    pairs = chi2_scores_array(m.values, target, m.feature_names)
    return RankedFeatures(ranking=tuple(pairs), selected_k=len(pairs))


def elbow_cutoff(
    scores: Sequence[float],
    window: tuple[int, int] = DEFAULT_ELBOW_WINDOW,
    override: int | None = None,
) -> int:
    """Number of ranked features to keep, found at the sharpest score drop.

    Searches 1-based cut positions i inside ``window`` (clamped to the list)
    and keeps the i maximizing scores[i] / scores[i+1] over positions where
    the next score is positive.  A flat list keeps everything; a constant
    ratio (no distinguished drop) keeps up to the window end — both with a
    warning.  ``override`` bypasses the search entirely.
    """
    scores = [float(s) for s in scores]
    n = len(scores)
    if n < 3:
        raise ValidationError(f"elbow needs at least 3 scores, got {n}")
    if any(a < b for a, b in zip(scores, scores[1:])):
        raise ValidationError("elbow expects non-increasing scores")
    if override is not None:
        if not 1 <= override <= n:
            raise ValidationError(f"cutoff override {override} outside 1..{n}")
        return override

    lo = max(1, min(window[0], n - 1))
    hi = max(lo, min(window[1], n - 1))
    if scores[0] == scores[-1]:
        log.warning("elbow: scores are flat, keeping all %d features", n)
        return n
    candidates = [
        (scores[i - 1] / scores[i], i) for i in range(lo, hi + 1) if scores[i] > 0
    ]
    if not candidates:
        k = max(1, sum(1 for s in scores if s > 0))
        log.warning("elbow: no positive successor in window, keeping %d", k)
        return min(k, n)
    ratios = [r for r, _ in candidates]
    if max(ratios) - min(ratios) <= 1e-12 * max(ratios):
        k = candidates[-1][1]
        log.warning("elbow: uniform decay, no distinguished drop; keeping %d", k)
        return k
    best_ratio, best_i = candidates[0]
    for ratio, i in candidates[1:]:
        if ratio > best_ratio:
            best_ratio, best_i = ratio, i
    return best_i


def rank_features(
    m: FeatureMatrix,
    target: str | np.ndarray,
    window: tuple[int, int] = DEFAULT_ELBOW_WINDOW,
    override: int | None = None,
) -> RankedFeatures:
    """Chi-square ranking with the elbow rule applied to pick selected_k."""
    y = m.to_xy(target)[1] if isinstance(target, str) else np.asarray(target)
    ranked = chi2_scores(m, y)
    k = elbow_cutoff(ranked.scores(), window=window, override=override)
    return replace(ranked, selected_k=k)
