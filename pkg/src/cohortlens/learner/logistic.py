"""Regularized logistic regression fit by first-order methods.

L2 uses plain gradient descent with Armijo backtracking; L1 uses a proximal
(soft-threshold) step on the weights with the same backtracking on the smooth
part.  The intercept is never penalized.  Inputs are expected to be
standardized by the caller; convergence is declared when no parameter moves
more than the tolerance.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit

from ..errors import TrainingError

log = logging.getLogger(__name__)

MAX_ITER = 10_000
PENALTIES = ("l1", "l2")


def _margins(X: np.ndarray, s: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    return s * (X @ w + b)


def log_loss(X: np.ndarray, s: np.ndarray, w: np.ndarray, b: float) -> float:
    """Sum of log(1 + exp(-margin)); s holds +/-1 labels."""
    return float(np.logaddexp(0.0, -_margins(X, s, w, b)).sum())


def log_loss_grad(
    X: np.ndarray, s: np.ndarray, w: np.ndarray, b: float
) -> tuple[np.ndarray, float]:
    r = s * expit(-_margins(X, s, w, b))
    return -(X.T @ r), float(-r.sum())


def objective(
    X: np.ndarray, s: np.ndarray, w: np.ndarray, b: float, penalty: str, C: float
) -> float:
    """Penalized loss; L2 adds ||w||^2/(2C), L1 adds ||w||_1/C."""
    base = log_loss(X, s, w, b)
    if penalty == "l2":
        return base + float(w @ w) / (2.0 * C)
    return base + float(np.abs(w).sum()) / C


def objective_grad(
    X: np.ndarray, s: np.ndarray, w: np.ndarray, b: float, C: float
) -> tuple[np.ndarray, float]:
    """Gradient of the L2 objective (the L1 term is not differentiable)."""
    gw, gb = log_loss_grad(X, s, w, b)
    return gw + w / C, gb


def _soft_threshold(v: np.ndarray, lam: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def _loss_from_z(z: np.ndarray, s: np.ndarray, b: float) -> float:
    return float(np.logaddexp(0.0, -s * (z + b)).sum())


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    penalty: str,
    C: float,
    tol: float,
    max_iter: int = MAX_ITER,
) -> tuple[np.ndarray, float, bool]:
    """Weights, intercept and a convergence flag for standardized inputs.

    ``X @ w`` is carried between iterations so line-search candidates cost
    vector work only (the L2 step is linear in the step size; L1 proposals
    need one fresh product each).
    """
    if penalty not in PENALTIES:
        raise TrainingError(f"unknown penalty {penalty!r}")
    if C <= 0:
        raise TrainingError(f"C must be positive, got {C}")
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise TrainingError("degenerate target: all labels identical")
    s = np.where(y == 1, 1.0, -1.0)

    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    z = np.zeros(n)  # X @ w, kept in sync with w
    converged = False
    step = 1.0
    for _ in range(max_iter):
        r = s * expit(-s * (z + b))
        gw = -(X.T @ r)
        gb = float(-r.sum())
        if penalty == "l2":
            gw = gw + w / C
            f0 = _loss_from_z(z, s, b) + float(w @ w) / (2.0 * C)
            gnorm2 = float(gw @ gw) + gb * gb
            u = X @ gw
            ww, wg, gg = float(w @ w), float(w @ gw), float(gw @ gw)
            step = min(max(step, 1e-13) * 2.0, 1.0)
            while step > 1e-14:
                z1 = z - step * u
                b1 = b - step * gb
                penalty_term = (ww - 2.0 * step * wg + step * step * gg) / (2.0 * C)
                if _loss_from_z(z1, s, b1) + penalty_term <= f0 - 1e-4 * step * gnorm2:
                    break
                step *= 0.5
            w1 = w - step * gw
        else:
            f0 = _loss_from_z(z, s, b)
            step = min(max(step, 1e-13) * 2.0, 1.0)
            while step > 1e-14:
                w1 = _soft_threshold(w - step * gw, step / C)
                b1 = b - step * gb
                dw = w1 - w
                db = b1 - b
                bound = (
                    f0
                    + float(gw @ dw)
                    + gb * db
                    + (float(dw @ dw) + db * db) / (2.0 * step)
                )
                z1 = X @ w1
                if _loss_from_z(z1, s, b1) <= bound + 1e-12:
                    break
                step *= 0.5
        delta = max(float(np.max(np.abs(w1 - w))) if p else 0.0, abs(b1 - b))
        w, b, z = w1, b1, z1
        if delta < tol:
            converged = True
            break
    if not converged:
        log.warning("logistic fit hit the %d-iteration cap", max_iter)
    return w, b, converged


def predict_proba_logistic(X: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    return expit(X @ w + b)
