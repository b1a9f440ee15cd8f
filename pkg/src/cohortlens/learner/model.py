"""Trained classifier artifact: hyperparameter point, learned parameters and
the training-data standardization baked in, serializable to versioned JSON so
a model fitted on one course can score another.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError, SchemaError, ValidationError
from .forest import fit_forest, predict_proba_forest
from .logistic import fit_logistic, predict_proba_logistic

MODEL_SCHEMA_VERSION = 1
FAMILIES = ("logistic", "forest")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring learned on training data.

    Zero-variance features map to 0 so they carry no signal at train or
    predict time.
    """

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        return cls(mean=X.mean(axis=0), sd=X.std(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        safe = np.where(self.sd > 0, self.sd, 1.0)
        out = (X - self.mean) / safe
        return np.where(self.sd > 0, out, 0.0)


@dataclass(frozen=True)
class TrainedModel:
    family: str
    point: dict
    feature_names: tuple[str, ...]
    standardizer: Standardizer
    params: dict
    seed: int = 0

    def _check(self, X: np.ndarray, feature_names) -> np.ndarray:
        if tuple(feature_names) != self.feature_names:
            raise ContractError(
                "feature names do not match the model contract: "
                f"expected {list(self.feature_names)}, got {list(feature_names)}"
            )
        X = np.asarray(X, dtype=float)
        if not np.isfinite(X).all():
            raise ValidationError("non-finite values in feature array")
        return self.standardizer.transform(X)

    def predict_proba(self, X: np.ndarray, feature_names) -> np.ndarray:
        Xs = self._check(X, feature_names)
        if self.family == "logistic":
            return predict_proba_logistic(
                Xs, np.asarray(self.params["weights"]), self.params["intercept"]
            )
        return predict_proba_forest(Xs, self.params["trees"])

    def predict(self, X: np.ndarray, feature_names) -> np.ndarray:
        return (self.predict_proba(X, feature_names) >= 0.5).astype(int)

    def to_json(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "family": self.family,
            "point": self.point,
            "feature_names": list(self.feature_names),
            "standardizer": {
                "mean": [float(v) for v in self.standardizer.mean],
                "sd": [float(v) for v in self.standardizer.sd],
            },
            "params": self.params,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainedModel":
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported model schema version {doc.get('schema_version')!r}"
            )
        if doc.get("family") not in FAMILIES:
            raise SchemaError(f"unknown model family {doc.get('family')!r}")
        params = doc["params"]
        if doc["family"] == "logistic":
            params = {
                "weights": [float(v) for v in params["weights"]],
                "intercept": float(params["intercept"]),
            }
        return cls(
            family=doc["family"],
            point=dict(doc["point"]),
            feature_names=tuple(doc["feature_names"]),
            standardizer=Standardizer(
                mean=np.asarray(doc["standardizer"]["mean"], dtype=float),
                sd=np.asarray(doc["standardizer"]["sd"], dtype=float),
            ),
            params=params,
            seed=int(doc.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def train(
    X: np.ndarray,
    y: np.ndarray,
    family: str,
    point: dict,
    feature_names,
    seed: int = 0,
) -> TrainedModel:
    """Standardize, fit one hyperparameter point, wrap as a TrainedModel."""
    if family not in FAMILIES:
        raise ValidationError(f"unknown model family {family!r}")
    X = np.asarray(X, dtype=float)
    if not np.isfinite(X).all():
        raise ValidationError("non-finite values in feature array")
    feature_names = tuple(feature_names)
    if X.shape[1] != len(feature_names):
        raise ValidationError("feature array width does not match feature names")

    standardizer = Standardizer.fit(X)
    Xs = standardizer.transform(X)
    if family == "logistic":
        w, b, _ = fit_logistic(
            Xs, y, penalty=point["penalty"], C=point["C"], tol=point["tol"]
        )
        params = {"weights": [float(v) for v in w], "intercept": float(b)}
    else:
        trees = fit_forest(
            Xs, y, max_depth=point["max_depth"], n_trees=point["n_trees"], seed=seed
        )
        params = {"trees": trees}
    return TrainedModel(
        family=family,
        point=dict(point),
        feature_names=feature_names,
        standardizer=standardizer,
        params=params,
        seed=seed,
    )
