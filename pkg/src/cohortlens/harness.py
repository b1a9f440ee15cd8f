"""Evaluation rounds over feature matrices: same-class cross-validation,
cross-offering / cross-course transfer, and at-risk classification with
majority downsampling.

Everything fitted — feature selection, standardization, hyperparameters,
downsampling — is computed strictly on training rows; test rows only ever
meet a frozen model.  Reports carry no wall-clock data so reruns are
byte-identical (timing belongs to the run manifest).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, SchemaError, TrainingError, ValidationError
from .features import LABEL_TARGETS, FeatureMatrix
from .ingest import SLICE_NAMES
from .learner import ModelSpec, TrainedModel, downsample_indices, f1, grid_search_cv, stratified_kfold
from .pipeline import CourseData, build_matrix
from .stats import DEFAULT_ELBOW_WINDOW, chi2_scores_array, elbow_cutoff, rank_features

log = logging.getLogger(__name__)

MODES = ("same_class", "cross_offering", "cross_course", "at_risk")
REPORT_SCHEMA_VERSION = 1

# offset mixed into the inner-CV seed per outer fold so nested folds differ
_FOLD_SEED_STRIDE = 7919


@dataclass(frozen=True)
class ExperimentPlan:
    """One evaluation cell: what to train on, what to test on, and how."""

    mode: str
    train_course: str
    train_slice: str
    test_course: str | None = None
    test_slice: str | None = None
    family: str = "logistic"
    method: str = "a"
    target: str = "distinction"
    k: int = 5
    seed: int = 0
    select_window: tuple[int, int] = DEFAULT_ELBOW_WINDOW
    select_override: int | None = None
    downsample_ratio: int = 2

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.train_slice not in SLICE_NAMES:
            raise ValidationError(f"unknown train slice {self.train_slice!r}")
        if self.test_slice is not None and self.test_slice not in SLICE_NAMES:
            raise ValidationError(f"unknown test slice {self.test_slice!r}")
        if self.target not in LABEL_TARGETS:
            raise ValidationError(f"unknown target {self.target!r}")
        if self.mode in ("cross_offering", "cross_course"):
            if self.test_course is None:
                raise ValidationError(f"{self.mode} requires a test course")
            if self.test_course == self.train_course:
                raise ValidationError(
                    f"{self.mode} requires train and test courses to differ"
                )
        if self.mode == "same_class" and self.test_course is not None:
            raise ValidationError("same_class takes no test course")
        if self.mode == "at_risk" and self.target != "at_risk":
            raise ValidationError("at_risk mode evaluates the at_risk target")
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "train_course": self.train_course,
            "train_slice": self.train_slice,
            "test_course": self.test_course,
            "test_slice": self.test_slice,
            "family": self.family,
            "method": self.method,
            "target": self.target,
            "k": self.k,
            "seed": self.seed,
            "select_window": list(self.select_window),
            "select_override": self.select_override,
            "downsample_ratio": self.downsample_ratio,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentPlan":
        return cls(
            mode=doc["mode"],
            train_course=doc["train_course"],
            train_slice=doc["train_slice"],
            test_course=doc.get("test_course"),
            test_slice=doc.get("test_slice"),
            family=doc.get("family", "logistic"),
            method=doc.get("method", "a"),
            target=doc.get("target", "distinction"),
            k=int(doc.get("k", 5)),
            seed=int(doc.get("seed", 0)),
            select_window=tuple(doc.get("select_window", DEFAULT_ELBOW_WINDOW)),
            select_override=doc.get("select_override"),
            downsample_ratio=int(doc.get("downsample_ratio", 2)),
        )


@dataclass(frozen=True)
class EvaluationReport:
    """Outcome of one plan: scores, selection, confusion counts."""

    plan: ExperimentPlan
    fold_f1: tuple[float, ...]
    mean_f1: float
    ranking: tuple[tuple[str, float], ...]
    selected: tuple[str, ...]
    confusion: tuple[int, int, int, int]  # tp, fp, fn, tn over all test rows
    best_point: dict
    warnings: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not 0.0 <= s <= 1.0 for s in (*self.fold_f1, self.mean_f1)):
            raise ValidationError("F1 values must lie in [0, 1]")

    @property
    def test_size(self) -> int:
        return sum(self.confusion)

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "plan": self.plan.to_json(),
            "fold_f1": list(self.fold_f1),
            "mean_f1": self.mean_f1,
            "ranking": [[name, score] for name, score in self.ranking],
            "selected": list(self.selected),
            "confusion": {
                "tp": self.confusion[0],
                "fp": self.confusion[1],
                "fn": self.confusion[2],
                "tn": self.confusion[3],
            },
            "best_point": self.best_point,
            "warnings": list(self.warnings),
            "extras": self.extras,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EvaluationReport":
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported report schema version {doc.get('schema_version')!r}"
            )
        conf = doc["confusion"]
        return cls(
            plan=ExperimentPlan.from_json(doc["plan"]),
            fold_f1=tuple(doc["fold_f1"]),
            mean_f1=doc["mean_f1"],
            ranking=tuple((name, score) for name, score in doc["ranking"]),
            selected=tuple(doc["selected"]),
            confusion=(conf["tp"], conf["fp"], conf["fn"], conf["tn"]),
            best_point=dict(doc["best_point"]),
            warnings=tuple(doc["warnings"]),
            extras=dict(doc["extras"]),
        )


def _confusion(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true != 1) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred != 1)))
    tn = int(np.sum((y_true != 1) & (y_pred != 1)))
    return np.array([tp, fp, fn, tn])


def _resolve_matrix(data, slice_name: str, method: str) -> FeatureMatrix:
    if isinstance(data, FeatureMatrix):
        return data
    if isinstance(data, CourseData):
        return build_matrix(data, slice_name, method)
    raise ValidationError(f"expected CourseData or FeatureMatrix, got {type(data)!r}")


def fit_on_rows(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: tuple[str, ...],
    train_rows: np.ndarray,
    plan: ExperimentPlan,
    inner_seed: int,
) -> tuple[TrainedModel, tuple[str, ...], dict]:
    """Feature-select and grid-search on the given rows only.

    Returns the refit model, the selected feature names (ranking order) and
    the winning hyperparameter point.  This is the single fitting path for
    every evaluation mode, so leakage tests can target it directly.
    """
    Xt = X[train_rows]
    yt = y[train_rows]
    pairs = chi2_scores_array(Xt, yt, feature_names)
    cut = elbow_cutoff(
        [score for _, score in pairs],
        window=plan.select_window,
        override=plan.select_override,
    )
    selected = tuple(name for name, _ in pairs[:cut])
    cols = [feature_names.index(name) for name in selected]
    spec = ModelSpec.for_family(plan.family, seed=plan.seed)
    result = grid_search_cv(
        Xt[:, cols], yt, spec, selected, k=plan.k, seed=inner_seed
    )
    return result.model, selected, result.best_point


def same_class_eval(plan: ExperimentPlan, data) -> EvaluationReport:
    """Stratified k-fold CV on one course; selection redone inside each fold."""
    plan.validate()
    if plan.mode != "same_class":
        raise ValidationError(f"same_class_eval got mode {plan.mode!r}")
    fm = _resolve_matrix(data, plan.train_slice, plan.method)
    X, y = fm.to_xy(plan.target)
    fold = stratified_kfold(y, k=plan.k, seed=plan.seed)

    fold_scores: list[float] = []
    fold_points: list[dict] = []
    confusion = np.zeros(4, dtype=int)
    for f in range(plan.k):
        train_rows = fold != f
        model, selected, point = fit_on_rows(
            X, y, fm.feature_names, train_rows, plan,
            inner_seed=plan.seed + _FOLD_SEED_STRIDE * (f + 1),
        )
        cols = [fm.feature_names.index(name) for name in selected]
        pred = model.predict(X[~train_rows][:, cols], selected)
        fold_scores.append(f1(y[~train_rows], pred))
        fold_points.append(point)
        confusion += _confusion(y[~train_rows], pred)

    # whole-class ranking kept alongside the per-fold ones for inspection
    ranked = rank_features(
        fm, plan.target, window=plan.select_window, override=plan.select_override
    )
    return EvaluationReport(
        plan=plan,
        fold_f1=tuple(fold_scores),
        mean_f1=float(np.mean(fold_scores)),
        ranking=ranked.ranking,
        selected=ranked.selected(),
        confusion=tuple(int(c) for c in confusion),
        best_point={},
        extras={
            "n_students": fm.n_students,
            "n_positive": int(y.sum()),
            "fold_best_points": fold_points,
        },
    )


def _transfer_core(
    plan: ExperimentPlan,
    fm_train: FeatureMatrix,
    fm_test: FeatureMatrix,
    train_rows: np.ndarray,
    extras: dict,
) -> EvaluationReport:
    if fm_train.feature_names != fm_test.feature_names:
        diff = sorted(
            set(fm_train.feature_names) ^ set(fm_test.feature_names)
        ) or ["<same names, different order>"]
        raise ContractError(f"feature contract mismatch between courses: {diff}")

    X, y = fm_train.to_xy(plan.target)
    model, selected, point = fit_on_rows(
        X, y, fm_train.feature_names, train_rows, plan,
        inner_seed=plan.seed + _FOLD_SEED_STRIDE,
    )
    cols = [fm_train.feature_names.index(name) for name in selected]
    Xt, yt = fm_test.to_xy(plan.target)
    pred = model.predict(Xt[:, cols], selected)
    score = f1(yt, pred)

    warnings = []
    if int(yt.sum()) == 0:
        warnings.append(
            "no positive labels in the test course: recall undefined, F1 recorded as 0"
        )
        log.warning(warnings[-1])

    train_pairs = chi2_scores_array(X[train_rows], y[train_rows], fm_train.feature_names)
    return EvaluationReport(
        plan=plan,
        fold_f1=(score,),
        mean_f1=score,
        ranking=tuple(train_pairs),
        selected=selected,
        confusion=tuple(int(c) for c in _confusion(yt, pred)),
        best_point=point,
        warnings=tuple(warnings),
        extras=extras,
    )


def transfer_eval(plan: ExperimentPlan, train_data, test_data) -> EvaluationReport:
    """Fit wholly on the training course, score once on the test course."""
    plan.validate()
    if plan.mode not in ("cross_offering", "cross_course"):
        raise ValidationError(f"transfer_eval got mode {plan.mode!r}")
    fm_train = _resolve_matrix(train_data, plan.train_slice, plan.method)
    fm_test = _resolve_matrix(test_data, plan.test_slice or plan.train_slice, plan.method)
    return _transfer_core(
        plan,
        fm_train,
        fm_test,
        train_rows=np.ones(fm_train.n_students, dtype=bool),
        extras={"n_train": fm_train.n_students, "n_test": fm_test.n_students},
    )


def at_risk_eval(
    plan: ExperimentPlan, train_data, test_data=None
) -> EvaluationReport:
    """At-risk classification with 2:1 majority downsampling on training rows.

    With a test course this is a transfer run; without one it is k-fold CV
    with the downsample redrawn inside every training fold.  Test rows stay
    at natural prevalence either way.
    """
    plan.validate()
    if plan.mode != "at_risk":
        raise ValidationError(f"at_risk_eval got mode {plan.mode!r}")
    fm_train = _resolve_matrix(train_data, plan.train_slice, plan.method)
    X, y = fm_train.to_xy("at_risk")
    n_minority = int(y.sum())
    if n_minority < 5:
        raise TrainingError(
            f"only {n_minority} at-risk students in {plan.train_course}; need >= 5"
        )

    if test_data is not None:
        keep = downsample_indices(y, ratio=plan.downsample_ratio, seed=plan.seed)
        train_rows = np.zeros(len(y), dtype=bool)
        train_rows[keep] = True
        kept_majority = int(len(keep) - y[keep].sum())
        log.info("downsample: kept %d at-risk, %d majority", n_minority, kept_majority)
        fm_test = _resolve_matrix(
            test_data, plan.test_slice or plan.train_slice, plan.method
        )
        return _transfer_core(
            plan,
            fm_train,
            fm_test,
            train_rows=train_rows,
            extras={
                "downsample": [n_minority, kept_majority],
                "n_train": fm_train.n_students,
                "n_test": fm_test.n_students,
            },
        )

    fold = stratified_kfold(y, k=plan.k, seed=plan.seed)
    fold_scores: list[float] = []
    fold_points: list[dict] = []
    downsamples: list[list[int]] = []
    confusion = np.zeros(4, dtype=int)
    for f in range(plan.k):
        in_train = np.nonzero(fold != f)[0]
        keep = in_train[
            downsample_indices(
                y[in_train], ratio=plan.downsample_ratio,
                seed=plan.seed + _FOLD_SEED_STRIDE * (f + 1),
            )
        ]
        train_rows = np.zeros(len(y), dtype=bool)
        train_rows[keep] = True
        downsamples.append([int(y[keep].sum()), int(len(keep) - y[keep].sum())])
        model, selected, point = fit_on_rows(
            X, y, fm_train.feature_names, train_rows, plan,
            inner_seed=plan.seed + _FOLD_SEED_STRIDE * (f + 1),
        )
        cols = [fm_train.feature_names.index(name) for name in selected]
        test_rows = fold == f
        pred = model.predict(X[test_rows][:, cols], selected)
        fold_scores.append(f1(y[test_rows], pred))
        fold_points.append(point)
        confusion += _confusion(y[test_rows], pred)

    ranked = rank_features(
        fm_train, "at_risk", window=plan.select_window, override=plan.select_override
    )
    return EvaluationReport(
        plan=plan,
        fold_f1=tuple(fold_scores),
        mean_f1=float(np.mean(fold_scores)),
        ranking=ranked.ranking,
        selected=ranked.selected(),
        confusion=tuple(int(c) for c in confusion),
        best_point={},
        extras={
            "n_students": fm_train.n_students,
            "n_positive": n_minority,
            "fold_best_points": fold_points,
            "fold_downsamples": downsamples,
        },
    )


def run_plan(plan: ExperimentPlan, train_data, test_data=None) -> EvaluationReport:
    """Dispatch a plan to the matching evaluation."""
    if plan.mode == "same_class":
        return same_class_eval(plan, train_data)
    if plan.mode == "at_risk":
        return at_risk_eval(plan, train_data, test_data)
    return transfer_eval(plan, train_data, test_data)


# ---------------------------------------------------------------------------
# Emission.  One JSON (round-trippable) and one CSV row per report.

REPORT_CSV_HEADER = [
    "mode", "train_course", "train_slice", "test_course", "test_slice",
    "method", "family", "target", "k", "seed", "selected_k", "mean_f1",
    "fold_f1", "tp", "fp", "fn", "tn",
]


def report_csv_row(report: EvaluationReport) -> list:
    plan = report.plan
    return [
        plan.mode,
        plan.train_course,
        plan.train_slice,
        plan.test_course or "",
        plan.test_slice or "",
        plan.method,
        plan.family,
        plan.target,
        plan.k,
        plan.seed,
        len(report.selected),
        repr(report.mean_f1),
        ";".join(repr(s) for s in report.fold_f1),
        *report.confusion,
    ]


def emit_report(report: EvaluationReport, json_path: str | Path,
                csv_path: str | Path | None = None) -> None:
    Path(json_path).write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_CSV_HEADER)
            writer.writerow(report_csv_row(report))


def read_report(path: str | Path) -> EvaluationReport:
    return EvaluationReport.from_json(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


def write_report_table(reports: list[EvaluationReport], path: str | Path) -> None:
    """All cells as one CSV, ordered deterministically."""
    rows = sorted(report_csv_row(r) for r in reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER)
        writer.writerows(rows)


def cell_name(plan: ExperimentPlan) -> str:
    """Stable file stem for one experiment cell."""
    parts = [plan.mode, plan.train_course, plan.train_slice]
    if plan.test_course:
        parts += [plan.test_course, plan.test_slice or plan.train_slice]
    parts += [plan.method, plan.family, plan.target, f"seed{plan.seed}"]
    return "_".join(str(p) for p in parts)
