"""Per-student feature matrices: five graph metrics plus the fourteen session
metrics for each session kind, 33 columns total.

Column order is part of the on-disk contract (schema version below); models
trained on one course apply to another only because both sides agree on it.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import SchemaError, ValidationError
from .graphs import GRAPH_FEATURE_NAMES, GraphFeatureRow
from .ingest import CourseConfig
from .sessions import SESSION_FEATURE_NAMES, SessionFeatureRow

log = logging.getLogger(__name__)

FEATURE_SCHEMA_VERSION = 1

FEATURE_NAMES: tuple[str, ...] = (
    GRAPH_FEATURE_NAMES
    + tuple(f"{name}_browser" for name in SESSION_FEATURE_NAMES)
    + tuple(f"{name}_study" for name in SESSION_FEATURE_NAMES)
)

LABEL_TARGETS = ("distinction", "at_risk")


@dataclass(frozen=True)
class StudentLabels:
    distinction: bool
    at_risk: bool


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows for one course, time slice and graph construction."""

    course_id: str
    slice_name: str
    graph_method: str
    feature_names: tuple[str, ...]
    student_ids: tuple[str, ...]
    values: np.ndarray
    grades: tuple[float | None, ...]
    distinction_threshold: float = 90.0
    at_risk_threshold: float = 70.0

    def __post_init__(self):
        if self.values.shape != (len(self.student_ids), len(self.feature_names)):
            raise ValidationError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.student_ids)} students x {len(self.feature_names)} features"
            )
        if len(self.grades) != len(self.student_ids):
            raise ValidationError("one grade slot per student required")

    @property
    def n_students(self) -> int:
        return len(self.student_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)].copy()

    def row(self, student_id: str) -> np.ndarray:
        return self.values[self.student_ids.index(student_id)].copy()

    def labels(self) -> dict[str, StudentLabels]:
        """Both binary outcomes per student; every student must have a grade."""
        out: dict[str, StudentLabels] = {}
        for student, grade in zip(self.student_ids, self.grades):
            if grade is None:
                raise ValidationError(f"grade missing for student {student!r}")
            out[student] = StudentLabels(
                distinction=grade >= self.distinction_threshold,
                at_risk=grade < self.at_risk_threshold,
            )
        return out

    def to_xy(self, target: str) -> tuple[np.ndarray, np.ndarray]:
        """Feature array plus 0/1 vector for one target outcome."""
        if target not in LABEL_TARGETS:
            raise ValidationError(f"unknown label target {target!r}")
        labels = self.labels()
        y = np.array(
            [getattr(labels[s], target) for s in self.student_ids], dtype=int
        )
        return self.values.copy(), y

    def select(self, names: Iterable[str]) -> "FeatureMatrix":
        """Column-subset copy preserving the requested order."""
        names = tuple(names)
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise ValidationError(f"unknown feature names: {missing}")
        cols = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(
            course_id=self.course_id,
            slice_name=self.slice_name,
            graph_method=self.graph_method,
            feature_names=names,
            student_ids=self.student_ids,
            values=self.values[:, cols].copy(),
            grades=self.grades,
            distinction_threshold=self.distinction_threshold,
            at_risk_threshold=self.at_risk_threshold,
        )


def _as_unique(rows, what: str) -> dict:
    if isinstance(rows, Mapping):
        return dict(rows)
    out = {}
    for student, row in rows:
        if student in out:
            raise ValidationError(f"duplicate student {student!r} in {what} rows")
        out[student] = row
    return out


def assemble(
    browser_rows: Mapping[str, SessionFeatureRow] | Iterable[tuple[str, SessionFeatureRow]],
    study_rows: Mapping[str, SessionFeatureRow] | Iterable[tuple[str, SessionFeatureRow]],
    graph_rows: Mapping[str, GraphFeatureRow] | Iterable[tuple[str, GraphFeatureRow]],
    config: CourseConfig,
    slice_name: str,
    graph_method: str,
) -> FeatureMatrix:
    """Outer-join the three feature families over the roster.

    Rostered students absent from an input get zeros for that block;
    participants not in the roster (staff, outsiders) are dropped.
    """
    browser = _as_unique(browser_rows, "browser session")
    study = _as_unique(study_rows, "study session")
    graph = _as_unique(graph_rows, "graph")

    roster = sorted(config.roster)
    rosterless = sorted(
        (set(browser) | set(study) | set(graph)) - set(roster)
    )
    if rosterless:
        log.info("dropping %d rosterless participants: %s",
                 len(rosterless), ", ".join(rosterless[:5]))

    zero_session = (0.0,) * len(SESSION_FEATURE_NAMES)
    zero_graph = (0.0,) * len(GRAPH_FEATURE_NAMES)
    values = np.empty((len(roster), len(FEATURE_NAMES)))
    for i, student in enumerate(roster):
        g = graph[student].values() if student in graph else zero_graph
        b = browser[student].values() if student in browser else zero_session
        s = study[student].values() if student in study else zero_session
        values[i] = g + b + s

    return FeatureMatrix(
        course_id=config.course_id,
        slice_name=slice_name,
        graph_method=graph_method,
        feature_names=FEATURE_NAMES,
        student_ids=tuple(roster),
        values=values,
        grades=tuple(config.roster[s] for s in roster),
        distinction_threshold=config.distinction_threshold,
        at_risk_threshold=config.at_risk_threshold,
    )


# ---------------------------------------------------------------------------
# Serialization: CSV of rows plus a metadata sidecar.

def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def write_feature_matrix(fm: FeatureMatrix, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["student_id", *fm.feature_names, "grade", "distinction", "at_risk"])
        for i, student in enumerate(fm.student_ids):
            grade = fm.grades[i]
            if grade is None:
                tail = ["", "", ""]
            else:
                tail = [
                    repr(float(grade)),
                    int(grade >= fm.distinction_threshold),
                    int(grade < fm.at_risk_threshold),
                ]
            writer.writerow([student, *(repr(float(v)) for v in fm.values[i]), *tail])
    meta = {
        "schema_version": FEATURE_SCHEMA_VERSION,
        "course_id": fm.course_id,
        "slice": fm.slice_name,
        "graph_method": fm.graph_method,
        "feature_names": list(fm.feature_names),
        "n_students": fm.n_students,
        "distinction_threshold": fm.distinction_threshold,
        "at_risk_threshold": fm.at_risk_threshold,
    }
    _sidecar_path(path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_feature_matrix(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    try:
        meta = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError(f"metadata sidecar missing for {path}")
    if meta.get("schema_version") != FEATURE_SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported feature schema version {meta.get('schema_version')!r}"
        )
    names = tuple(meta["feature_names"])
    students: list[str] = []
    grades: list[float | None] = []
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["student_id", *names, "grade", "distinction", "at_risk"]
        if header != expected:
            raise SchemaError(f"feature csv header mismatch in {path}")
        for rec in reader:
            students.append(rec[0])
            rows.append([float(v) for v in rec[1 : 1 + len(names)]])
            raw_grade = rec[1 + len(names)]
            grades.append(float(raw_grade) if raw_grade else None)
    values = np.array(rows) if rows else np.empty((0, len(names)))
    return FeatureMatrix(
        course_id=meta["course_id"],
        slice_name=meta["slice"],
        graph_method=meta["graph_method"],
        feature_names=names,
        student_ids=tuple(students),
        values=values,
        grades=tuple(grades),
        distinction_threshold=float(meta["distinction_threshold"]),
        at_risk_threshold=float(meta["at_risk_threshold"]),
    )
