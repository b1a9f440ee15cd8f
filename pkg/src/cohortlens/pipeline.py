"""Course-level composition: load every input for a course, build feature
matrices per (time slice, graph method), and produce the graph-metric /
final-grade correlation table.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import ValidationError
from .features import FeatureMatrix, assemble
from .graphs import (
    GRAPH_FEATURE_NAMES,
    GraphMethod,
    build_graph,
    graph_features,
)
from .ingest import (
    CourseConfig,
    CourseSources,
    ThreadSet,
    TimeSlice,
    UnifiedLog,
    course_slices,
    filter_anonymous,
    load_course_sources,
    parse_clickstream,
    parse_forum_export,
    unify,
)
from .sessions import (
    SessionKind,
    class_max_sessions,
    segment,
    session_features,
)
from .stats import spearman

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CourseData:
    """Everything loaded for one course: config, forum threads, unified log."""

    sources: CourseSources
    threads: ThreadSet
    log: UnifiedLog
    slices: dict[str, TimeSlice]

    @property
    def config(self) -> CourseConfig:
        return self.sources.config

    @cached_property
    def _sessions(self) -> dict[SessionKind, list]:
        return {kind: segment(self.log, kind) for kind in SessionKind}

    def sessions(self, kind: SessionKind) -> list:
        return self._sessions[kind]


def load_course(config_path: str | Path) -> CourseData:
    """Parse the config plus every input it references into one bundle."""
    sources = load_course_sources(config_path)
    threads = ThreadSet()
    if sources.forum_export is not None:
        threads = filter_anonymous(
            parse_forum_export(sources.forum_export, sources.default_utc_offset)
        )
    streams = [
        parse_clickstream(
            path,
            platform,
            roster=sources.config.roster,
            default_offset=sources.default_utc_offset,
        )
        for platform, path in sorted(sources.clickstreams.items())
    ]
    ulog = unify(streams, threads)
    slices = course_slices(sources.config, fallback_start=ulog.earliest())
    log.info(
        "loaded course %s: %d students, %d threads, %d actions",
        sources.config.course_id,
        len(sources.config.roster),
        len(threads.threads),
        len(ulog),
    )
    return CourseData(sources=sources, threads=threads, log=ulog, slices=slices)


def build_matrix(
    data: CourseData, slice_name: str, method: GraphMethod | str
) -> FeatureMatrix:
    """The 33-column matrix for one slice and graph construction."""
    if slice_name not in data.slices:
        raise ValidationError(
            f"unknown slice {slice_name!r}; have {sorted(data.slices)}"
        )
    window = data.slices[slice_name]
    method = GraphMethod(method)
    roster = sorted(data.config.roster)

    session_rows = {}
    for kind in (SessionKind.BROWSER, SessionKind.STUDY):
        sessions = data.sessions(kind)
        cap = class_max_sessions(sessions, window, roster)
        session_rows[kind] = session_features(sessions, window, cap, students=roster)

    graph = build_graph(data.threads, method, window)
    graph_rows = graph_features(graph, roster)
    return assemble(
        browser_rows=session_rows[SessionKind.BROWSER],
        study_rows=session_rows[SessionKind.STUDY],
        graph_rows=graph_rows,
        config=data.config,
        slice_name=slice_name,
        graph_method=method.value,
    )


# ---------------------------------------------------------------------------
# Correlation table: graph metrics against the final grade.

CORRELATION_HEADER = ["slice", "method"] + [
    f"{metric}_{part}" for metric in GRAPH_FEATURE_NAMES for part in ("rho", "p")
]


def correlation_rows(
    data: CourseData, methods: tuple[str, ...] = ("a", "b")
) -> list[dict[str, object]]:
    """One row per slice x method: Spearman rho and p of each graph metric
    against the final grade, over students with grades.

    Metrics that are constant in a slice (commonly betweenness on sparse
    windows) get blank cells rather than failing the whole table.
    """
    rows: list[dict[str, object]] = []
    for slice_name in sorted(data.slices):
        for method in methods:
            fm = build_matrix(data, slice_name, method)
            graded = [i for i, g in enumerate(fm.grades) if g is not None]
            grades = [fm.grades[i] for i in graded]
            row: dict[str, object] = {"slice": slice_name, "method": method}
            for metric in GRAPH_FEATURE_NAMES:
                column = fm.column(metric)[graded]
                try:
                    rho, p = spearman(column, grades)
                    row[f"{metric}_rho"] = rho
                    row[f"{metric}_p"] = p
                except ValidationError as exc:
                    log.warning(
                        "%s/%s/%s: correlation undefined (%s)",
                        fm.course_id, slice_name, metric, exc,
                    )
                    row[f"{metric}_rho"] = None
                    row[f"{metric}_p"] = None
            rows.append(row)
    return rows


def write_correlation_csv(rows: list[dict[str, object]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CORRELATION_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row["slice"],
                    row["method"],
                    *(
                        "" if row[col] is None else repr(float(row[col]))
                        for col in CORRELATION_HEADER[2:]
                    ),
                ]
            )
