"""Inactivity-based session segmentation and per-student session features.

Two session granularities share one rule: consecutive actions stay in a
session while the gap between them is at most ``m`` minutes; the first gap
strictly greater than ``m`` opens a new session.  Browser sessions use
m=15 (short break, same browser likely still open); study sessions use
m=40 (student plausibly changed tasks or stopped working).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ContractError
from .ingest import (
    Platform,
    TimeSlice,
    UnifiedAction,
    UnifiedLog,
    format_instant,
    minutes_between,
)


class SessionKind(str, Enum):
    BROWSER = "browser"
    STUDY = "study"


CUTOFF_MINUTES: dict[SessionKind, float] = {
    SessionKind.BROWSER: 15.0,
    SessionKind.STUDY: 40.0,
}

FORUM_CONTRIBUTION_KINDS = frozenset({"post", "reply", "comment"})


@dataclass(frozen=True)
class Session:
    """A maximal run of one student's actions with no gap above the cutoff."""

    student_id: str
    kind: SessionKind
    actions: tuple[UnifiedAction, ...]

    @property
    def start(self) -> datetime:
        return self.actions[0].timestamp

    @property
    def end(self) -> datetime:
        return self.actions[-1].timestamp

    @property
    def duration_minutes(self) -> float:
        return minutes_between(self.start, self.end)

    @property
    def homogeneous(self) -> bool:
        first = self.actions[0].platform
        return all(a.platform is first for a in self.actions)

    @property
    def has_forum_contribution(self) -> bool:
        return any(
            a.platform is Platform.FORUM and a.action_kind in FORUM_CONTRIBUTION_KINDS
            for a in self.actions
        )


def segment(log: UnifiedLog, kind: SessionKind) -> list[Session]:
    """Split each student's action stream at gaps above the kind's cutoff.

    A gap exactly equal to the cutoff stays in-session.  Single actions form
    zero-duration sessions.
    """
    cutoff = CUTOFF_MINUTES[kind]
    sessions: list[Session] = []
    for student, actions in log.by_student():
        run: list[UnifiedAction] = [actions[0]]
        for prev, cur in zip(actions, actions[1:]):
            if minutes_between(prev.timestamp, cur.timestamp) > cutoff:
                sessions.append(Session(student, kind, tuple(run)))
                run = [cur]
            else:
                run.append(cur)
        sessions.append(Session(student, kind, tuple(run)))
    return sessions


SESSION_FEATURE_NAMES = (
    "num_sessions",
    "avg_actions_per_session",
    "total_actions",
    "avg_duration",
    "total_time",
    "avg_gap",
    "inconsistency",
    "num_homogeneous",
    "pct_homogeneous",
    "num_heterogeneous",
    "pct_heterogeneous",
    "piazza_ratio",
    "piazza_questions",
    "piazza_answers",
)


@dataclass(frozen=True)
class SessionFeatureRow:
    """Session metrics for one student, one session kind, one time window.

    total_time is the plain sum of session durations and avg_duration =
    total_time / num_sessions.  inconsistency = avg_gap * (class-max session
    count - own session count), a disengagement proxy that is zero for the
    most active student.
    """

    num_sessions: float
    avg_actions_per_session: float
    total_actions: float
    avg_duration: float
    total_time: float
    avg_gap: float
    inconsistency: float
    num_homogeneous: float
    pct_homogeneous: float
    num_heterogeneous: float
    pct_heterogeneous: float
    piazza_ratio: float
    piazza_questions: float
    piazza_answers: float

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


def session_features(
    sessions: Iterable[Session],
    window: TimeSlice,
    class_max_sessions: int,
    students: Iterable[str] | None = None,
) -> dict[str, SessionFeatureRow]:
    """Per-student session features over sessions starting inside ``window``.

    ``class_max_sessions`` must be the true class-wide maximum of in-window
    session counts; a smaller value is a caller bug and raises.  ``students``
    selects who gets a row (default: every student with a session); students
    with no in-window sessions get zero counts and the maximal-gap penalty
    avg_gap = window length.
    """
    per_student: dict[str, list[Session]] = {}
    kinds = set()
    for s in sessions:
        kinds.add(s.kind)
        if window.contains(s.start):
            per_student.setdefault(s.student_id, []).append(s)
    if len(kinds) > 1:
        raise ContractError("session_features requires sessions of a single kind")

    if students is None:
        wanted = sorted(per_student)
    else:
        wanted = sorted(set(students))

    rows: dict[str, SessionFeatureRow] = {}
    for student in wanted:
        chosen = sorted(per_student.get(student, []), key=lambda s: s.start)
        n = len(chosen)
        if n > class_max_sessions:
            raise ContractError(
                f"class_max_sessions={class_max_sessions} below {student}'s count {n}"
            )
        total_actions = sum(len(s.actions) for s in chosen)
        avg_actions = total_actions / n if n else 0.0
        total_time = float(sum(s.duration_minutes for s in chosen))
        avg_duration = total_time / n if n else 0.0
        if n >= 2:
            gaps = [
                minutes_between(a.end, b.start) for a, b in zip(chosen, chosen[1:])
            ]
            avg_gap = sum(gaps) / len(gaps)
        else:
            avg_gap = window.minutes
        inconsistency = avg_gap * (class_max_sessions - n)
        n_homog = sum(1 for s in chosen if s.homogeneous)
        n_heterog = n - n_homog
        n_forum = sum(1 for s in chosen if s.has_forum_contribution)
        questions = sum(
            1
            for s in chosen
            for a in s.actions
            if a.platform is Platform.FORUM and a.action_kind == "post"
        )
        answers = sum(
            1
            for s in chosen
            for a in s.actions
            if a.platform is Platform.FORUM and a.action_kind in ("reply", "comment")
        )
        rows[student] = SessionFeatureRow(
            num_sessions=float(n),
            avg_actions_per_session=avg_actions,
            total_actions=float(total_actions),
            avg_duration=avg_duration,
            total_time=total_time,
            avg_gap=avg_gap,
            inconsistency=inconsistency,
            num_homogeneous=float(n_homog),
            pct_homogeneous=n_homog / n if n else 0.0,
            num_heterogeneous=float(n_heterog),
            pct_heterogeneous=n_heterog / n if n else 0.0,
            piazza_ratio=n_forum / n if n else 0.0,
            piazza_questions=float(questions),
            piazza_answers=float(answers),
        )
    return rows


def class_max_sessions(
    sessions: Iterable[Session],
    window: TimeSlice,
    students: Iterable[str],
) -> int:
    """Max in-window session count over the given students (0 if none)."""
    wanted = set(students)
    counts: dict[str, int] = {}
    for s in sessions:
        if s.student_id in wanted and window.contains(s.start):
            counts[s.student_id] = counts.get(s.student_id, 0) + 1
    return max(counts.values(), default=0)


SESSIONS_CSV_HEADER = ["student_id", "kind", "start", "end", "n_actions", "homogeneity"]


def write_sessions_csv(sessions: Iterable[Session], path: str | Path) -> None:
    """Inspection export; one row per session."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SESSIONS_CSV_HEADER)
        for s in sessions:
            writer.writerow(
                [
                    s.student_id,
                    s.kind.value,
                    format_instant(s.start),
                    format_instant(s.end),
                    len(s.actions),
                    "homogeneous" if s.homogeneous else "heterogeneous",
                ]
            )
