"""Parsers for per-platform activity exports and the unified course log.

Forum exports arrive as nested JSON (threads -> replies -> comments),
clickstreams as flat CSV with one file per platform.  All timestamps are
normalized to UTC at parse time and everything is merged into a single
time-sorted transaction log keyed by student.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ConfigError, ParseError, SchemaError, ValidationError

log = logging.getLogger(__name__)

ISO_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class Platform(str, Enum):
    """Origin system of a logged action."""

    FORUM = "Forum"
    LMS = "LMS"
    ASSIGNMENTS = "Assignments"
    VCS = "VCS"
    CI = "CI"


class Role(str, Enum):
    STUDENT = "student"
    TA = "ta"
    INSTRUCTOR = "instructor"


class Anonymity(str, Enum):
    NONE = "none"
    PARTIAL = "partial"
    COMPLETE = "complete"


def parse_instant(text: str, default_offset: str = "+00:00") -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime, second resolution.

    Naive timestamps are interpreted at ``default_offset``.
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ParseError(f"invalid timestamp {text!r}: {exc}") from None
    if dt.tzinfo is None:
        try:
            anchor = datetime.fromisoformat(f"2000-01-01T00:00:00{default_offset}")
        except ValueError:
            raise ConfigError(f"invalid UTC offset {default_offset!r}") from None
        dt = dt.replace(tzinfo=anchor.tzinfo)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_instant(dt: datetime) -> str:
    """Render a UTC timestamp in the canonical ``...Z`` form used on disk."""
    return dt.astimezone(timezone.utc).strftime(ISO_FORMAT)


def minutes_between(earlier: datetime, later: datetime) -> float:
    return (later - earlier).total_seconds() / 60.0


# ---------------------------------------------------------------------------
# Unified actions


@dataclass(frozen=True)
class UnifiedAction:
    """One timestamped student action on one platform; atom of the pipeline."""

    student_id: str
    timestamp: datetime
    platform: Platform
    action_kind: str
    detail: str | None = None

    def __post_init__(self) -> None:
        if not self.student_id:
            raise ValidationError("UnifiedAction requires a non-empty student_id")


def action_sort_key(a: UnifiedAction) -> tuple:
    # Ties at one instant break lexicographically by (platform, action_kind);
    # detail only disambiguates otherwise-identical rows for determinism.
    return (a.student_id, a.timestamp, a.platform.value, a.action_kind, a.detail or "")


@dataclass(frozen=True)
class UnifiedLog:
    """Immutable, time-sorted action log for one course."""

    actions: tuple[UnifiedAction, ...]

    def __len__(self) -> int:
        return len(self.actions)

    def by_student(self) -> Iterator[tuple[str, list[UnifiedAction]]]:
        """Yield ``(student_id, actions)`` groups in sorted order."""
        bucket: list[UnifiedAction] = []
        current: str | None = None
        for a in self.actions:
            if a.student_id != current:
                if bucket:
                    yield current, bucket  # type: ignore[misc]
                current, bucket = a.student_id, []
            bucket.append(a)
        if bucket:
            yield current, bucket  # type: ignore[misc]

    def earliest(self) -> datetime | None:
        return min((a.timestamp for a in self.actions), default=None)

    def latest(self) -> datetime | None:
        return max((a.timestamp for a in self.actions), default=None)


# ---------------------------------------------------------------------------
# Forum threads


@dataclass(frozen=True)
class Post:
    post_id: str
    author_id: str | None
    role: Role
    timestamp: datetime
    anonymity: Anonymity = Anonymity.NONE


@dataclass(frozen=True)
class Reply:
    post: Post
    comments: tuple[Post, ...] = ()


@dataclass(frozen=True)
class Thread:
    head: Post
    replies: tuple[Reply, ...] = ()

    def posts(self) -> Iterator[Post]:
        """All posts in document order: head, then each reply and its comments."""
        yield self.head
        for reply in self.replies:
            yield reply.post
            yield from reply.comments


@dataclass(frozen=True)
class ThreadSet:
    threads: tuple[Thread, ...] = ()

    def posts(self) -> Iterator[Post]:
        for t in self.threads:
            yield from t.posts()

    def n_posts(self) -> int:
        return sum(1 for _ in self.posts())

    def n_replies(self) -> int:
        return sum(len(t.replies) for t in self.threads)

    def n_comments(self) -> int:
        return sum(len(r.comments) for t in self.threads for r in t.replies)

    def participants(self) -> dict[str, Role]:
        """Authors appearing anywhere in the set (anonymous posts excluded)."""
        out: dict[str, Role] = {}
        for p in self.posts():
            if p.author_id is not None:
                out.setdefault(p.author_id, p.role)
        return out


def validate_thread_set(ts: ThreadSet) -> None:
    """Check structural invariants of an in-memory thread set.

    Raises ValidationError on: author present on a completely anonymous post
    (or absent on any other), a reply earlier than its thread head, or a
    comment earlier than the reply it annotates.
    """
    for thread in ts.threads:
        for p in thread.posts():
            complete = p.anonymity is Anonymity.COMPLETE
            if complete and p.author_id is not None:
                raise ValidationError(
                    f"post {p.post_id}: author_id present on a completely anonymous post"
                )
            if not complete and p.author_id is None:
                raise ValidationError(f"post {p.post_id}: author_id missing")
        head_t = thread.head.timestamp
        for reply in thread.replies:
            if reply.post.timestamp < head_t:
                raise ValidationError(
                    f"post {reply.post.post_id}: reply earlier than thread head"
                )
            for c in reply.comments:
                if c.timestamp < head_t:
                    raise ValidationError(
                        f"post {c.post_id}: comment earlier than thread head"
                    )
                if c.timestamp < reply.post.timestamp:
                    raise ValidationError(
                        f"post {c.post_id}: comment earlier than the reply it annotates"
                    )


def _post_from_json(obj: dict, where: str, default_offset: str) -> Post:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    for key in ("id", "role", "time", "anonymity"):
        if key not in obj:
            raise SchemaError(f"{where}: missing required field '{key}'")
    try:
        role = Role(obj["role"])
    except ValueError:
        raise SchemaError(f"{where}: unknown role {obj['role']!r}") from None
    try:
        anonymity = Anonymity(obj["anonymity"])
    except ValueError:
        raise SchemaError(f"{where}: unknown anonymity {obj['anonymity']!r}") from None
    author = obj.get("author")
    if anonymity is Anonymity.COMPLETE and author is not None:
        raise SchemaError(
            f"{where}: field 'author' must be omitted when anonymity is 'complete'"
        )
    if anonymity is not Anonymity.COMPLETE and author is None:
        raise SchemaError(f"{where}: missing required field 'author'")
    try:
        when = parse_instant(str(obj["time"]), default_offset)
    except ParseError as exc:
        raise SchemaError(f"{where}: bad 'time' field: {exc}") from None
    return Post(
        post_id=str(obj["id"]),
        author_id=None if author is None else str(author),
        role=role,
        timestamp=when,
        anonymity=anonymity,
    )


def parse_forum_export(path: str | Path, default_offset: str = "+00:00") -> ThreadSet:
    """Parse a forum JSON export into a validated ThreadSet.

    Reply ordering is preserved exactly as listed in the file.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict) or "threads" not in doc:
        raise SchemaError(f"{path}: missing required field 'threads'")
    if not isinstance(doc["threads"], list):
        raise SchemaError(f"{path}: field 'threads' must be a list")

    threads: list[Thread] = []
    for i, tobj in enumerate(doc["threads"]):
        where = f"{path}: thread {i}"
        head = _post_from_json(tobj, where, default_offset)
        replies: list[Reply] = []
        raw_replies = tobj.get("replies", [])
        if not isinstance(raw_replies, list):
            raise SchemaError(f"{where}: field 'replies' must be a list")
        for j, robj in enumerate(raw_replies):
            rwhere = f"{where}, reply {j}"
            rpost = _post_from_json(robj, rwhere, default_offset)
            raw_comments = robj.get("comments", [])
            if not isinstance(raw_comments, list):
                raise SchemaError(f"{rwhere}: field 'comments' must be a list")
            comments = tuple(
                _post_from_json(cobj, f"{rwhere}, comment {k}", default_offset)
                for k, cobj in enumerate(raw_comments)
            )
            replies.append(Reply(post=rpost, comments=comments))
        threads.append(Thread(head=head, replies=tuple(replies)))

    ts = ThreadSet(threads=tuple(threads))
    validate_thread_set(ts)
    return ts


def _post_to_json(p: Post) -> dict:
    obj: dict = {"id": p.post_id}
    if p.author_id is not None:
        obj["author"] = p.author_id
    obj["role"] = p.role.value
    obj["time"] = format_instant(p.timestamp)
    obj["anonymity"] = p.anonymity.value
    return obj


def thread_set_to_json(ts: ThreadSet) -> dict:
    threads = []
    for t in ts.threads:
        tobj = _post_to_json(t.head)
        tobj["replies"] = []
        for r in t.replies:
            robj = _post_to_json(r.post)
            robj["comments"] = [_post_to_json(c) for c in r.comments]
            tobj["replies"].append(robj)
        threads.append(tobj)
    return {"threads": threads}


def write_forum_export(ts: ThreadSet, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(thread_set_to_json(ts), indent=2, sort_keys=False) + "\n",
        encoding="utf-8",
    )


def filter_anonymous(ts: ThreadSet) -> ThreadSet:
    """Drop completely anonymous posts.

    A completely anonymous head drops its whole thread; a dropped reply drops
    its comments.  Partially anonymous posts keep their real author and stay.
    """
    threads: list[Thread] = []
    for t in ts.threads:
        if t.head.anonymity is Anonymity.COMPLETE:
            continue
        replies = []
        for r in t.replies:
            if r.post.anonymity is Anonymity.COMPLETE:
                continue
            comments = tuple(
                c for c in r.comments if c.anonymity is not Anonymity.COMPLETE
            )
            replies.append(Reply(post=r.post, comments=comments))
        threads.append(Thread(head=t.head, replies=tuple(replies)))
    return ThreadSet(threads=tuple(threads))


def forum_actions(ts: ThreadSet) -> list[UnifiedAction]:
    """Convert forum posts to unified actions (skips authorless posts)."""
    out: list[UnifiedAction] = []
    skipped = 0
    for t in ts.threads:
        for post, kind in _posts_with_kinds(t):
            if post.author_id is None:
                skipped += 1
                continue
            out.append(
                UnifiedAction(
                    student_id=post.author_id,
                    timestamp=post.timestamp,
                    platform=Platform.FORUM,
                    action_kind=kind,
                    detail=post.post_id,
                )
            )
    if skipped:
        log.warning("forum_actions: skipped %d authorless posts", skipped)
    return out


def _posts_with_kinds(t: Thread) -> Iterator[tuple[Post, str]]:
    yield t.head, "post"
    for r in t.replies:
        yield r.post, "reply"
        for c in r.comments:
            yield c, "comment"


# ---------------------------------------------------------------------------
# Clickstream CSV

CLICKSTREAM_HEADER = ["student_id", "timestamp", "action_kind", "detail"]


def parse_clickstream(
    path: str | Path,
    platform: Platform,
    roster: Mapping[str, object] | None = None,
    default_offset: str = "+00:00",
) -> list[UnifiedAction]:
    """Parse one platform's clickstream CSV into unified actions.

    Rows for students missing from ``roster`` (when given) are retained but
    counted and logged.  Identical rows are kept as-is; no deduplication.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        return []
    if rows[0] != CLICKSTREAM_HEADER:
        raise SchemaError(
            f"{path}: expected header {','.join(CLICKSTREAM_HEADER)!r}, got {','.join(rows[0])!r}"
        )
    actions: list[UnifiedAction] = []
    unknown: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise SchemaError(f"{path}: row {lineno}: expected 4 columns, got {len(row)}")
        student_id, raw_ts, action_kind, detail = row
        if not student_id:
            raise SchemaError(f"{path}: row {lineno}: empty student_id")
        try:
            when = parse_instant(raw_ts, default_offset)
        except ParseError as exc:
            raise ParseError(f"{path}: row {lineno}: {exc}") from None
        if roster is not None and student_id not in roster:
            unknown.add(student_id)
        actions.append(
            UnifiedAction(
                student_id=student_id,
                timestamp=when,
                platform=platform,
                action_kind=action_kind,
                detail=detail or None,
            )
        )
    if unknown:
        log.warning(
            "%s: %d action(s) from %d student id(s) not on the roster",
            path,
            sum(1 for a in actions if a.student_id in unknown),
            len(unknown),
        )
    return actions


def write_clickstream(actions: Iterable[UnifiedAction], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CLICKSTREAM_HEADER)
        for a in actions:
            writer.writerow(
                [a.student_id, format_instant(a.timestamp), a.action_kind, a.detail or ""]
            )


# ---------------------------------------------------------------------------
# Unified log


def unify(
    streams: Iterable[Iterable[UnifiedAction]],
    threads: ThreadSet | None = None,
) -> UnifiedLog:
    """Merge per-platform streams plus forum posts into one sorted log.

    Sorting is by (student_id, timestamp), ties broken lexicographically by
    (platform, action_kind).  The output is a permutation of the inputs.
    """
    merged: list[UnifiedAction] = []
    for stream in streams:
        merged.extend(stream)
    if threads is not None:
        merged.extend(forum_actions(threads))
    merged.sort(key=action_sort_key)
    return UnifiedLog(actions=tuple(merged))


UNIFIED_HEADER = ["student_id", "timestamp", "platform", "action_kind", "detail"]


def write_unified_log(ulog: UnifiedLog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(UNIFIED_HEADER)
        for a in ulog.actions:
            writer.writerow(
                [
                    a.student_id,
                    format_instant(a.timestamp),
                    a.platform.value,
                    a.action_kind,
                    a.detail or "",
                ]
            )


def read_unified_log(path: str | Path) -> UnifiedLog:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        return UnifiedLog(actions=())
    if rows[0] != UNIFIED_HEADER:
        raise SchemaError(f"{path}: expected header {','.join(UNIFIED_HEADER)!r}")
    actions = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise SchemaError(f"{path}: row {lineno}: expected 5 columns")
        try:
            platform = Platform(row[2])
        except ValueError:
            raise SchemaError(f"{path}: row {lineno}: unknown platform {row[2]!r}") from None
        actions.append(
            UnifiedAction(
                student_id=row[0],
                timestamp=parse_instant(row[1]),
                platform=platform,
                action_kind=row[3],
                detail=row[4] or None,
            )
        )
    return UnifiedLog(actions=tuple(actions))


# ---------------------------------------------------------------------------
# Course configuration


@dataclass(frozen=True)
class CourseConfig:
    """Per-course dates, grading thresholds, and the graded roster."""

    course_id: str
    test1_date: datetime
    test2_date: datetime
    end_date: datetime
    roster: Mapping[str, float | None]
    distinction_threshold: float = 90.0
    at_risk_threshold: float = 70.0
    start_date: datetime | None = None

    def validate(self) -> None:
        if not (self.test1_date < self.test2_date < self.end_date):
            raise ConfigError("course dates must satisfy test1 < test2 < end")
        if self.start_date is not None and self.start_date >= self.test1_date:
            raise ConfigError("start_date must precede test1_date")
        for name, value in (
            ("distinction_threshold", self.distinction_threshold),
            ("at_risk_threshold", self.at_risk_threshold),
        ):
            if not (0.0 < value < 100.0):
                raise ConfigError(f"{name} must lie strictly inside (0, 100)")
        for student, grade in self.roster.items():
            if grade is not None and not (0.0 <= grade <= 100.0):
                raise ConfigError(f"grade for {student} outside [0, 100]: {grade}")


@dataclass(frozen=True)
class TimeSlice:
    """Closed time window; feature extraction cuts at t1, t2 or semester end."""

    name: str
    start: datetime
    end: datetime

    def contains(self, t: datetime) -> bool:
        return self.start <= t <= self.end

    @property
    def minutes(self) -> float:
        return minutes_between(self.start, self.end)


SLICE_NAMES = ("t1", "t2", "full")


def course_slices(
    config: CourseConfig, fallback_start: datetime | None = None
) -> dict[str, TimeSlice]:
    """The three canonical windows ending at test 1, test 2 and semester end.

    The window start comes from the config; when absent, ``fallback_start``
    (normally the earliest logged action) is used.
    """
    start = config.start_date or fallback_start
    if start is None:
        raise ConfigError(
            f"{config.course_id}: start_date not configured and no data to infer it from"
        )
    return {
        "t1": TimeSlice("t1", start, config.test1_date),
        "t2": TimeSlice("t2", start, config.test2_date),
        "full": TimeSlice("full", start, config.end_date),
    }


@dataclass(frozen=True)
class CourseSources:
    """A parsed course config plus the input files it points at."""

    config: CourseConfig
    config_path: Path
    forum_export: Path | None
    clickstreams: dict[Platform, Path]
    default_utc_offset: str = "+00:00"


_PLATFORM_KEYS = {
    "forum": Platform.FORUM,
    "lms": Platform.LMS,
    "assignments": Platform.ASSIGNMENTS,
    "vcs": Platform.VCS,
    "ci": Platform.CI,
}


def read_roster(path: str | Path) -> dict[str, float | None]:
    """Roster CSV: header ``student_id,grade``; empty grade cells allowed."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["student_id", "grade"]:
        raise SchemaError(f"{path}: expected header 'student_id,grade'")
    roster: dict[str, float | None] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2 or not row[0]:
            raise SchemaError(f"{path}: row {lineno}: expected 'student_id,grade'")
        if row[0] in roster:
            raise SchemaError(f"{path}: row {lineno}: duplicate student_id {row[0]!r}")
        try:
            roster[row[0]] = float(row[1]) if row[1] else None
        except ValueError:
            raise SchemaError(f"{path}: row {lineno}: bad grade {row[1]!r}") from None
    return roster


def write_roster(roster: Mapping[str, float | None], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["student_id", "grade"])
        for student in sorted(roster):
            grade = roster[student]
            writer.writerow([student, "" if grade is None else repr(float(grade))])


def load_course_sources(path: str | Path) -> CourseSources:
    """Load the JSON course config and resolve the file paths it references.

    Relative paths are interpreted against the config file's directory.
    """
    config_path = Path(path)
    try:
        doc = json.loads(config_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: malformed JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{config_path}: config must be a JSON object")
    for key in ("course_id", "test1_date", "test2_date", "end_date", "roster"):
        if key not in doc:
            raise ConfigError(f"{config_path}: missing required field '{key}'")

    base = config_path.parent
    offset = str(doc.get("default_utc_offset", "+00:00"))

    def _date(key: str) -> datetime:
        try:
            return parse_instant(str(doc[key]), offset)
        except ParseError as exc:
            raise ConfigError(f"{config_path}: field '{key}': {exc}") from None

    roster = read_roster(base / str(doc["roster"]))
    start = _date("start_date") if "start_date" in doc else None
    config = CourseConfig(
        course_id=str(doc["course_id"]),
        test1_date=_date("test1_date"),
        test2_date=_date("test2_date"),
        end_date=_date("end_date"),
        roster=roster,
        distinction_threshold=float(doc.get("distinction_threshold", 90.0)),
        at_risk_threshold=float(doc.get("at_risk_threshold", 70.0)),
        start_date=start,
    )
    config.validate()

    forum = doc.get("forum_export")
    clickstreams: dict[Platform, Path] = {}
    for key, rel in dict(doc.get("clickstreams", {})).items():
        platform = _PLATFORM_KEYS.get(str(key).lower())
        if platform is None:
            raise ConfigError(f"{config_path}: unknown clickstream platform {key!r}")
        clickstreams[platform] = base / str(rel)
    return CourseSources(
        config=config,
        config_path=config_path,
        forum_export=None if forum is None else base / str(forum),
        clickstreams=clickstreams,
        default_utc_offset=offset,
    )
