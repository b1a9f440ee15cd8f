"""Seeded generator of synthetic courses: roster with grades, a forum thread
set, and per-platform clickstreams, all tied to hidden per-student behavior
bands so the pipeline has real signal to find.

Students fall into three bands (at-risk / middle / distinction).  Bands mostly
differ in *how* they work — session length, platform mixing, forum answering —
and only mildly in raw activity rates, so models trained on full-semester data
keep working on shorter slices.  All randomness flows from one generator
seeded by the profile, making outputs byte-identical across runs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ingest import (
    Anonymity,
    CourseConfig,
    CourseSources,
    Platform,
    Post,
    Reply,
    Role,
    Thread,
    ThreadSet,
    TimeSlice,
    UnifiedAction,
    course_slices,
    format_instant,
    parse_instant,
    unify,
    validate_thread_set,
    write_clickstream,
    write_forum_export,
    write_roster,
)
from .pipeline import CourseData

log = logging.getLogger(__name__)

PLATFORM_ACTIONS: dict[Platform, tuple[str, ...]] = {
    Platform.LMS: ("view_page", "view_video", "quiz_attempt", "download"),
    Platform.ASSIGNMENTS: ("view_task", "submit", "check_result"),
    Platform.VCS: ("commit", "push", "pull"),
    Platform.CI: ("build", "view_log"),
}

_CLICKSTREAM_KEYS = {
    Platform.FORUM: "forum",
    Platform.LMS: "lms",
    Platform.ASSIGNMENTS: "assignments",
    Platform.VCS: "vcs",
    Platform.CI: "ci",
}


@dataclass(frozen=True)
class BandSpec:
    """Behavior parameters for one grade band."""

    name: str
    weight: float
    grade_mean: float
    grade_sd: float
    bouts_per_week: float
    bursts_per_bout: tuple[int, int]
    actions_per_burst: tuple[int, int]
    intra_gap_minutes: tuple[float, float]
    burst_gap_minutes: tuple[float, float] = (16.0, 38.0)
    short_gap_prob: float = 0.25
    short_gap_hours: tuple[float, float] = (3.0, 9.0)
    platform_mix: tuple[tuple[Platform, float], ...] = (
        (Platform.LMS, 0.5),
        (Platform.ASSIGNMENTS, 0.3),
        (Platform.VCS, 0.15),
        (Platform.CI, 0.05),
    )
    mixed_session_prob: float = 0.4
    forum_prob: float = 0.1
    ask_bias: float = 0.5
    thread_pull: float = 1.0  # how strongly answerers gravitate to this band's threads


DEFAULT_BANDS: tuple[BandSpec, ...] = (
    BandSpec(
        name="at_risk",
        weight=0.15,
        grade_mean=62.0,
        grade_sd=5.0,
        bouts_per_week=1.4,
        bursts_per_bout=(1, 1),
        actions_per_burst=(3, 7),
        intra_gap_minutes=(0.8, 3.2),
        short_gap_prob=0.2,
        platform_mix=(
            (Platform.LMS, 0.55),
            (Platform.ASSIGNMENTS, 0.3),
            (Platform.VCS, 0.1),
            (Platform.CI, 0.05),
        ),
        mixed_session_prob=0.12,
        forum_prob=0.05,
        ask_bias=0.75,
        thread_pull=1.0,
    ),
    BandSpec(
        name="middle",
        weight=0.50,
        grade_mean=81.0,
        grade_sd=4.0,
        bouts_per_week=1.5,
        bursts_per_bout=(1, 2),
        actions_per_burst=(4, 9),
        intra_gap_minutes=(1.6, 5.2),
        short_gap_prob=0.2,
        platform_mix=(
            (Platform.LMS, 0.4),
            (Platform.ASSIGNMENTS, 0.3),
            (Platform.VCS, 0.2),
            (Platform.CI, 0.1),
        ),
        mixed_session_prob=0.45,
        forum_prob=0.14,
        ask_bias=0.5,
        thread_pull=1.5,
    ),
    BandSpec(
        name="distinction",
        weight=0.35,
        grade_mean=93.5,
        grade_sd=2.5,
        bouts_per_week=1.6,
        bursts_per_bout=(1, 3),
        actions_per_burst=(5, 11),
        intra_gap_minutes=(2.6, 7.8),
        short_gap_prob=0.2,
        platform_mix=(
            (Platform.LMS, 0.3),
            (Platform.ASSIGNMENTS, 0.25),
            (Platform.VCS, 0.3),
            (Platform.CI, 0.15),
        ),
        mixed_session_prob=0.85,
        forum_prob=0.30,
        ask_bias=0.25,
        thread_pull=2.0,
    ),
)


@dataclass(frozen=True)
class CohortProfile:
    course_id: str
    n_students: int = 500
    seed: int = 0
    start: str = "2021-08-23T09:00:00Z"
    weeks: int = 16
    test1_week: int = 5
    test2_week: int = 11
    bands: tuple[BandSpec, ...] = DEFAULT_BANDS
    engagement_sd: float = 1.0     # spread of per-student activity volume
    engagement_floor: float = 0.45  # nobody enrolled does less than this much
    pace_sd: float = 0.12          # spread of per-student working tempo
    verbosity_sd: float = 0.08     # spread of per-student session depth
    cram_boost: float = 1.0       # mean activity multiplier in the run-up to a test
    cram_days: float = 6.0
    cram_cohort_sd: float = 0.35  # offering-to-offering spread of pre-test behavior
    cram_student_sd: float = 0.25
    partial_anon_prob: float = 0.05
    complete_anon_prob: float = 0.02
    comment_back_prob: float = 0.55
    bystander_comment_prob: float = 0.12
    staff: tuple[str, ...] = ("instr01", "ta01", "ta02")
    staff_reply_delay_hours: float = 26.0
    outsider_fraction: float = 0.01
    distinction_threshold: float = 90.0
    at_risk_threshold: float = 70.0

    def validate(self) -> None:
        if self.n_students < 0:
            raise ConfigError("n_students must be non-negative")
        if self.weeks <= 0:
            raise ConfigError("semester must span at least one week")
        if not 0 < self.test1_week < self.test2_week < self.weeks:
            raise ConfigError(
                "test weeks must satisfy 0 < test1 < test2 < semester length"
            )
        if self.cram_boost <= 0 or self.cram_days < 0:
            raise ConfigError("cram window must have positive boost and length")
        total = sum(b.weight for b in self.bands)
        if not self.bands or abs(total - 1.0) > 1e-9:
            raise ConfigError(f"band weights must sum to 1, got {total}")
        for b in self.bands:
            if b.bouts_per_week < 0:
                raise ConfigError(f"band {b.name}: negative session rate")
            for probability in (
                b.short_gap_prob, b.mixed_session_prob, b.forum_prob, b.ask_bias,
            ):
                if not 0.0 <= probability <= 1.0:
                    raise ConfigError(f"band {b.name}: probability outside [0,1]")
            if abs(sum(w for _, w in b.platform_mix) - 1.0) > 1e-9:
                raise ConfigError(f"band {b.name}: platform mix must sum to 1")
            if b.burst_gap_minutes[0] <= 15.0 or b.burst_gap_minutes[1] >= 40.0:
                raise ConfigError(
                    f"band {b.name}: burst gaps must lie strictly between the "
                    "15/40-minute session cutoffs"
                )


def inverted(profile: CohortProfile) -> CohortProfile:
    """Same grades, behavior swapped between the extreme bands.

    Good students act like weak ones and vice versa; useful as an
    anti-correlated transfer target.
    """
    behavior_fields = (
        "bouts_per_week", "bursts_per_bout", "actions_per_burst",
        "intra_gap_minutes", "burst_gap_minutes", "short_gap_prob",
        "short_gap_hours", "platform_mix", "mixed_session_prob",
        "forum_prob", "ask_bias", "thread_pull",
    )
    by_name = {b.name: b for b in profile.bands}
    lo, hi = by_name["at_risk"], by_name["distinction"]
    swapped = []
    for b in profile.bands:
        if b.name == "at_risk":
            src = hi
        elif b.name == "distinction":
            src = lo
        else:
            swapped.append(b)
            continue
        swapped.append(
            replace(b, **{f: getattr(src, f) for f in behavior_fields})
        )
    return replace(profile, bands=tuple(swapped))


# ---------------------------------------------------------------------------
# Generation internals

@dataclass
class _Contribution:
    time: datetime
    student: str
    intent: str  # "ask" | "answer"
    anonymity: Anonymity


@dataclass
class _MutableReply:
    post: Post
    comments: list[Post] = field(default_factory=list)


@dataclass
class _MutableThread:
    head: Post
    band: str
    replies: list[_MutableReply] = field(default_factory=list)


def _pick(rng: np.random.Generator, pairs) -> object:
    items = [item for item, _ in pairs]
    weights = np.array([w for _, w in pairs], dtype=float)
    return items[int(rng.choice(len(items), p=weights / weights.sum()))]


def _anonymity(rng: np.random.Generator, profile: CohortProfile) -> Anonymity:
    roll = rng.random()
    if roll < profile.complete_anon_prob:
        return Anonymity.COMPLETE
    if roll < profile.complete_anon_prob + profile.partial_anon_prob:
        return Anonymity.PARTIAL
    return Anonymity.NONE


def _student_stream(
    rng: np.random.Generator,
    student: str,
    band: BandSpec,
    profile: CohortProfile,
    start: datetime,
    end: datetime,
    crams: tuple[tuple[datetime, datetime, float], ...] = (),
) -> tuple[list[UnifiedAction], list[_Contribution]]:
    """Clickstream actions plus forum-contribution stubs for one student."""
    actions: list[UnifiedAction] = []
    contribs: list[_Contribution] = []
    # volume and tempo vary a lot between students within a band; the band
    # itself mostly sets HOW a student works, not how often
    engagement = max(
        float(np.exp(rng.normal(0.0, profile.engagement_sd))),
        profile.engagement_floor,
    )
    pace = float(np.exp(rng.normal(0.0, profile.pace_sd)))
    verbosity = float(np.exp(rng.normal(0.0, profile.verbosity_sd)))
    cram_personal = float(np.exp(rng.normal(
        -0.5 * profile.cram_student_sd**2, profile.cram_student_sd
    )))
    rate = band.bouts_per_week * engagement
    if rate <= 0:
        return actions, contribs
    gap_mean_days = 7.0 / rate

    platforms = [p for p, _ in band.platform_mix]
    pweights = np.array([w for _, w in band.platform_mix], dtype=float)
    pweights /= pweights.sum()

    t = start + timedelta(hours=float(rng.uniform(0.0, 96.0)))
    while t < end:
        # pre-test crunch: sessions come faster, run longer and move quicker
        boost = 1.0
        for cram_lo, cram_hi, level in crams:
            if cram_lo <= t < cram_hi:
                boost = level * cram_personal
                break
        bout_actions: list[tuple[datetime, Platform, str]] = []
        mixed = rng.random() < band.mixed_session_prob
        bout_platform = platforms[int(rng.choice(len(platforms), p=pweights))]
        cursor = t
        n_bursts = int(rng.integers(band.bursts_per_bout[0], band.bursts_per_bout[1] + 1))
        for burst in range(n_bursts):
            n_actions = max(1, int(round(verbosity * boost**0.4 * float(
                rng.integers(band.actions_per_burst[0], band.actions_per_burst[1] + 1)
            ))))
            gaps = pace / boost**0.3 * rng.uniform(*band.intra_gap_minutes, size=n_actions)
            offsets = np.concatenate(([0.0], np.cumsum(gaps[:-1])))
            picks = (
                rng.choice(len(platforms), size=n_actions, p=pweights)
                if mixed else None
            )
            kind_rolls = rng.random(n_actions)
            for j in range(n_actions):
                platform = platforms[int(picks[j])] if mixed else bout_platform
                kinds = PLATFORM_ACTIONS[platform]
                kind = kinds[int(kind_rolls[j] * len(kinds))]
                bout_actions.append(
                    (cursor + timedelta(minutes=float(offsets[j])), platform, kind)
                )
            cursor += timedelta(minutes=float(gaps.sum()))
            if burst < n_bursts - 1:
                cursor += timedelta(minutes=float(rng.uniform(*band.burst_gap_minutes)))

        if rng.random() < band.forum_prob and bout_actions:
            # a forum visit inside the bout: a view in the clickstream and a
            # contribution that will be resolved into the thread set
            slot = bout_actions[int(rng.integers(0, len(bout_actions)))][0]
            visit = slot + timedelta(seconds=30)
            bout_actions.append((visit, Platform.FORUM, "view_thread"))
            intent = "ask" if rng.random() < band.ask_bias else "answer"
            contribs.append(
                _Contribution(
                    time=visit + timedelta(seconds=45),
                    student=student,
                    intent=intent,
                    anonymity=_anonymity(rng, profile),
                )
            )

        for when, platform, kind in bout_actions:
            if when < end:
                actions.append(
                    UnifiedAction(
                        student_id=student,
                        timestamp=when,
                        platform=platform,
                        action_kind=kind,
                        detail=None,
                    )
                )

        if rng.random() < band.short_gap_prob:
            pause = timedelta(hours=float(rng.uniform(*band.short_gap_hours)))
        else:
            pause = timedelta(
                days=max(0.12, float(rng.exponential(gap_mean_days / boost)))
            )
        t = cursor + pause
    return actions, contribs


def _build_threads(
    rng: np.random.Generator,
    contribs: list[_Contribution],
    band_of: dict[str, str],
    pull: dict[str, float],
    profile: CohortProfile,
    end: datetime,
) -> list[_MutableThread]:
    """Resolve ask/answer stubs into threads, replies and comments."""
    threads: list[_MutableThread] = []
    counter = 0
    contribs = sorted(contribs, key=lambda c: (c.time, c.student))
    for c in contribs:
        open_threads = [
            (i, th) for i, th in enumerate(threads)
            if th.head.timestamp < c.time
            and (c.time - th.head.timestamp) <= timedelta(days=14)
            and th.head.author_id != c.student
        ]
        if c.intent == "answer" and open_threads:
            weights = np.array(
                [
                    pull.get(th.band, 1.0)
                    * np.exp(-(c.time - th.head.timestamp).days / 5.0)
                    for _, th in open_threads
                ]
            )
            picked = open_threads[
                int(rng.choice(len(open_threads), p=weights / weights.sum()))
            ]
            thread = picked[1]
            reply_id = f"{thread.head.post_id}-r{len(thread.replies) + 1}"
            reply = _MutableReply(
                post=Post(
                    post_id=reply_id,
                    author_id=None if c.anonymity is Anonymity.COMPLETE else c.student,
                    role=Role.STUDENT,
                    timestamp=c.time,
                    anonymity=c.anonymity,
                )
            )
            thread.replies.append(reply)
            # the asker often follows up on an answer; bystanders sometimes do
            if rng.random() < profile.comment_back_prob:
                when = c.time + timedelta(hours=float(rng.uniform(0.5, 18.0)))
                if when < end and thread.head.author_id is not None:
                    reply.comments.append(
                        Post(
                            post_id=f"{reply_id}-c{len(reply.comments) + 1}",
                            author_id=thread.head.author_id,
                            role=Role.STUDENT,
                            timestamp=when,
                            anonymity=Anonymity.NONE,
                        )
                    )
            if rng.random() < profile.bystander_comment_prob and len(threads) > 1:
                other = threads[int(rng.integers(0, len(threads)))]
                if (
                    other.head.author_id is not None
                    and other.head.author_id != c.student
                ):
                    when = c.time + timedelta(hours=float(rng.uniform(1.0, 24.0)))
                    if when < end:
                        reply.comments.append(
                            Post(
                                post_id=f"{reply_id}-c{len(reply.comments) + 1}",
                                author_id=other.head.author_id,
                                role=Role.STUDENT,
                                timestamp=when,
                                anonymity=Anonymity.NONE,
                            )
                        )
        else:
            counter += 1
            threads.append(
                _MutableThread(
                    head=Post(
                        post_id=f"t{counter:04d}",
                        author_id=None if c.anonymity is Anonymity.COMPLETE else c.student,
                        role=Role.STUDENT,
                        timestamp=c.time,
                        anonymity=c.anonymity,
                    ),
                    band=band_of.get(c.student, "middle"),
                )
            )
    return threads


def _staff_pass(
    rng: np.random.Generator,
    threads: list[_MutableThread],
    profile: CohortProfile,
    end: datetime,
) -> None:
    """Staff answer any thread still unanswered a day later."""
    if not profile.staff:
        return
    for thread in threads:
        if thread.replies:
            continue
        when = thread.head.timestamp + timedelta(
            hours=profile.staff_reply_delay_hours + float(rng.uniform(0.0, 4.0))
        )
        if when >= end:
            continue
        who = profile.staff[int(rng.integers(0, len(profile.staff)))]
        thread.replies.append(
            _MutableReply(
                post=Post(
                    post_id=f"{thread.head.post_id}-r1",
                    author_id=who,
                    role=Role.INSTRUCTOR if who.startswith("instr") else Role.TA,
                    timestamp=when,
                    anonymity=Anonymity.NONE,
                )
            )
        )


@dataclass(frozen=True)
class GeneratedCohort:
    """In-memory synthetic course, writable to the standard input formats."""

    profile: CohortProfile
    config: CourseConfig
    threads: ThreadSet
    clickstreams: dict[Platform, tuple[UnifiedAction, ...]]
    bands: dict[str, str]

    def course_data(self) -> CourseData:
        """Pipeline-ready view without touching the filesystem."""
        from .ingest import filter_anonymous

        threads = filter_anonymous(self.threads)
        ulog = unify(
            [self.clickstreams[p] for p in sorted(self.clickstreams)], threads
        )
        sources = CourseSources(
            config=self.config,
            config_path=Path("<generated>"),
            forum_export=None,
            clickstreams={},
        )
        slices = course_slices(self.config, fallback_start=ulog.earliest())
        return CourseData(
            sources=sources, threads=threads, log=ulog, slices=slices
        )

    def write(self, out_dir: str | Path) -> Path:
        """Emit config, roster, forum export and clickstream CSVs.

        Returns the config path, ready for the ingest pipeline.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_roster(self.config.roster, out / "roster.csv")
        write_forum_export(self.threads, out / "forum.json")
        files = {}
        for platform in sorted(self.clickstreams):
            name = f"clicks_{_CLICKSTREAM_KEYS[platform]}.csv"
            write_clickstream(self.clickstreams[platform], out / name)
            files[_CLICKSTREAM_KEYS[platform]] = name
        doc = {
            "course_id": self.config.course_id,
            "start_date": format_instant(self.config.start_date),
            "test1_date": format_instant(self.config.test1_date),
            "test2_date": format_instant(self.config.test2_date),
            "end_date": format_instant(self.config.end_date),
            "distinction_threshold": self.config.distinction_threshold,
            "at_risk_threshold": self.config.at_risk_threshold,
            "roster": "roster.csv",
            "forum_export": "forum.json",
            "clickstreams": files,
        }
        config_path = out / "course.json"
        config_path.write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return config_path


def generate(profile: CohortProfile) -> GeneratedCohort:
    """Roster, grades, forum threads and clickstreams for one synthetic course."""
    profile.validate()
    rng = np.random.default_rng(profile.seed)
    start = parse_instant(profile.start)
    end = start + timedelta(weeks=profile.weeks)
    test1 = start + timedelta(weeks=profile.test1_week)
    test2 = start + timedelta(weeks=profile.test2_week)

    width = max(3, len(str(max(profile.n_students, 1))))
    students = [f"s{i + 1:0{width}d}" for i in range(profile.n_students)]
    weights = np.array([b.weight for b in profile.bands])
    band_idx = rng.choice(len(profile.bands), size=profile.n_students, p=weights)

    # each offering gets its own pre-test rhythm: some classes cram frantically
    # online, others go quiet and revise offline.  Mean-one multipliers keep
    # long-run rates flat while leaving every exam window with its own color.
    crams = tuple(
        (
            test - timedelta(days=profile.cram_days),
            test,
            float(np.exp(rng.normal(
                np.log(profile.cram_boost) - 0.5 * profile.cram_cohort_sd**2,
                profile.cram_cohort_sd,
            ))),
        )
        for test in (test1, test2)
    )

    roster: dict[str, float | None] = {}
    band_of: dict[str, str] = {}
    streams: dict[Platform, list[UnifiedAction]] = {p: [] for p in Platform}
    contribs: list[_Contribution] = []
    for student, bi in zip(students, band_idx):
        band = profile.bands[int(bi)]
        band_of[student] = band.name
        grade = float(np.clip(rng.normal(band.grade_mean, band.grade_sd), 0.0, 100.0))
        roster[student] = round(grade, 1)
        actions, student_contribs = _student_stream(
            rng, student, band, profile, start, end, crams
        )
        for a in actions:
            streams[a.platform].append(a)
        contribs.extend(student_contribs)

    # a few unrostered forum-only participants (auditors)
    n_outsiders = int(round(profile.n_students * profile.outsider_fraction))
    for i in range(n_outsiders):
        who = f"x{i + 1:02d}"
        for _ in range(2):
            when = start + timedelta(
                days=float(rng.uniform(3.0, profile.weeks * 7 - 3.0))
            )
            contribs.append(
                _Contribution(
                    time=when,
                    student=who,
                    intent="ask" if rng.random() < 0.5 else "answer",
                    anonymity=Anonymity.NONE,
                )
            )

    pull = {b.name: b.thread_pull for b in profile.bands}
    threads = _build_threads(rng, contribs, band_of, pull, profile, end)
    _staff_pass(rng, threads, profile, end)

    thread_set = ThreadSet(
        threads=tuple(
            Thread(
                head=t.head,
                replies=tuple(
                    Reply(post=r.post, comments=tuple(r.comments))
                    for r in t.replies
                ),
            )
            for t in threads
        )
    )
    validate_thread_set(thread_set)

    config = CourseConfig(
        course_id=profile.course_id,
        test1_date=test1,
        test2_date=test2,
        end_date=end,
        roster=roster,
        distinction_threshold=profile.distinction_threshold,
        at_risk_threshold=profile.at_risk_threshold,
        start_date=start,
    )
    config.validate()

    total = sum(len(v) for v in streams.values())
    log.info(
        "generated %s: %d students, %d threads, %d clickstream actions",
        profile.course_id, profile.n_students, len(thread_set.threads), total,
    )
    return GeneratedCohort(
        profile=profile,
        config=config,
        threads=thread_set,
        clickstreams={p: tuple(v) for p, v in streams.items()},
        bands=band_of,
    )
