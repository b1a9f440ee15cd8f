"""Unit tests for inactivity-based segmentation and session features."""

from datetime import timedelta

import pytest
from hypothesis import given, strategies as st

from cohortlens.errors import ContractError
from cohortlens.ingest import Platform, TimeSlice, unify
from cohortlens.sessions import (
    CUTOFF_MINUTES,
    SESSION_FEATURE_NAMES,
    SessionKind,
    class_max_sessions,
    segment,
    session_features,
    write_sessions_csv,
)
from helpers import T0, act


def _window(start_min=0.0, end_min=10_000.0):
    return TimeSlice(
        "full", T0 + timedelta(minutes=start_min), T0 + timedelta(minutes=end_min)
    )


def _log(*actions):
    return unify([list(actions)])


# ---------------------------------------------------------------------------
# Segmentation


def test_gap_equal_to_cutoff_stays_in_session():
    log = _log(act("s1", 0.0), act("s1", 15.0), act("s1", 30.0))
    sessions = segment(log, SessionKind.BROWSER)
    assert len(sessions) == 1
    assert sessions[0].duration_minutes == 30.0


def test_gap_above_cutoff_splits():
    log = _log(act("s1", 0.0), act("s1", 15.0 + 1 / 60, kind="b"))
    sessions = segment(log, SessionKind.BROWSER)
    assert len(sessions) == 2
    assert all(s.duration_minutes == 0.0 for s in sessions)


def test_study_cutoff_is_forty_minutes():
    log = _log(act("s1", 0.0), act("s1", 40.0), act("s1", 81.0, kind="b"))
    sessions = segment(log, SessionKind.STUDY)
    assert [len(s.actions) for s in sessions] == [2, 1]
    assert CUTOFF_MINUTES[SessionKind.STUDY] == 40.0
    assert CUTOFF_MINUTES[SessionKind.BROWSER] == 15.0


def test_single_action_session_has_zero_duration():
    sessions = segment(_log(act("s1", 0.0)), SessionKind.BROWSER)
    assert len(sessions) == 1
    assert sessions[0].start == sessions[0].end
    assert sessions[0].duration_minutes == 0.0


def test_sessions_never_mix_students():
    log = _log(act("s1", 0.0), act("s2", 1.0), act("s1", 2.0))
    sessions = segment(log, SessionKind.BROWSER)
    assert sorted(s.student_id for s in sessions) == ["s1", "s2"]
    assert all(
        {a.student_id for a in s.actions} == {s.student_id} for s in sessions
    )


def test_homogeneity_flag():
    log = _log(
        act("s1", 0.0, platform=Platform.LMS),
        act("s1", 1.0, platform=Platform.VCS),
        act("s1", 100.0, platform=Platform.LMS),
        act("s1", 101.0, platform=Platform.LMS),
    )
    sessions = segment(log, SessionKind.BROWSER)
    assert [s.homogeneous for s in sessions] == [False, True]


@st.composite
def _random_log(draw):
    rows = draw(
        st.lists(
            st.tuples(
                st.sampled_from(["s1", "s2", "s3"]),
                st.floats(min_value=0.0, max_value=600.0, allow_nan=False),
            ),
            min_size=1,
            max_size=60,
        )
    )
    return _log(*(act(student, minutes) for student, minutes in rows))


@given(_random_log())
def test_partition_and_refinement_properties(log):
    by_kind = {kind: segment(log, kind) for kind in SessionKind}
    for kind, sessions in by_kind.items():
        # every action lands in exactly one session, order preserved
        rebuilt = []
        for student, actions in log.by_student():
            for s in sessions:
                if s.student_id == student:
                    rebuilt.extend(s.actions)
        assert tuple(rebuilt) == log.actions
    # the finer cutoff can only split more
    for student, _ in log.by_student():
        n_browser = sum(
            1 for s in by_kind[SessionKind.BROWSER] if s.student_id == student
        )
        n_study = sum(
            1 for s in by_kind[SessionKind.STUDY] if s.student_id == student
        )
        assert n_study <= n_browser


# ---------------------------------------------------------------------------
# Features


def test_feature_names_counts():
    assert len(SESSION_FEATURE_NAMES) == 14
    assert len(set(SESSION_FEATURE_NAMES)) == 14


def test_session_features_handcrafted_values():
    log = _log(
        act("s1", 0.0),
        act("s1", 10.0, platform=Platform.VCS),
        act("s1", 20.0),
        act("s1", 100.0),
        # a busier student to set the class maximum
        act("s2", 0.0), act("s2", 100.0), act("s2", 200.0),
    )
    sessions = segment(log, SessionKind.BROWSER)
    rows = session_features(sessions, _window(), class_max_sessions=3)

    r = rows["s1"]
    assert r.num_sessions == 2.0
    assert r.total_actions == 4.0
    assert r.avg_actions_per_session == 2.0
    assert r.total_time == 20.0       # 20 + 0
    assert r.avg_duration == 10.0
    assert r.avg_gap == 80.0          # one gap: 100 - 20
    assert r.inconsistency == 80.0    # 80 * (3 - 2)
    assert r.num_heterogeneous == 1.0
    assert r.num_homogeneous == 1.0
    assert r.pct_homogeneous == 0.5
    assert r.pct_heterogeneous == 0.5

    busiest = rows["s2"]
    assert busiest.num_sessions == 3.0
    assert busiest.inconsistency == 0.0  # most active student scores zero


def test_session_features_forum_counters():
    log = _log(
        act("s1", 0.0, platform=Platform.FORUM, kind="post"),
        act("s1", 1.0, platform=Platform.FORUM, kind="view_thread"),
        act("s1", 100.0, platform=Platform.FORUM, kind="reply"),
        act("s1", 101.0, platform=Platform.FORUM, kind="comment"),
        act("s1", 200.0),
    )
    sessions = segment(log, SessionKind.BROWSER)
    r = session_features(sessions, _window(), class_max_sessions=3)["s1"]
    assert r.piazza_questions == 1.0
    assert r.piazza_answers == 2.0
    assert r.piazza_ratio == pytest.approx(2 / 3)  # two of three sessions contribute


def test_session_features_window_selects_by_session_start():
    log = _log(act("s1", 0.0), act("s1", 100.0), act("s1", 100.5))
    sessions = segment(log, SessionKind.BROWSER)
    rows = session_features(sessions, _window(50.0, 200.0), class_max_sessions=1)
    assert rows["s1"].num_sessions == 1.0
    assert rows["s1"].total_actions == 2.0


def test_session_features_absent_student_gets_padding_row():
    window = _window(0.0, 500.0)
    rows = session_features(
        segment(_log(act("s1", 0.0)), SessionKind.BROWSER),
        window,
        class_max_sessions=4,
        students=["s1", "s9"],
    )
    ghost = rows["s9"]
    assert ghost.num_sessions == 0.0
    assert ghost.total_actions == 0.0
    assert ghost.avg_gap == window.minutes
    assert ghost.inconsistency == window.minutes * 4
    assert ghost.pct_homogeneous == 0.0


def test_session_features_rejects_mixed_kinds():
    log = _log(act("s1", 0.0))
    mixed = segment(log, SessionKind.BROWSER) + segment(log, SessionKind.STUDY)
    with pytest.raises(ContractError, match="single kind"):
        session_features(mixed, _window(), class_max_sessions=2)


def test_session_features_rejects_understated_class_max():
    log = _log(act("s1", 0.0), act("s1", 100.0))
    sessions = segment(log, SessionKind.BROWSER)
    with pytest.raises(ContractError, match="class_max_sessions"):
        session_features(sessions, _window(), class_max_sessions=1)


def test_class_max_sessions_scopes_to_students_and_window():
    log = _log(
        act("s1", 0.0), act("s1", 100.0), act("s1", 200.0),
        act("s2", 0.0),
    )
    sessions = segment(log, SessionKind.BROWSER)
    assert class_max_sessions(sessions, _window(), ["s1", "s2"]) == 3
    assert class_max_sessions(sessions, _window(), ["s2"]) == 1
    assert class_max_sessions(sessions, _window(50.0, 150.0), ["s1", "s2"]) == 1
    assert class_max_sessions(sessions, _window(), []) == 0


def test_write_sessions_csv(tmp_path):
    log = _log(act("s1", 0.0), act("s1", 100.0))
    sessions = segment(log, SessionKind.BROWSER)
    path = tmp_path / "sessions.csv"
    write_sessions_csv(sessions, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "student_id,kind,start,end,n_actions,homogeneity"
    assert len(lines) == 3
    assert lines[1].startswith("s1,browser,2021-09-01T12:00:00Z")
