"""Unit tests for experiment plans, the shared fitting path, the three
evaluation modes and report emission."""

import numpy as np
import pytest

from cohortlens.errors import (
    ContractError,
    SchemaError,
    TrainingError,
    ValidationError,
)
from cohortlens.harness import (
    REPORT_CSV_HEADER,
    EvaluationReport,
    ExperimentPlan,
    at_risk_eval,
    cell_name,
    emit_report,
    fit_on_rows,
    read_report,
    report_csv_row,
    run_plan,
    same_class_eval,
    transfer_eval,
    write_report_table,
)
from cohortlens.learner import LOGISTIC_GRID
from helpers import make_matrix


def _toy_matrix(n=60, seed=0, course_id="one", target="distinction"):
    """Overlapping two-class data: one strong column, three distractors."""
    rng = np.random.default_rng(seed)
    pos = rng.random(n) < 0.4
    if target == "distinction":
        grades = np.where(pos, 95.0, 75.0)
    else:
        grades = np.where(pos, 60.0, 85.0)
    signal = pos * 2.0 + rng.normal(0.0, 1.0, n)
    X = np.column_stack([signal, rng.normal(size=(n, 3))])
    return make_matrix(
        X, grades, names=("sig", "noise_a", "noise_b", "noise_c"),
        course_id=course_id,
    )


def _plan(**kw):
    base = dict(
        mode="same_class", train_course="one", train_slice="t2",
        k=3, seed=0, select_override=2,
    )
    base.update(kw)
    return ExperimentPlan(**base)


# ---------------------------------------------------------------------------
# Plan validation and serialization


def test_plan_validate_accepts_canonical_cells():
    _plan().validate()
    _plan(mode="cross_offering", test_course="two").validate()
    _plan(mode="cross_course", test_course="other", test_slice="full").validate()
    _plan(mode="at_risk", target="at_risk").validate()


def test_plan_validate_rejects_malformed_cells():
    with pytest.raises(ValidationError, match="unknown mode"):
        _plan(mode="holdout").validate()
    with pytest.raises(ValidationError, match="train slice"):
        _plan(train_slice="t9").validate()
    with pytest.raises(ValidationError, match="test slice"):
        _plan(mode="cross_offering", test_course="two", test_slice="t9").validate()
    with pytest.raises(ValidationError, match="unknown target"):
        _plan(target="honors").validate()
    with pytest.raises(ValidationError, match="requires a test course"):
        _plan(mode="cross_offering").validate()
    with pytest.raises(ValidationError, match="courses to differ"):
        _plan(mode="cross_course", test_course="one").validate()
    with pytest.raises(ValidationError, match="takes no test course"):
        _plan(test_course="two").validate()
    with pytest.raises(ValidationError, match="at_risk target"):
        _plan(mode="at_risk", target="distinction").validate()
    with pytest.raises(ValidationError, match="k must be >= 2"):
        _plan(k=1).validate()


def test_plan_json_round_trip():
    plan = _plan(
        mode="cross_offering", test_course="two", test_slice="full",
        family="forest", method="b", seed=7, select_window=(3, 9),
        select_override=None, downsample_ratio=3,
    )
    assert ExperimentPlan.from_json(plan.to_json()) == plan


# ---------------------------------------------------------------------------
# Report object


def _stub_report(**kw):
    base = dict(
        plan=_plan(),
        fold_f1=(0.5, 0.75),
        mean_f1=0.625,
        ranking=(("sig", 9.0), ("noise_a", 1.0)),
        selected=("sig",),
        confusion=(10, 2, 3, 45),
        best_point={"penalty": "l2", "C": 1.0, "tol": 1e-4},
        warnings=("something",),
        extras={"n_students": 60},
    )
    base.update(kw)
    return EvaluationReport(**base)


def test_report_round_trips_through_json():
    report = _stub_report()
    again = EvaluationReport.from_json(report.to_json())
    assert again == report
    assert again.test_size == 60


def test_report_rejects_out_of_range_f1():
    with pytest.raises(ValidationError, match="F1"):
        _stub_report(mean_f1=1.5)
    with pytest.raises(ValidationError, match="F1"):
        _stub_report(fold_f1=(-0.1, 0.5))


def test_report_rejects_unknown_schema_version():
    doc = _stub_report().to_json()
    doc["schema_version"] = 99
    with pytest.raises(SchemaError, match="report schema version"):
        EvaluationReport.from_json(doc)


# ---------------------------------------------------------------------------
# Shared fitting path


def test_fit_on_rows_obeys_override_and_grid():
    fm = _toy_matrix()
    X, y = fm.to_xy("distinction")
    train_rows = np.arange(60) < 45
    model, selected, point = fit_on_rows(
        X, y, fm.feature_names, train_rows, _plan(select_override=2), inner_seed=11
    )
    assert len(selected) == 2
    assert selected[0] == "sig"  # the informative column dominates the ranking
    assert model.feature_names == selected
    assert point in [dict(p) for p in LOGISTIC_GRID]


def test_fit_on_rows_ignores_test_rows_entirely():
    """A column that is zero on train rows but equals the label on test rows
    must never be selected and must not change the fitted model."""
    fm = _toy_matrix(seed=5)
    X, y = fm.to_xy("distinction")
    train_rows = np.arange(60) < 40
    canary = np.where(train_rows, 0.0, y.astype(float))
    X_aug = np.column_stack([X, canary])
    names_aug = fm.feature_names + ("zz_canary",)
    plan = _plan(select_override=2)

    model, selected, point = fit_on_rows(
        X, y, fm.feature_names, train_rows, plan, inner_seed=3
    )
    model_aug, selected_aug, point_aug = fit_on_rows(
        X_aug, y, names_aug, train_rows, plan, inner_seed=3
    )
    assert "zz_canary" not in selected_aug
    assert selected_aug == selected and point_aug == point

    cols = [fm.feature_names.index(n) for n in selected]
    cols_aug = [names_aug.index(n) for n in selected_aug]
    test = ~train_rows
    pred = model.predict(X[test][:, cols], selected)
    pred_aug = model_aug.predict(X_aug[test][:, cols_aug], selected_aug)
    assert np.array_equal(pred, pred_aug)  # the canary buys nothing


# ---------------------------------------------------------------------------
# Same-class cross-validation


def test_same_class_eval_covers_every_row_once():
    fm = _toy_matrix()
    plan = _plan()
    report = same_class_eval(plan, fm)
    assert len(report.fold_f1) == plan.k
    assert report.mean_f1 == pytest.approx(float(np.mean(report.fold_f1)))
    assert report.test_size == fm.n_students
    assert report.best_point == {}
    assert len(report.extras["fold_best_points"]) == plan.k
    assert report.extras["n_students"] == 60
    # whole-class ranking honors the same override as the fold fits
    assert report.selected == tuple(name for name, _ in report.ranking[:2])


def test_same_class_eval_is_deterministic():
    fm = _toy_matrix(seed=2)
    one = same_class_eval(_plan(seed=4), fm)
    two = same_class_eval(_plan(seed=4), fm)
    assert one == two


def test_same_class_eval_rejects_other_modes():
    fm = _toy_matrix()
    with pytest.raises(ValidationError, match="got mode"):
        same_class_eval(_plan(mode="cross_offering", test_course="two"), fm)


# ---------------------------------------------------------------------------
# Transfer


def test_transfer_eval_scores_test_course_once():
    train = _toy_matrix(seed=1, course_id="one")
    test = _toy_matrix(n=40, seed=9, course_id="two")
    plan = _plan(mode="cross_offering", test_course="two")
    report = transfer_eval(plan, train, test)
    assert len(report.fold_f1) == 1 and report.fold_f1[0] == report.mean_f1
    assert report.test_size == 40
    assert report.extras == {"n_train": 60, "n_test": 40}
    assert report.best_point  # transfer keeps the winning grid point
    assert len(report.selected) == 2


def test_transfer_eval_requires_matching_feature_contract():
    train = _toy_matrix(course_id="one")
    plan = _plan(mode="cross_offering", test_course="two")

    renamed = _toy_matrix(course_id="two")
    renamed = make_matrix(
        renamed.values, list(renamed.grades),
        names=("sig", "noise_a", "noise_b", "other"), course_id="two",
    )
    with pytest.raises(ContractError, match="noise_c.*other"):
        transfer_eval(plan, train, renamed)

    reordered = train.select(("noise_a", "sig", "noise_b", "noise_c"))
    with pytest.raises(ContractError, match="same names, different order"):
        transfer_eval(plan, train, reordered)


def test_transfer_eval_warns_when_test_has_no_positives():
    train = _toy_matrix(course_id="one")
    flat = make_matrix(
        np.random.default_rng(0).normal(size=(20, 4)), [75.0] * 20,
        names=train.feature_names, course_id="two",
    )
    plan = _plan(mode="cross_offering", test_course="two")
    report = transfer_eval(plan, train, flat)
    assert report.mean_f1 == 0.0
    assert any("no positive labels" in w for w in report.warnings)


# ---------------------------------------------------------------------------
# At-risk


def test_at_risk_cv_downsamples_inside_each_fold():
    fm = _toy_matrix(n=80, seed=3, target="at_risk")
    plan = _plan(mode="at_risk", target="at_risk", k=3)
    report = at_risk_eval(plan, fm)
    assert len(report.fold_f1) == 3
    assert report.test_size == 80
    folds = report.extras["fold_downsamples"]
    assert len(folds) == 3
    for minority, majority in folds:
        assert majority <= plan.downsample_ratio * minority


def test_at_risk_transfer_reports_downsample_counts():
    train = _toy_matrix(n=60, seed=6, course_id="one", target="at_risk")
    test = _toy_matrix(n=30, seed=7, course_id="two", target="at_risk")
    plan = _plan(mode="at_risk", target="at_risk", test_course="two")
    report = at_risk_eval(plan, train, test)
    n_minority = int(train.to_xy("at_risk")[1].sum())
    assert report.extras["downsample"][0] == n_minority
    assert report.extras["downsample"][1] <= 2 * n_minority
    assert report.extras["n_test"] == 30


def test_at_risk_eval_needs_five_minority_students():
    grades = [60.0] * 4 + [85.0] * 26
    fm = make_matrix(np.random.default_rng(1).normal(size=(30, 4)), grades,
                     names=("sig", "noise_a", "noise_b", "noise_c"))
    plan = _plan(mode="at_risk", target="at_risk")
    with pytest.raises(TrainingError, match="need >= 5"):
        at_risk_eval(plan, fm)
    with pytest.raises(TrainingError, match="need >= 5"):
        at_risk_eval(_plan(mode="at_risk", target="at_risk", test_course="two"),
                     fm, fm)


# ---------------------------------------------------------------------------
# Dispatch, names, emission


def test_run_plan_dispatches_by_mode():
    train = _toy_matrix(course_id="one")
    test = _toy_matrix(n=40, seed=9, course_id="two")
    risky = _toy_matrix(n=80, seed=3, target="at_risk")
    assert run_plan(_plan(), train) == same_class_eval(_plan(), train)
    cross = _plan(mode="cross_offering", test_course="two")
    assert run_plan(cross, train, test) == transfer_eval(cross, train, test)
    atr = _plan(mode="at_risk", target="at_risk", k=3)
    assert run_plan(atr, risky) == at_risk_eval(atr, risky)


def test_cell_name_is_stable_and_descriptive():
    assert cell_name(_plan(seed=3)) == "same_class_one_t2_a_logistic_distinction_seed3"
    plan = _plan(mode="cross_offering", test_course="two", family="forest")
    assert cell_name(plan) == "cross_offering_one_t2_two_t2_a_forest_distinction_seed0"


def test_emit_and_read_report_round_trip(tmp_path):
    report = _stub_report()
    json_path = tmp_path / "cell.json"
    csv_path = tmp_path / "cell.csv"
    emit_report(report, json_path, csv_path)
    assert read_report(json_path) == report
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_CSV_HEADER)
    assert len(lines) == 2
    assert lines[1].split(",")[0] == "same_class"


def test_write_report_table_sorts_rows(tmp_path):
    reports = [
        _stub_report(plan=_plan(seed=5)),
        _stub_report(plan=_plan(mode="cross_offering", test_course="two")),
        _stub_report(plan=_plan(seed=1)),
    ]
    path = tmp_path / "table.csv"
    write_report_table(reports, path)
    swapped = tmp_path / "swapped.csv"
    write_report_table(list(reversed(reports)), swapped)
    assert path.read_bytes() == swapped.read_bytes()
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert [row.split(",")[0] for row in lines[1:]] == [
        "cross_offering", "same_class", "same_class"
    ]
