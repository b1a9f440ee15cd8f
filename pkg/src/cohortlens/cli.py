"""Command-line entry point.

Twelve subcommands cover the pipeline from raw exports to evaluation
reports.  Every run writes a ``manifest.json`` beside its outputs recording
the command, input hashes, seeds and wall time; analytical outputs themselves
are byte-reproducible for a given seed, including under ``--jobs`` N.

Verbosity is controlled by the ``COHORTLENS_LOG`` environment variable
(``debug``, ``info``, ``warning``, ``error``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CohortlensError,
    ConfigError,
    ContractError,
    ParseError,
    SchemaError,
    TrainingError,
    ValidationError,
)
from .features import write_feature_matrix
from .graphs import build_graph, write_arcs_csv, write_graph_summary
from .harness import (
    EvaluationReport,
    ExperimentPlan,
    cell_name,
    emit_report,
    fit_on_rows,
    read_report,
    run_plan,
    write_report_table,
)
from .ingest import SLICE_NAMES, write_forum_export, write_unified_log
from .learner import FAMILIES
from .manifest import MANIFEST_NAME, RunManifest, hash_inputs, write_manifest
from .pipeline import (
    build_matrix,
    correlation_rows,
    load_course,
    write_correlation_csv,
)
from .sessions import SessionKind, write_sessions_csv
from .stats import rank_features
from .synth import CohortProfile, generate, inverted

log = logging.getLogger(__name__)

_EXIT_INPUT = 2     # bad config, schema or file contents
_EXIT_CONTRACT = 3  # valid inputs that violate a pipeline contract
_EXIT_TRAINING = 4  # model fitting failed


def _setup_logging() -> None:
    name = os.environ.get("COHORTLENS_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _input_paths(config_path: Path) -> list[Path]:
    paths = [config_path]
    try:
        doc = json.loads(config_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return paths
    if not isinstance(doc, dict):
        return paths
    base = config_path.parent
    for key in ("roster", "forum_export"):
        if isinstance(doc.get(key), str):
            paths.append(base / doc[key])
    for rel in dict(doc.get("clickstreams", {}) or {}).values():
        paths.append(base / str(rel))
    return paths


def _finish(args, out: Path, started: float, seeds: dict[str, int],
            configs: list[Path] = ()) -> None:
    inputs: dict[str, str] = {}
    for config in configs:
        inputs.update(hash_inputs(_input_paths(Path(config))))
    write_manifest(
        RunManifest(
            tool="cohortlens",
            version=__version__,
            command=tuple(args._argv),
            out_dir=str(out),
            inputs=inputs,
            seeds=seeds,
            elapsed_seconds=round(time.perf_counter() - started, 3),
        ),
        out,
    )


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_ingest(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    write_unified_log(data.log, out / "unified_log.csv")
    write_forum_export(data.threads, out / "threads.json")
    _finish(args, out, started, {}, [args.config])
    print(
        f"{data.config.course_id}: {len(data.log)} actions, "
        f"{len(data.threads.threads)} threads"
    )
    return 0


def cmd_sessions(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    for kind in SessionKind:
        sessions = data.sessions(kind)
        write_sessions_csv(sessions, out / f"sessions_{kind.value}.csv")
        print(f"{kind.value}: {len(sessions)} sessions")
    _finish(args, out, started, {}, [args.config])
    return 0


def cmd_graph(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    window = data.slices.get(args.slice)
    if window is None:
        raise ValidationError(f"unknown slice {args.slice!r}")
    graph = build_graph(data.threads, args.method, window)
    stem = f"{args.slice}_{args.method}"
    write_arcs_csv(graph, out / f"arcs_{stem}.csv")
    write_graph_summary(graph, out / f"graph_{stem}.json")
    _finish(args, out, started, {}, [args.config])
    print(
        f"graph {args.method}/{args.slice}: {len(graph.nodes)} nodes, "
        f"{len(graph.arcs)} arcs"
    )
    return 0


def cmd_features(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    fm = build_matrix(data, args.slice, args.method)
    path = out / f"features_{args.slice}_{args.method}.csv"
    write_feature_matrix(fm, path)
    _finish(args, out, started, {}, [args.config])
    print(f"{path}: {fm.n_students} students x {len(fm.feature_names)} features")
    return 0


def cmd_rank(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    fm = build_matrix(data, args.slice, args.method)
    ranked = rank_features(fm, args.target, override=args.k)
    path = out / f"ranking_{args.slice}_{args.method}_{args.target}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "feature", "score", "selected"])
        for i, (name, score) in enumerate(ranked.ranking, start=1):
            writer.writerow([i, name, repr(score), int(i <= ranked.selected_k)])
    _finish(args, out, started, {}, [args.config])
    print(f"{path}: elbow keeps {ranked.selected_k} of {len(ranked.ranking)}")
    return 0


def cmd_correlate(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    rows = correlation_rows(data)
    write_correlation_csv(rows, out / "correlations.csv")
    _finish(args, out, started, {}, [args.config])
    print(f"correlations.csv: {len(rows)} slice/method rows")
    return 0


def cmd_train(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    plan = ExperimentPlan(
        mode="same_class",
        train_course=data.config.course_id,
        train_slice=args.slice,
        family=args.model,
        method=args.method,
        target=args.target,
        seed=args.seed,
    )
    plan.validate()
    fm = build_matrix(data, args.slice, args.method)
    X, y = fm.to_xy(args.target)
    model, selected, best_point = fit_on_rows(
        X, y, fm.feature_names, np.ones(fm.n_students, dtype=bool),
        plan, inner_seed=plan.seed,
    )
    stem = f"model_{args.slice}_{args.method}_{args.model}_{args.target}"
    model.save(out / f"{stem}.json")
    (out / f"{stem}.train.json").write_text(
        json.dumps(
            {
                "plan": plan.to_json(),
                "selected": list(selected),
                "best_point": best_point,
                "n_students": fm.n_students,
                "n_positive": int(y.sum()),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    _finish(args, out, started, {"seed": args.seed}, [args.config])
    print(f"{stem}.json: {len(selected)} features, grid point {best_point}")
    return 0


def _eval_cell(payload):
    """Worker for one evaluation cell; must stay picklable/top-level."""
    plan_doc, fm = payload
    plan = ExperimentPlan.from_json(plan_doc)
    return run_plan(plan, fm).to_json()


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    data = load_course(args.config)
    course = data.config.course_id

    if args.all:
        cells = [
            (slice_name, method, family)
            for slice_name in SLICE_NAMES
            for method in ("a", "b")
            for family in FAMILIES
        ]
    else:
        cells = [(args.slice, args.method, args.model)]

    matrices = {}
    for slice_name, method, _ in cells:
        key = (slice_name, method)
        if key not in matrices:
            matrices[key] = build_matrix(data, slice_name, method)

    plans = [
        ExperimentPlan(
            mode="same_class",
            train_course=course,
            train_slice=slice_name,
            family=family,
            method=method,
            target=args.target,
            seed=args.seed,
        )
        for slice_name, method, family in cells
    ]
    for plan in plans:
        plan.validate()
    payloads = [
        (plan.to_json(), matrices[(plan.train_slice, plan.method)])
        for plan in plans
    ]

    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            docs = list(pool.map(_eval_cell, payloads))
    else:
        docs = [_eval_cell(p) for p in payloads]

    reports = [EvaluationReport.from_json(doc) for doc in docs]
    for report in reports:
        emit_report(report, out / f"{cell_name(report.plan)}.json")
    write_report_table(reports, out / "reports.csv")
    _finish(args, out, started, {"seed": args.seed}, [args.config])
    for report in sorted(reports, key=lambda r: cell_name(r.plan)):
        print(
            f"{cell_name(report.plan)}: mean_f1={report.mean_f1:.3f} "
            f"selected={len(report.selected)}"
        )
    return 0


def cmd_transfer(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    train_data = load_course(args.config)
    test_data = load_course(args.test_config)
    plan = ExperimentPlan(
        mode=args.mode,
        train_course=train_data.config.course_id,
        train_slice=args.slice,
        test_course=test_data.config.course_id,
        test_slice=args.test_slice or args.slice,
        family=args.model,
        method=args.method,
        target=args.target,
        seed=args.seed,
    )
    plan.validate()
    report = run_plan(plan, train_data, test_data)
    stem = cell_name(plan)
    emit_report(report, out / f"{stem}.json", out / f"{stem}.csv")
    _finish(args, out, started, {"seed": args.seed},
            [args.config, args.test_config])
    print(f"{stem}: mean_f1={report.mean_f1:.3f}")
    return 0


def cmd_atrisk(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    train_data = load_course(args.config)
    test_data = load_course(args.test_config) if args.test_config else None
    plan = ExperimentPlan(
        mode="at_risk",
        train_course=train_data.config.course_id,
        train_slice=args.slice,
        test_course=test_data.config.course_id if test_data else None,
        test_slice=(args.test_slice or args.slice) if test_data else None,
        family=args.model,
        method=args.method,
        target="at_risk",
        seed=args.seed,
        downsample_ratio=args.ratio,
    )
    plan.validate()
    report = run_plan(plan, train_data, test_data)
    stem = cell_name(plan)
    emit_report(report, out / f"{stem}.json", out / f"{stem}.csv")
    configs = [args.config] + ([args.test_config] if args.test_config else [])
    _finish(args, out, started, {"seed": args.seed}, configs)
    print(f"{stem}: mean_f1={report.mean_f1:.3f}")
    return 0


def cmd_synth(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    profile = CohortProfile(
        course_id=args.course_id, n_students=args.students, seed=args.seed
    )
    if args.invert:
        profile = inverted(profile)
    cohort = generate(profile)
    config_path = cohort.write(out)
    total = sum(len(v) for v in cohort.clickstreams.values())
    _finish(args, out, started, {"seed": args.seed})
    print(
        f"{config_path}: {args.students} students, "
        f"{len(cohort.threads.threads)} threads, {total} actions"
    )
    return 0


def cmd_report(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    reports = []
    for path in sorted(Path(args.reports).glob("*.json")):
        if path.name == MANIFEST_NAME or path.name.endswith(".meta.json"):
            continue
        try:
            reports.append(read_report(path))
        except (SchemaError, KeyError):
            log.info("skipping %s: not an evaluation report", path)
    if not reports:
        raise ValidationError(f"no evaluation reports found under {args.reports}")
    write_report_table(reports, out / "reports.csv")
    _finish(args, out, started, {})
    print(f"reports.csv: {len(reports)} cells")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_config(p) -> None:
    p.add_argument("--config", required=True, help="course config JSON")


def _add_out(p) -> None:
    p.add_argument("--out", required=True, help="output directory")


def _add_slice(p, required=False, default="full") -> None:
    p.add_argument(
        "--slice", choices=SLICE_NAMES,
        required=required, default=None if required else default,
        help="time window cut",
    )


def _add_method(p) -> None:
    p.add_argument("--method", choices=("a", "b"), default="a",
                   help="forum graph construction")


def _add_model(p) -> None:
    p.add_argument("--model", choices=FAMILIES, default="logistic")


def _add_seed(p) -> None:
    p.add_argument("--seed", type=int, default=0)


def _add_target(p) -> None:
    p.add_argument("--target", choices=("distinction", "at_risk"),
                   default="distinction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohortlens",
        description="Learning-analytics pipeline over multi-platform activity logs.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize raw exports into a unified log")
    _add_config(p); _add_out(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sessions", help="segment the log into browser/study sessions")
    _add_config(p); _add_out(p)
    p.set_defaults(func=cmd_sessions)

    p = sub.add_parser("graph", help="build a forum graph and dump arcs + summary")
    _add_config(p); _add_out(p); _add_slice(p); _add_method(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("features", help="write the per-student feature matrix")
    _add_config(p); _add_out(p); _add_slice(p); _add_method(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("rank", help="chi-square feature ranking with elbow cut")
    _add_config(p); _add_out(p); _add_slice(p); _add_method(p); _add_target(p)
    p.add_argument("--k", type=int, default=None,
                   help="override the elbow with a fixed feature count")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("correlate",
                       help="Spearman correlation of graph metrics with grades")
    _add_config(p); _add_out(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("train", help="fit one model on the whole course")
    _add_config(p); _add_out(p); _add_slice(p); _add_method(p)
    _add_model(p); _add_seed(p); _add_target(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="cross-validated within-class evaluation")
    _add_config(p); _add_out(p); _add_slice(p); _add_method(p)
    _add_model(p); _add_seed(p); _add_target(p)
    p.add_argument("--all", action="store_true",
                   help="run the full slice x method x model grid")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for --all")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transfer", help="train on one course, test on another")
    _add_config(p); _add_out(p); _add_method(p); _add_model(p); _add_seed(p)
    _add_target(p)
    _add_slice(p, required=True)
    p.add_argument("--test-config", required=True,
                   help="course config JSON for the test cohort")
    p.add_argument("--test-slice", choices=SLICE_NAMES, default=None,
                   help="test window (defaults to --slice)")
    p.add_argument("--mode", choices=("cross_offering", "cross_course"),
                   default="cross_offering")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("atrisk",
                       help="at-risk screening with majority downsampling")
    _add_config(p); _add_out(p); _add_method(p); _add_model(p); _add_seed(p)
    _add_slice(p)
    p.add_argument("--test-config", default=None,
                   help="optional test cohort (otherwise within-class CV)")
    p.add_argument("--test-slice", choices=SLICE_NAMES, default=None)
    p.add_argument("--ratio", type=int, default=2,
                   help="majority:minority cap after downsampling")
    p.set_defaults(func=cmd_atrisk)

    p = sub.add_parser("synth", help="generate a synthetic course")
    _add_out(p); _add_seed(p)
    p.add_argument("--students", type=int, default=500)
    p.add_argument("--course-id", default="synth-101")
    p.add_argument("--invert", action="store_true",
                   help="swap behavior between the top and bottom bands")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="aggregate evaluation reports into one table")
    _add_out(p)
    p.add_argument("--reports", required=True,
                   help="directory containing report JSON files")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = ["cohortlens", *argv]
    try:
        return args.func(args)
    except (ConfigError, SchemaError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT
    except (ValidationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONTRACT
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_TRAINING
    except CohortlensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
