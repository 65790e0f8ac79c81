"""Command-line entry points.

Subcommands:
  run                batch pipeline over a dataset, full logs to --out
  eval               batch pipeline, single JSON report to --out
  align              align two .xyz clouds and print the result
  extract            grasp rectangle from rod + object mask images
  datasets validate  check a dataset root and print counts
  fixtures record    run live clients while persisting replay fixtures
  fixtures verify    replay a fixture set twice and compare outputs

Any subcommand accepts ``--config FILE``: a text file of ``key = value``
lines whose keys are the subcommand's long flag names (dashes or
underscores). Values given on the command line override the file. Use
``true``/``false`` for switch flags; ``#`` starts a comment. Service
credentials come only from the VLAD_SERVICE_TOKEN environment variable,
never from flags or config files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .alignment import align_icp, align_pca_opt
from .clouds import Frame, load_xyz
from .datasets import DEFAULT_MIN_ANNOTATIONS, describe_root, load_dataset
from .errors import VladError
from .evaluation import (
    DEFAULT_IOU_THRESHOLD,
    EvalConfig,
)
from .grasping import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    find_discontinuities,
    fit_rod_axis,
    select_grasp,
)
from .lifting import load_mask_png
from .pipeline import DEFAULT_DILATION, run_batch
from .services import RecordingClient, ReplayClient, parse_client_spec

DEFAULT_ANGLE_DEG = 30.0

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


# --- config files ----------------------------------------------------------


def read_config_pairs(path) -> list[tuple[str, str]]:
    """Parse ``key = value`` lines; comments and blank lines are skipped."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("_", "-").lstrip("-")
        value = value.strip()
        if not key or not value:
            raise ValueError(f"{path}:{lineno}: empty key or value")
        pairs.append((key, value))
    return pairs


def config_to_argv(pairs) -> list[str]:
    """Turn config pairs into argv tokens that real flags can override."""
    tokens = []
    for key, value in pairs:
        if value.lower() in _TRUE_WORDS:
            tokens.append(f"--{key}")
        elif value.lower() in _FALSE_WORDS:
            continue
        else:
            tokens.extend([f"--{key}", value])
    return tokens


def expand_config(argv: list[str]) -> list[str]:
    """Splice config-file tokens in right after the subcommand name."""
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None or not argv:
        return argv
    split = 1
    if len(argv) > 1 and argv[1] in ("validate", "record", "verify"):
        split = 2
    return argv[:split] + config_to_argv(read_config_pairs(path)) + argv[split:]


# --- shared flag groups ------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--config", metavar="FILE", help="key = value defaults file")
    parser.add_argument("--verbose", action="store_true", help="info-level logging")


def _add_dataset_flags(parser):
    parser.add_argument("--dataset", required=True, choices=["cornell", "jacquard"])
    parser.add_argument("--root", required=True, help="dataset root directory")
    parser.add_argument(
        "--min-annotations",
        type=int,
        default=DEFAULT_MIN_ANNOTATIONS,
        help="exclude samples with fewer annotations (jacquard only)",
    )
    parser.add_argument("--ids", help="comma-separated sample ids to keep")


def _add_scoring_flags(parser):
    parser.add_argument("--iou-threshold", type=float, default=DEFAULT_IOU_THRESHOLD)
    parser.add_argument(
        "--iou-only",
        action="store_true",
        help="disable the angle criterion; score by IoU alone",
    )
    parser.add_argument(
        "--angle-threshold-deg",
        type=float,
        default=DEFAULT_ANGLE_DEG,
        help="max angle difference for a counting match",
    )
    parser.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    parser.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)


def _add_pipeline_flags(parser):
    parser.add_argument("--jaw-height", type=float, help="override rectangle height")
    parser.add_argument("--dilation", type=int, default=DEFAULT_DILATION)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--proper-only", action="store_true")
    parser.add_argument("--refine", action="store_true")
    parser.add_argument(
        "--single-step",
        action="store_true",
        help="skip the reasoning steps of the prompt chain",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--debug-dir", help="dump per-sample intermediates here")


def _eval_config(args) -> EvalConfig:
    angle = None if args.iou_only else math.radians(args.angle_threshold_deg)
    return EvalConfig(
        iou_threshold=args.iou_threshold,
        angle_threshold=angle,
        delta=args.delta,
        epsilon=args.epsilon,
    )


def _load_samples(args):
    ids = args.ids.split(",") if args.ids else None
    return load_dataset(
        args.dataset, args.root, min_annotations=args.min_annotations, ids=ids
    )


def _run_args(args, client, **overrides):
    options = dict(
        workers=args.workers,
        dilation=args.dilation,
        jaw_height=args.jaw_height,
        proper_only=args.proper_only,
        refine=args.refine,
        three_step=not args.single_step,
        seed=args.seed,
        debug_dir=args.debug_dir,
    )
    options.update(overrides)
    return run_batch(_load_samples(args), _eval_config(args), client, **options)


# --- subcommand handlers ------------------------------------------------------


def _cmd_run(args) -> int:
    client = parse_client_spec(args.clients)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, _ = _run_args(
        args,
        client,
        jsonl_path=out / "runs.jsonl",
        plot_dir=(out / "plots") if args.plot else None,
    )
    report.save_json(out / "report.json")
    print(report.format_table())
    return 0


def _cmd_eval(args) -> int:
    clients = args.clients or f"replay:{Path(args.root) / 'fixtures'}"
    report, _ = _run_args(args, parse_client_spec(clients))
    report.save_json(args.out)
    print(report.format_table())
    return 0


def _cmd_align(args) -> int:
    generated = load_xyz(args.src, frame=Frame.GENERATED)
    scene = load_xyz(args.dst, frame=Frame.SCENE)
    if args.method == "pca-opt":
        result = align_pca_opt(
            scene, generated, proper_only=args.proper_only, refine=args.refine
        )
    else:
        result = align_icp(scene, generated)
    if args.out:
        result.save_json(args.out)
    print(result.to_json())
    return 0


def _cmd_extract(args) -> int:
    rod = load_mask_png(args.rod)
    obj = load_mask_png(args.object)
    axis = fit_rod_axis(rod)
    gaps = find_discontinuities(rod, axis, obj)
    grasp = select_grasp(
        gaps, axis, obj, delta=args.delta, epsilon=args.epsilon, jaw_height=args.jaw_height
    )
    if args.out:
        Path(args.out).write_text(grasp.to_json() + "\n")
    print(grasp.to_json())
    return 0


def _cmd_datasets_validate(args) -> int:
    summary = describe_root(args.root, min_annotations=args.min_annotations)
    for line in summary.format_lines():
        print(line)
    return 0 if summary.sample_count else 1


def _cmd_fixtures_record(args) -> int:
    client = RecordingClient(parse_client_spec(args.clients), args.fixtures)
    report, _ = _run_args(args, client)
    print(report.format_table())
    return 0


def _cmd_fixtures_verify(args) -> int:
    client = ReplayClient(args.fixtures)
    runs = []
    reports = []
    for _ in range(2):
        report, batch = _run_args(args, client)
        runs.append([run.to_json_dict(include_timings=False) for run in batch])
        reports.append(report.to_json_dict())
    if runs[0] == runs[1] and reports[0] == reports[1]:
        print(f"deterministic: {len(runs[0])} samples, two replays identical")
        return 0
    differing = sum(1 for a, b in zip(runs[0], runs[1]) if a != b)
    print(f"NOT deterministic: {differing} of {len(runs[0])} samples differ")
    return 1


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlad", description="rod-impaled grasp detection toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="batch pipeline with full logs")
    _add_dataset_flags(run)
    run.add_argument("--clients", required=True, help="replay:DIR or http(s)://URL")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--plot", action="store_true", help="save overlay PNGs")
    _add_scoring_flags(run)
    _add_pipeline_flags(run)
    _add_common(run)
    run.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="batch pipeline, single JSON report")
    _add_dataset_flags(ev)
    ev.add_argument(
        "--clients", help="replay:DIR or http(s)://URL (default: replay:ROOT/fixtures)"
    )
    ev.add_argument("--out", required=True, help="report JSON path")
    _add_scoring_flags(ev)
    _add_pipeline_flags(ev)
    _add_common(ev)
    ev.set_defaults(func=_cmd_eval)

    al = sub.add_parser("align", help="align two .xyz point clouds")
    al.add_argument("--src", required=True, help="generated-view cloud (.xyz)")
    al.add_argument("--dst", required=True, help="scene cloud (.xyz)")
    al.add_argument("--method", choices=["pca-opt", "icp"], default="pca-opt")
    al.add_argument("--proper-only", action="store_true")
    al.add_argument("--refine", action="store_true")
    al.add_argument("--out", help="also write the result JSON here")
    _add_common(al)
    al.set_defaults(func=_cmd_align)

    ex = sub.add_parser("extract", help="grasp rectangle from mask images")
    ex.add_argument("--rod", required=True, help="projected rod mask PNG")
    ex.add_argument("--object", required=True, help="object mask PNG")
    ex.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    ex.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    ex.add_argument("--jaw-height", type=float)
    ex.add_argument("--out", help="also write the rectangle JSON here")
    _add_common(ex)
    ex.set_defaults(func=_cmd_extract)

    ds = sub.add_parser("datasets", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="datasets_command", required=True)
    validate = ds_sub.add_parser("validate", help="check layout, print counts")
    validate.add_argument("root")
    validate.add_argument(
        "--min-annotations", type=int, default=DEFAULT_MIN_ANNOTATIONS
    )
    _add_common(validate)
    validate.set_defaults(func=_cmd_datasets_validate)

    fx = sub.add_parser("fixtures", help="replay fixture utilities")
    fx_sub = fx.add_subparsers(dest="fixtures_command", required=True)

    record = fx_sub.add_parser("record", help="run live clients, persist fixtures")
    _add_dataset_flags(record)
    record.add_argument("--clients", required=True, help="live client spec")
    record.add_argument("--fixtures", required=True, help="fixture directory to write")
    _add_scoring_flags(record)
    _add_pipeline_flags(record)
    _add_common(record)
    record.set_defaults(func=_cmd_fixtures_record)

    verify = fx_sub.add_parser("verify", help="replay twice, compare outputs")
    _add_dataset_flags(verify)
    verify.add_argument("--fixtures", required=True, help="fixture directory to read")
    _add_scoring_flags(verify)
    _add_pipeline_flags(verify)
    _add_common(verify)
    verify.set_defaults(func=_cmd_fixtures_verify)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = expand_config(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (VladError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
