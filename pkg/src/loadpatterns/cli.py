"""Command-line entry points.

``loadpatterns run`` executes the staged pipeline from a JSON config,
``loadpatterns report`` rebuilds the report files from an artifact
directory, and ``loadpatterns generate`` writes a synthetic cohort.

Exit codes: 0 success, 1 configuration error, 2+N for a failure in
pipeline stage N (ingest=1 .. report=7).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PipelineConfig, parse_grid, parse_k_range
from .errors import ConfigInvalidError, LoadPatternsError, StageError
from .pipeline import STAGES, emit_report, run_pipeline, stage_number
from .synthgen import GeneratorConfig, generate

CONFIG_ERROR = 1
STAGE_ERROR_BASE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadpatterns",
        description="Load-pattern clustering and socioeconomic modelling pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline from a JSON config")
    run.add_argument("--config", required=True, help="path to the pipeline config JSON")
    run.add_argument("--stage", choices=STAGES, help="stop after this stage")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out-dir", help="override the artifact directory")
    run.add_argument("--k-range", help="override the cluster-count scan, as LO:HI")
    run.add_argument("--bins", type=int, help="override the discretization bin count")
    run.add_argument(
        "--grid", help="override the hyperparameter grid, as LAYERS:WIDTHS:LRS"
    )

    report = sub.add_parser("report", help="re-emit report files from artifacts")
    report.add_argument("--artifacts", required=True, help="pipeline artifact directory")

    gen = sub.add_parser("generate", help="write a synthetic cohort")
    gen.add_argument("--config", help="generator config JSON (defaults apply if omitted)")
    gen.add_argument("--out-dir", required=True, help="directory for the generated files")
    gen.add_argument("--seed", type=int, help="override the generator seed")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = PipelineConfig.from_file(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.out_dir is not None:
            config.out_dir = args.out_dir
        if args.k_range is not None:
            config.k_range = parse_k_range(args.k_range)
        if args.bins is not None:
            config.bins = args.bins
        if args.grid is not None:
            config.grid = parse_grid(args.grid)
        config.validate()
    except ConfigInvalidError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR

    try:
        out_dir = run_pipeline(config, stop_stage=args.stage)
    except StageError as exc:
        print(exc, file=sys.stderr)
        return STAGE_ERROR_BASE + stage_number(exc.stage)
    print(f"artifacts written to {out_dir}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        files = emit_report(args.artifacts)
    except LoadPatternsError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return STAGE_ERROR_BASE + stage_number("report")
    for path in files:
        print(path)
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    try:
        if args.config:
            try:
                data = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigInvalidError(f"cannot read generator config: {exc}")
            config = GeneratorConfig.from_dict(data)
        else:
            config = GeneratorConfig()
        if args.seed is not None:
            config.seed = args.seed
        cohort = generate(config)
    except (ConfigInvalidError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "meter.csv").write_text(cohort.meter_csv)
    (out_dir / "survey.csv").write_text(cohort.survey_csv)
    (out_dir / "ground_truth.json").write_text(
        json.dumps(cohort.truth, indent=2, sort_keys=True) + "\n"
    )
    print(f"synthetic cohort written to {out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "report":
        return _cmd_report(args)
    return _cmd_generate(args)


if __name__ == "__main__":
    sys.exit(main())
