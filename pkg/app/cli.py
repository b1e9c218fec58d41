"""
Command line entry point.

    python -m app generate --out worlds/square --config square.conf
    python -m app partition --config square.conf
    python -m app run --config square.conf --seed 3 --loop-mode uni
    python -m app eval estimate.tum ground_truth.tum
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.exceptions import SlamError
from app.models.trajectory import TrajectoryFormat
from app.schemas.pipeline import PipelineConfig
from app.services.pipeline_service import PipelineService
from app.utils import reports
from app.utils.kvconfig import build_config, load_config
from app.utils.logging import configure_logging

EXIT_ERROR = 2


def _add_config_flags(parser: argparse.ArgumentParser, with_format: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="key=value run configuration")
    parser.add_argument("--seed", type=int, help="world seed, overrides world.seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--loop-mode", choices=["uni", "bi", "off"], help="loop anchor reuse, or no loops")
    if with_format:
        parser.add_argument("--format", choices=[f.value for f in TrajectoryFormat], help="trajectory file format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description="Submap SLAM backend")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_flags(sub.add_parser("generate", help="write a synthetic world as replay files"))
    _add_config_flags(sub.add_parser("partition", help="motion analysis and partition only"))
    _add_config_flags(sub.add_parser("run", help="full pipeline"), with_format=True)

    evaluate = sub.add_parser("eval", help="metrics of an estimate against a reference")
    evaluate.add_argument("estimate", type=Path)
    evaluate.add_argument("reference", type=Path)
    evaluate.add_argument("--format", choices=[f.value for f in TrajectoryFormat], default="tum")
    evaluate.add_argument("--stride", type=int, default=1)
    evaluate.add_argument("--out", type=Path, help="write metrics.txt into this directory")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["world.seed"] = args.seed
    if args.out is not None:
        overrides["pipeline.output_dir"] = str(args.out)
    if getattr(args, "format", None):
        overrides["pipeline.trajectory_format"] = args.format
    if args.loop_mode == "off":
        overrides["partition.loop_detection"] = False
    elif args.loop_mode is not None:
        overrides["partition.loop_detection"] = True
        overrides["partition.loop_reuse_mode"] = args.loop_mode
    if args.config is not None:
        return load_config(args.config, overrides)
    return build_config({}, overrides)


def _print_values(values: Dict[str, Any]) -> None:
    sys.stdout.write(reports.format_key_values(values))


def run_command(args: argparse.Namespace) -> None:
    if args.command == "eval":
        fmt = TrajectoryFormat(args.format)
        report = PipelineService.evaluate_files(args.estimate, args.reference, fmt, args.stride)
        values = report.model_dump(exclude={"segment_lengths"})
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            reports.write_key_values(args.out / "metrics.txt", values)
        _print_values(values)
        return

    config = config_from_args(args)
    out = Path(config.output_dir)
    if args.command == "generate":
        response = PipelineService.generate_replay(config, out)
        _print_values({"directory": response.directory, "n_frames": response.n_frames, "n_submaps": response.n_submaps})
    elif args.command == "partition":
        response = PipelineService.run_partition(config, out)
        _print_values(
            {
                "n_frames": response.n_frames,
                "n_keyframes": response.n_keyframes,
                "n_submaps": len(response.submaps),
                "states": response.states,
            }
        )
    else:
        report = PipelineService.run_pipeline(config, out)
        values: Dict[str, Any] = {
            "submaps": report.n_submaps,
            "edges": report.n_edges,
            "accepted": report.n_accepted,
            "loop_edges": report.n_loop_edges,
        }
        if report.metrics is not None:
            values["ate_rmse_m"] = report.metrics.ate_rmse_m
            values["drift_pct"] = report.metrics.drift_pct
        values["trajectory"] = report.artifacts.get("trajectory")
        _print_values(values)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        run_command(args)
    except SlamError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    return 0
