"""``actdet`` command line: one subcommand per pipeline stage, plus ``all``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import artifacts as art
from .config import ConfigError, load_config, validate
from .pipeline import STAGES, Run, StageError, all_classes, run_ablation, run_all, run_stage, score_files
from .tracklet import ContractViolation

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("actdet")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config (JSON); defaults apply when omitted")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for per-video work")
    common.add_argument("--out-dir", help="run directory (overrides the config's out_dir)")
    common.add_argument("--skip-filter", action="store_true", help="keep every proposal")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="actdet", description="Desk-scale activity detection pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        if name == "score":
            sp.add_argument("--detections", help="detections JSON-lines (default: the run's refined detections)")
            sp.add_argument("--ground-truth", help="ground-truth JSON-lines (default: the run's eval/gt.jsonl)")
            sp.add_argument("--durations", help="JSON object of frames per video (default: the run's eval/durations.json)")
    a = sub.add_parser("all", parents=[common], help="run every stage in order")
    a.add_argument("--ablation", action="store_true", help="compare heads and inputs in a four-column table")
    return p


def _resolve(args) -> Run:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out_dir is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out_dir)
    validate(cfg)
    if args.jobs < 1:
        raise ConfigError("--jobs", "must be >= 1")
    return Run(cfg, Path(cfg.out_dir), jobs=args.jobs, skip_filter=args.skip_filter)


def _score_external(run: Run, args) -> dict:
    det = Path(args.detections) if args.detections else run.path("refine", "detections.jsonl")
    gt = Path(args.ground_truth) if args.ground_truth else run.path("eval", "gt.jsonl")
    dur = Path(args.durations) if args.durations else run.path("eval", "durations.json")
    durations = art.read_json(dur, "score")
    report, text, points = score_files(det, gt, durations, all_classes(run.cfg), run.cfg)
    art.write_json(run.path("score", "report.json"), report)
    art.write_atomic(run.path("score", "report.txt"), text)
    art.write_atomic(run.path("score", "det_points.csv"), points)
    return report


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        run = _resolve(args)
        if args.command == "all":
            if args.ablation:
                run_ablation(run)
                sys.stdout.write(run.path("ablation", "table.txt").read_text())
            else:
                run_all(run)
                sys.stdout.write(run.path("score", "report.txt").read_text())
        elif args.command == "score":
            _score_external(run, args)
            sys.stdout.write(run.path("score", "report.txt").read_text())
        else:
            run_stage(args.command, run)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except art.MissingInput as e:
        print(f"missing input: {e}", file=sys.stderr)
        return EXIT_MISSING
    except StageError as e:
        print(f"invariant breach in stage {e.stage!r}: {e.cause}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ContractViolation, AssertionError, ValueError) as e:
        print(f"invariant breach in {args.command!r}: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
