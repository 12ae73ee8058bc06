"""
Command-line entry point for the joint image-mask diffusion lab.

    python -m src.main [--config FILE] [--set section.field=value ...] <command> ...

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 partial sweep.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import torch
from pydantic import ValidationError as PydanticValidationError

from src.config import load_experiment_config, settings, write_resolved_config
from src.exceptions import DiffusionLabException, UsageError, ValidationError
from src.middleware import log_command
from src.models import ExperimentConfig
from src.services import (
    data_service,
    evaluation_service,
    report_service,
    sampling_service,
    sweep_service,
    training_service,
)
from src.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

RESOLVED_CONFIG = "config.resolved.json"


def _runs_root(cfg: ExperimentConfig) -> Path:
    return Path(settings.runs_dir or cfg.runtime.runs_dir)


def _parse_tokens(values: Optional[List[str]]) -> List[int]:
    tokens = []
    for item in values or ():
        for part in item.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                tokens.append(int(part))
            except ValueError:
                raise UsageError(f"token '{part}' is not an integer")
    if not tokens:
        raise UsageError("--tokens is required; unconditional sampling is not supported")
    return tokens


@log_command("generate-toy")
def cmd_generate_toy(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    manifest = data_service.generate_toy(cfg, Path(args.out))
    print(manifest)
    return EXIT_OK


@log_command("ingest")
def cmd_ingest(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    manifest = data_service.ingest(Path(args.table), Path(args.out), cfg.data.n_z)
    print(manifest)
    return EXIT_OK


@log_command("train")
def cmd_train(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir) if args.run_dir else (
        _runs_root(cfg) / f"{cfg.name}-{cfg.train.target.value}-p{cfg.train.loss.p}-s{cfg.train.seed}"
    )
    result = training_service.train(cfg, run_dir, resume=args.resume)
    print(result.best_checkpoint)
    return EXIT_OK


@log_command("sample")
def cmd_sample(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    tokens = _parse_tokens(args.tokens)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    checkpoint = Path(args.checkpoint)
    resolved = checkpoint.parent / RESOLVED_CONFIG
    if resolved.exists():
        # Sampler overrides from the command line still apply
        cfg = load_experiment_config(resolved, args.overrides)
    else:
        logger.warning(f"No {RESOLVED_CONFIG} next to {checkpoint}; using the current config")
    manifest = sampling_service.sample_to_archive(
        cfg, checkpoint, tokens, args.n_per_token, Path(args.out), args.seed
    )
    print(manifest)
    return EXIT_OK


@log_command("evaluate")
def cmd_evaluate(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if (args.real_features is None) != (args.gen_features is None):
        raise UsageError("--real-features and --gen-features must be given together")
    frame = evaluation_service.evaluate_archives(
        Path(args.gen), Path(args.real), cfg.metrics, Path(args.out),
        real_features=Path(args.real_features) if args.real_features else None,
        gen_features=Path(args.gen_features) if args.gen_features else None,
    )
    print(frame.to_string(index=False))
    return EXIT_OK


@log_command("sweep")
def cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(args.out) if args.out else _runs_root(cfg) / f"{cfg.name}-sweep"
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out)
    outcome = sweep_service.run(cfg, out, workers=args.workers, xlsx=args.xlsx)
    print(report_service.render_text(outcome.report))
    return outcome.exit_code


@log_command("report")
def cmd_report(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    per_replica = Path(args.per_replica)
    out = Path(args.out) if args.out else per_replica.parent
    report = report_service.from_csv(per_replica, out, cfg.metrics.alpha, args.xlsx)
    print(report_service.render_text(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jdiff",
        description="Joint image-mask diffusion: toy data, training, DDIM sampling, evaluation and sweeps",
    )
    parser.add_argument("--config", help="Experiment config file (default: config.json)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
        help="Override a config field; repeatable",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR")
    parser.add_argument("--log-dir", default=None, help="Also write jdiff.log into this directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-toy", help="Write a synthetic slice archive")
    p.add_argument("--out", required=True, help="Archive directory")
    p.set_defaults(handler=cmd_generate_toy)

    p = sub.add_parser("ingest", help="Build an archive from a metadata CSV and .npy slices")
    p.add_argument("--table", required=True, help="CSV with subject_id, z_index, z_total, image, mask[, pathology]")
    p.add_argument("--out", required=True, help="Archive directory")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("train", help="Train one (target, p) model")
    p.add_argument("--run-dir", help="Run directory (default: <runs_dir>/<name>-<target>-p<p>-s<seed>)")
    p.add_argument("--resume", action="store_true", help="Continue from last.ckpt")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="Conditional DDIM sampling from a checkpoint")
    p.add_argument("--checkpoint", help="best.ckpt of a training run")
    p.add_argument("--tokens", nargs="+", help="Condition tokens (z_bin + pathology * n_z), space or comma separated")
    p.add_argument("--n-per-token", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="Defaults to sampler.seed")
    p.add_argument("--out", required=True, help="Sample archive directory")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("evaluate", help="Metric CSV for a generated archive against a real one")
    p.add_argument("--gen", required=True, help="Generated archive")
    p.add_argument("--real", required=True, help="Real archive")
    p.add_argument("--out", required=True, help="Metric CSV")
    p.add_argument("--real-features", help="Precomputed real image features")
    p.add_argument("--gen-features", help="Precomputed generated image features")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("sweep", help="Targets x ps x replicas sweep with report")
    p.add_argument("--out", help="Sweep directory (default: <runs_dir>/<name>-sweep)")
    p.add_argument("--workers", type=int, default=None, help="Parallel cells (default: sweep.workers)")
    p.add_argument("--xlsx", action="store_true", help="Also write report.xlsx")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("report", help="Regenerate the report from a per-replica CSV")
    p.add_argument("--per-replica", required=True, help="per_replica.csv of a sweep")
    p.add_argument("--out", help="Output directory (default: next to the CSV)")
    p.add_argument("--xlsx", action="store_true", help="Also write report.xlsx")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(
        log_level=args.log_level or settings.log_level,
        log_file="jdiff.log" if (args.log_dir or settings.log_dir) else None,
        log_dir=Path(args.log_dir) if args.log_dir else settings.log_dir,
        use_color=settings.log_color,
    )
    if settings.num_threads:
        torch.set_num_threads(settings.num_threads)

    try:
        cfg = load_experiment_config(Path(args.config) if args.config else None, args.overrides)
        return args.handler(cfg, args)
    except (ValidationError, PydanticValidationError) as e:
        details = getattr(e, "details", None)
        logger.error(f"Validation error [{type(e).__name__}]: {getattr(e, 'message', e)}"
                     + (f" ({details})" if details else ""))
        return EXIT_VALIDATION
    except DiffusionLabException as e:
        logger.error(f"{type(e).__name__}: {e.message}" + (f" ({e.details})" if e.details else ""))
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unhandled {type(e).__name__}: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
