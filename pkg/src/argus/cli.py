"""Command-line entry point: run, compare, validate.

Exit codes: 0 success, 1 validation or property failure, 2 numeric divergence.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

from .config import RunConfig, parse_config, validate_config
from .engine import MODE_ASYNC, MODE_SYNC
from .errors import ConfigError, DivergenceError
from .metrics import format_csv
from .runner import build_engine, build_problem, summary_dict, time_to_target, write_outputs
from .validate import run_all

log = logging.getLogger("argus")


def _setup_logging() -> None:
    level = os.environ.get("ARGUS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        raw = config.to_dict()
        raw.update(overrides)
        config = validate_config(raw)
    return config


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    out_dir = Path(config.out_dir or "out")
    engine = build_engine(config)
    log.info("running %s on %s for %d iterations", config.mode, config.problem,
             config.hyper_params().T)
    try:
        result = engine.run()
    except DivergenceError as exc:
        # flush whatever trace exists before reporting the failure
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.csv").write_text(format_csv(engine.records))
        print(f"divergence: {exc}", file=sys.stderr)
        return 2
    write_outputs(out_dir, result, config.mode, engine)
    summary = summary_dict(result, config.mode)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    if config.delay_model() is None:
        print("compare requires a scheduler.delay section", file=sys.stderr)
        return 1
    target = config.compare.get("target_upper_loss")
    if target is None:
        print("compare requires compare.target_upper_loss", file=sys.stderr)
        return 1

    out_dir = Path(config.out_dir or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    joined: dict = {"target_upper_loss": target, "seed": config.seed}
    times: dict[str, float | None] = {}
    for mode, name in ((MODE_ASYNC, "argus"), (MODE_SYNC, "argus_s")):
        cfg = copy.deepcopy(config)
        cfg.mode = mode
        engine = build_engine(cfg, mode=mode)
        try:
            result = engine.run()
        except DivergenceError as exc:
            (out_dir / f"metrics_{name}.csv").write_text(format_csv(engine.records))
            print(f"divergence in {mode}: {exc}", file=sys.stderr)
            return 2
        (out_dir / f"metrics_{name}.csv").write_text(format_csv(result.records))
        reached = time_to_target(result, target)
        times[name] = reached
        joined[name] = {
            "virtual_time_to_target": reached,
            "reached": reached is not None,
            "final_upper_loss": result.final_record.upper_loss if result.final_record else None,
            "virtual_time_total": result.final_record.virtual_time if result.final_record else 0.0,
        }
    if times["argus"] is not None and times["argus_s"] is not None:
        joined["speedup_ratio"] = times["argus"] / times["argus_s"]
    (out_dir / "compare_summary.json").write_text(
        json.dumps(joined, indent=2, sort_keys=True) + "\n")
    print(json.dumps(joined, indent=2, sort_keys=True))
    return 0


def cmd_validate(_: argparse.Namespace) -> int:
    results = run_all(verbose=True)
    failed = [name for name, ok, _ in results if not ok]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="argus",
        description="Asynchronous decentralized bilevel optimization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one configuration and write metrics")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--mode", choices=[MODE_ASYNC, MODE_SYNC], default=None)
    run_p.add_argument("--out", default=None)
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="run async vs sync on the same instance")
    cmp_p.add_argument("--config", required=True)
    cmp_p.add_argument("--seed", type=int, default=None)
    cmp_p.add_argument("--mode", choices=[MODE_ASYNC, MODE_SYNC], default=None)
    cmp_p.add_argument("--out", default=None)
    cmp_p.set_defaults(func=cmd_compare)

    val_p = sub.add_parser("validate", help="run all module property suites")
    val_p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
