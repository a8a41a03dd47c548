"""Build problems and engines from validated configs and persist outputs."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import problems as prob_mod
from .config import RunConfig
from .core import BilevelProblem
from .engine import MODE_ASYNC, MODE_SYNC, Engine, RunResult
from .metrics import format_csv


def build_problem(config: RunConfig) -> BilevelProblem:
    N = config.network["N"]
    pp = {k: v for k, v in config.problem_params.items() if k != "N"}
    if config.problem == "hyperclean":
        return prob_mod.gen_hyperclean(config.seed, N=N, **pp)
    if config.problem == "quadratic":
        pp.setdefault("n", 4)
        pp.setdefault("m", pp["n"])
        return prob_mod.gen_quadratic(config.seed, N=N, **pp)
    if config.problem == "continual":
        return prob_mod.gen_continual(config.seed, N=N, **pp)
    raise ValueError(f"unknown problem {config.problem!r}")


def build_engine(config: RunConfig, problem: BilevelProblem | None = None,
                 mode: str | None = None) -> Engine:
    if problem is None:
        problem = build_problem(config)
    return Engine(
        problem, config.hyper_params(),
        mode=mode or config.mode, seed=config.seed,
        p_c=config.network["p_c"],
        static_topology=config.network["static_topology"],
        p_active=config.scheduler["p_active"], tau=config.scheduler["tau"],
        delay_model=config.delay_model(), stop_tol=config.stop_tol,
        dump_topology=config.dump_topology, dump_cuts=config.dump_cuts)


def _jsonable(value):
    """NaN/inf are not valid JSON; report them as null."""
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def summary_dict(result: RunResult, mode: str) -> dict:
    rec = result.final_record
    raw = {
        "mode": mode,
        "seed": result.seed,
        "iterations": len(result.records),
        "final_psi": rec.psi if rec else None,
        "final_gap_sq": rec.gap_sq if rec else None,
        "final_consensus": rec.consensus if rec else None,
        "final_upper_loss": rec.upper_loss if rec else None,
        "final_lower_loss": rec.lower_loss if rec else None,
        "final_task_metric": rec.task_metric if rec else None,
        "comm_bits": result.counters.comm_bits_cum,
        "flops": result.counters.flops_cum,
        "virtual_time": rec.virtual_time if rec else 0.0,
    }
    return {k: _jsonable(v) for k, v in raw.items()}


def write_outputs(out_dir: str | Path, result: RunResult, mode: str,
                  engine: Engine, csv_name: str = "metrics.csv",
                  summary_name: str = "summary.json") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / csv_name).write_text(format_csv(result.records))
    summary = summary_dict(result, mode)
    (out / summary_name).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if engine.topology_lines is not None:
        (out / "topology.txt").write_text("\n".join(engine.topology_lines) + "\n")
    if engine.cut_rows is not None:
        header = "t,owner,plane_id,c,a_norm,b_norm"
        (out / "cuts.csv").write_text("\n".join([header] + engine.cut_rows) + "\n")


def time_to_target(result: RunResult, target_upper_loss: float) -> float | None:
    """Virtual time at which the upper loss first reaches the target."""
    for rec in result.records:
        if rec.upper_loss <= target_upper_loss:
            return rec.virtual_time
    return None
