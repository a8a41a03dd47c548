"""JSON run configuration: schema validation with defaults, strict keys.

All validation failures are collected and reported together; unknown keys are
rejected so typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .engine import MODE_ASYNC, MODE_SYNC, HyperParams
from .errors import ConfigError
from .scheduler import DelayModel

PROBLEMS = ("hyperclean", "quadratic", "continual")

_PROBLEM_PARAM_KEYS = {
    "hyperclean": {"N", "d_f", "n_train", "n_val", "classes", "corruption_rate",
                   "r_l1", "mean_spread", "shared_mask", "init_scale"},
    "quadratic": {"N", "n", "m", "l1_weight", "spectral_cap", "init_scale"},
    "continual": {"N", "d_f", "classes", "n_old", "n_new", "prox_weight",
                  "l1_weight", "mean_spread", "init_scale"},
}

_HYPER_KEYS = {"eta_x", "eta_y", "eta_lambda", "eta_theta", "eta_y_ll", "eta_phi",
               "mu", "lambda1", "epsilon", "iota", "T1", "K", "M", "T", "L_est",
               "fd_step"}

_NETWORK_KEYS = {"N", "p_c", "static_topology"}

_SCHEDULER_KEYS = {"p_active", "tau", "delay", "round_length",
                   "stragglers_per_round", "straggler_multiplier"}

_DELAY_KEYS = {"compute_mean", "compute_jitter", "comm_mean", "comm_jitter"}

_TOP_KEYS = {"problem", "problem_params", "seed", "mode", "network", "scheduler",
             "hyper", "stop_tol", "out_dir", "dump_topology", "dump_cuts",
             "compare"}

_COMPARE_KEYS = {"target_upper_loss", "seeds"}


@dataclass
class RunConfig:
    problem: str
    seed: int
    mode: str = MODE_ASYNC
    problem_params: dict = field(default_factory=dict)
    network: dict = field(default_factory=lambda: {"N": 10, "p_c": 0.5, "static_topology": False})
    scheduler: dict = field(default_factory=lambda: {"p_active": 1.0, "tau": 20})
    hyper: dict = field(default_factory=dict)
    stop_tol: float | None = None
    out_dir: str | None = None
    dump_topology: bool = False
    dump_cuts: bool = False
    compare: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def hyper_params(self) -> HyperParams:
        return HyperParams(**self.hyper)

    def delay_model(self) -> DelayModel | None:
        sched = self.scheduler
        if "delay" not in sched:
            return None
        d = sched["delay"]
        N = self.network["N"]
        return DelayModel(
            compute_mean=np.full(N, float(d["compute_mean"])),
            compute_jitter=float(d.get("compute_jitter", 0.1)),
            comm_mean=float(d.get("comm_mean", 0.1)),
            comm_jitter=float(d.get("comm_jitter", 0.1)),
            round_length=float(sched["round_length"]),
            straggler_count=int(sched.get("stragglers_per_round", 0)),
            straggler_multiplier=float(sched.get("straggler_multiplier", 1.0)),
        )


def _check_keys(section: dict, allowed: set, where: str, problems: list[str]) -> None:
    for key in section:
        if key not in allowed:
            problems.append(f"{where}: unknown key {key!r}")


def validate_config(raw: dict) -> RunConfig:
    """Validate a raw dict, fill defaults, and return the typed config."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    _check_keys(raw, _TOP_KEYS, "top level", problems)

    problem = raw.get("problem")
    if problem is None:
        problems.append("missing required key 'problem'")
    elif problem not in PROBLEMS:
        problems.append(f"problem must be one of {PROBLEMS}, got {problem!r}")

    seed = raw.get("seed")
    if seed is None:
        problems.append("missing required key 'seed'")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append(f"seed must be a non-negative integer, got {seed!r}")

    mode = raw.get("mode", MODE_ASYNC)
    if mode not in (MODE_ASYNC, MODE_SYNC):
        problems.append(f"mode must be {MODE_ASYNC!r} or {MODE_SYNC!r}, got {mode!r}")

    network = {"N": 10, "p_c": 0.5, "static_topology": False}
    network.update(raw.get("network", {}))
    _check_keys(raw.get("network", {}), _NETWORK_KEYS, "network", problems)
    if not isinstance(network["N"], int) or network["N"] < 1:
        problems.append(f"network.N must be a positive integer, got {network['N']!r}")
    if not (0.0 < float(network["p_c"]) <= 1.0):
        problems.append(f"network.p_c must be in (0, 1], got {network['p_c']!r}")

    scheduler = {"p_active": 1.0, "tau": 20}
    scheduler.update(raw.get("scheduler", {}))
    _check_keys(raw.get("scheduler", {}), _SCHEDULER_KEYS, "scheduler", problems)
    p_active = scheduler["p_active"]
    if not (0.0 < float(p_active) <= 1.0):
        problems.append(f"scheduler.p_active must be in (0, 1], got {p_active!r}")
    if not isinstance(scheduler["tau"], int) or scheduler["tau"] < 1:
        problems.append(f"scheduler.tau must be an integer >= 1, got {scheduler['tau']!r}")
    if "delay" in scheduler:
        _check_keys(scheduler["delay"], _DELAY_KEYS, "scheduler.delay", problems)
        if "compute_mean" not in scheduler["delay"]:
            problems.append("scheduler.delay requires compute_mean")
        if "round_length" not in scheduler:
            problems.append("scheduler.round_length is required with a delay model")
        elif float(scheduler["round_length"]) <= 0:
            problems.append("scheduler.round_length must be > 0")
        n_strag = scheduler.get("stragglers_per_round", 0)
        if n_strag and n_strag >= network["N"]:
            problems.append("scheduler.stragglers_per_round must be < N")

    hyper = dict(raw.get("hyper", {}))
    _check_keys(hyper, _HYPER_KEYS, "hyper", problems)
    if hyper.get("iota", 1) < 1:
        problems.append("hyper.iota: cut period must be >= 1")
    if hyper.get("T", 0) < 0:
        problems.append("hyper.T must be >= 0")
    for key in ("eta_x", "eta_y", "eta_lambda", "eta_theta", "eta_y_ll", "eta_phi",
                "mu", "epsilon"):
        if key in hyper and hyper[key] <= 0:
            problems.append(f"hyper.{key} must be > 0")
    if "T" in hyper and "T1" not in hyper:
        hyper["T1"] = hyper["T"]
    if "T" in hyper and "T1" in hyper and hyper["T1"] > hyper["T"]:
        problems.append("hyper.T1 must be <= hyper.T")

    pp = dict(raw.get("problem_params", {}))
    if problem in PROBLEMS:
        _check_keys(pp, _PROBLEM_PARAM_KEYS[problem], f"problem_params[{problem}]", problems)
        if "N" in pp and pp["N"] != network["N"]:
            problems.append("problem_params.N must match network.N (omit it; network.N is used)")
        if problem == "hyperclean":
            cr = pp.get("corruption_rate", 0.3)
            if not (0.0 <= cr < 1.0):
                problems.append(f"problem_params.corruption_rate must be in [0, 1), got {cr!r}")
            if pp.get("classes", 3) < 2:
                problems.append("problem_params.classes must be >= 2")

    stop_tol = raw.get("stop_tol")
    if stop_tol is not None and stop_tol <= 0:
        problems.append("stop_tol must be > 0 when set")

    compare = dict(raw.get("compare", {}))
    _check_keys(compare, _COMPARE_KEYS, "compare", problems)

    if problems:
        raise ConfigError(problems)

    return RunConfig(problem=problem, seed=seed, mode=mode, problem_params=pp,
                     network=network, scheduler=scheduler, hyper=hyper,
                     stop_tol=stop_tol, out_dir=raw.get("out_dir"),
                     dump_topology=bool(raw.get("dump_topology", False)),
                     dump_cuts=bool(raw.get("dump_cuts", False)),
                     compare=compare)


def parse_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from exc
    return validate_config(raw)


def emit_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
