"""Bilevel problem interface and shared numerical utilities.

A problem bundles per-agent smooth oracles (G_i, g_i and their gradients),
the shared non-smooth terms (R on the upper block, r on the lower block)
through their proximal maps, and the per-agent datasets.  Everything downstream
(lower-level estimation, cutting planes, the update engine, metrics) talks to
problems only through this interface.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NumericError


@dataclass(frozen=True)
class ProblemDims:
    """Per-agent variable dimensions and the agent count."""

    n: int  # upper-variable dimension
    m: int  # lower-variable dimension
    N: int  # number of agents

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.N < 1:
            raise InvalidArgumentError(f"dims must be >= 1, got n={self.n} m={self.m} N={self.N}")


@dataclass
class VariableBlock:
    """Stacked per-agent vectors, one row per agent.

    kind is "upper" (rows of length n) or "lower" (rows of length m).
    """

    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidArgumentError("VariableBlock expects an (N, dim) array")
        if self.kind not in ("upper", "lower"):
            raise InvalidArgumentError(f"unknown block kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("VariableBlock entries must be finite")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "VariableBlock":
        return VariableBlock(self.values.copy(), self.kind)


def prox_l1(v: np.ndarray, s: float) -> np.ndarray:
    """Soft threshold: componentwise sign(v) * max(|v| - s, 0)."""
    if s < 0:
        raise InvalidArgumentError(f"soft-threshold scale must be >= 0, got {s}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - s, 0.0)


def finite_diff_grad(f: Callable[[np.ndarray], float], point: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise InvalidArgumentError(f"finite-difference step must be > 0, got {h}")
    point = np.asarray(point, dtype=np.float64)
    grad = np.empty_like(point)
    for k in range(point.size):
        e = np.zeros_like(point)
        e[k] = h
        fp = f(point + e)
        fm = f(point - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value while differencing coordinate {k}", coordinate=k)
        grad[k] = (fp - fm) / (2.0 * h)
    return grad


class BilevelProblem:
    """Oracle bundle for one bilevel instance.

    Subclasses implement the smooth oracles; the non-smooth terms default to
    zero (identity prox).  prox_R(v, s) means the prox of s*R, matching the
    argmin form used by the primal update.  Oracles must be pure functions of
    their arguments.
    """

    def __init__(self, dims: ProblemDims, datasets: list | None = None):
        self.dims = dims
        self.datasets = datasets if datasets is not None else [None] * dims.N

    # smooth upper objective
    def eval_G(self, i: int, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def grad_G_x(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_G_y(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # smooth lower objective
    def eval_g(self, i: int, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def grad_g_x(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_g_y(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # non-smooth terms; zero by default
    def eval_R(self, x: np.ndarray) -> float:
        return 0.0

    def prox_R(self, v: np.ndarray, s: float) -> np.ndarray:
        if s < 0:
            raise InvalidArgumentError(f"prox scale must be >= 0, got {s}")
        return np.asarray(v, dtype=np.float64).copy()

    def eval_r(self, y: np.ndarray) -> float:
        return 0.0

    def prox_r(self, v: np.ndarray, s: float) -> np.ndarray:
        if s < 0:
            raise InvalidArgumentError(f"prox scale must be >= 0, got {s}")
        return np.asarray(v, dtype=np.float64).copy()

    def cross_jvp(self, i: int, x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray | None:
        """Directional derivative of grad_g_y in an upper direction v, if available."""
        return None

    def task_metric(self, x_block: np.ndarray, y_block: np.ndarray) -> float:
        """Problem-specific quality number for the trace (NaN when undefined)."""
        return float("nan")

    init_scale: float = 0.0
    init_seed: int = 0

    def initial_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """Starting iterates: zeros by default.  A nonzero init_scale draws a
        seeded Gaussian lower block (a generic untrained model, shared across
        agents so the run starts at consensus); the upper block stays at zero,
        its natural neutral point."""
        N, n, m = self.dims.N, self.dims.n, self.dims.m
        x0 = np.zeros((N, n))
        if not self.init_scale:
            return x0, np.zeros((N, m))
        rng = np.random.default_rng(np.random.SeedSequence(self.init_seed).spawn(2)[1])
        y0 = np.tile(rng.standard_normal(m) * self.init_scale, (N, 1))
        return x0, y0


@dataclass
class GradCheckReport:
    """Finite-difference validation result for one evaluation point."""

    agent: int
    errors: dict = field(default_factory=dict)  # oracle name -> max relative error
    tol: float = 1e-5

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def __str__(self) -> str:
        rows = ", ".join(f"{k}={v:.3e}" for k, v in self.errors.items())
        return f"grad_check(agent={self.agent}, tol={self.tol:g}): {'PASS' if self.passed else 'FAIL'} [{rows}]"


def _rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(exact)), 1.0)
    return float(np.linalg.norm(approx - exact)) / scale


def grad_check(problem: BilevelProblem, agent: int, x: np.ndarray, y: np.ndarray,
               tol: float = 1e-5, h: float = 1e-6) -> GradCheckReport:
    """Compare every smooth gradient oracle against central differences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    report = GradCheckReport(agent=agent, tol=tol)

    pairs = [
        ("grad_G_x", problem.grad_G_x(agent, x, y),
         finite_diff_grad(lambda z: problem.eval_G(agent, z, y), x, h)),
        ("grad_G_y", problem.grad_G_y(agent, x, y),
         finite_diff_grad(lambda z: problem.eval_G(agent, x, z), y, h)),
        ("grad_g_x", problem.grad_g_x(agent, x, y),
         finite_diff_grad(lambda z: problem.eval_g(agent, z, y), x, h)),
        ("grad_g_y", problem.grad_g_y(agent, x, y),
         finite_diff_grad(lambda z: problem.eval_g(agent, x, z), y, h)),
    ]
    for name, analytic, fd in pairs:
        report.errors[name] = _rel_err(np.asarray(analytic), fd)
    return report
