"""Convergence diagnostics and cost accounting.

All quantities are computed with simulator-level (omniscient) access to the
global state at the end of an iteration: the stationary gap stacks the
averaged primal gradients, the per-plane constraint slacks, and the pairwise
consensus residuals; the composite metric adds the weighted consensus error.
Cost counters accumulate the closed-form per-iteration communication bits and
FLOP estimates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import BilevelProblem
from .cutting_planes import CuttingPlane

CSV_COLUMNS = [
    "t", "psi", "gap_sq", "consensus", "upper_loss", "lower_loss",
    "task_metric", "active_count", "avg_cuts", "comm_bits_cum",
    "flops_cum", "virtual_time",
]


@dataclass
class MetricsRecord:
    t: int
    psi: float
    gap_sq: float
    consensus: float
    upper_loss: float
    lower_loss: float
    task_metric: float
    active_count: int
    avg_cuts: float
    comm_bits_cum: float
    flops_cum: float
    virtual_time: float

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class CostCounters:
    """Cumulative communication bits and FLOPs, with per-iteration traces kept
    for verification against the closed forms."""

    comm_bits_cum: float = 0.0
    flops_cum: float = 0.0
    d_t: list[float] = field(default_factory=list)
    c1_trace: list[float] = field(default_factory=list)
    c2_trace: list[float] = field(default_factory=list)  # zero off cut epochs


def prox_grad_mapping(a: np.ndarray, b: np.ndarray, eta: float,
                      prox: Callable[[np.ndarray, float], np.ndarray] | None = None) -> np.ndarray:
    """Generalized gradient (1/eta) * (a - prox(a - eta*b, eta)).

    eta = 0 (an inactive agent's virtual rate) degenerates to plain b, the
    correct limit when the non-smooth term is absent.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if eta == 0.0:
        return b.copy()
    if prox is None:
        prox = lambda v, s: v
    return (a - prox(a - eta * b, eta)) / eta


def consensus_error(x_block: np.ndarray, y_block: np.ndarray) -> float:
    """Sum of squared deviations of both blocks from their agent means."""
    xc = x_block - x_block.mean(axis=0, keepdims=True)
    yc = y_block - y_block.mean(axis=0, keepdims=True)
    return float((xc * xc).sum() + (yc * yc).sum())


def stationary_gap(problem: BilevelProblem,
                   x_block: np.ndarray, y_block: np.ndarray,
                   lam_lists: list[list[float]],
                   theta_dicts: list[dict[int, np.ndarray]],
                   planes_lists: list[list[CuttingPlane]],
                   adjacency: np.ndarray,
                   eta_virtual: float) -> float:
    """Squared norm of the stacked stationarity residual.

    Blocks: per-agent proximal gradient mapping of the agent-averaged upper
    gradient, the agent-averaged lower gradient, every plane's constraint
    slack, and every ordered neighbor pair's primal disagreement.  The
    unregularized Lagrangian is used throughout.
    """
    N = x_block.shape[0]
    x_map = {i: x_block[i] for i in range(N)}
    y_map = {i: y_block[i] for i in range(N)}

    gx_sum = np.zeros(x_block.shape[1])
    gy_sum = np.zeros(y_block.shape[1])
    for i in range(N):
        gx = problem.grad_G_x(i, x_block[i], y_block[i]).astype(np.float64, copy=True)
        gy = problem.grad_G_y(i, x_block[i], y_block[i]).astype(np.float64, copy=True)
        for lam, plane in zip(lam_lists[i], planes_lists[i]):
            gx += lam * plane.a[i]
            gy += lam * plane.b[i]
        for j in np.flatnonzero(adjacency[i]):
            j = int(j)
            if j == i:
                continue
            theta_ij = theta_dicts[i].get(j)
            if theta_ij is not None:
                gx += theta_ij
        gx_sum += gx
        gy_sum += gy
    gx_bar = gx_sum / N
    gy_bar = gy_sum / N

    total = 0.0
    for i in range(N):
        p_i = prox_grad_mapping(x_block[i], gx_bar, eta_virtual, prox=problem.prox_R)
        total += float(p_i @ p_i)
    total += float(gy_bar @ gy_bar)

    for i in range(N):
        for plane in planes_lists[i]:
            s = plane.slack(x_map, y_map)
            total += s * s

    for i in range(N):
        for j in np.flatnonzero(adjacency[i]):
            j = int(j)
            if j == i:
                continue
            diff = x_block[i] - x_block[j]
            total += float(diff @ diff)
    return total


def psi_metric(gap_sq: float, consensus: float, L_est: float) -> float:
    return gap_sq + L_est * L_est * consensus


def losses(problem: BilevelProblem, x_block: np.ndarray, y_block: np.ndarray) -> tuple[float, float]:
    """(sum of upper objectives, sum of lower objectives) including the
    non-smooth terms."""
    upper = 0.0
    lower = 0.0
    for i in range(x_block.shape[0]):
        upper += problem.eval_G(i, x_block[i], y_block[i]) + problem.eval_R(x_block[i])
        lower += problem.eval_g(i, x_block[i], y_block[i]) + problem.eval_r(y_block[i])
    return float(upper), float(lower)


def comm_bits_iteration(d_t: float, N: int, n: int, m: int,
                        p: np.ndarray, plane_counts: list[int]) -> float:
    """Bits exchanged by the per-iteration primal/dual broadcasts."""
    inner = N * (m + n) + float(sum(p_i * (cnt + n * d_t) for p_i, cnt in zip(p, plane_counts)))
    return 32.0 * d_t * inner


def comm_bits_cut_epoch(d_t: float, N: int, n: int, m: int, K: int) -> float:
    """Bits exchanged by one periodic cutting-plane refresh."""
    return 32.0 * N * d_t * (K * (m + m * d_t) + (d_t * (n + m) + 1.0))


def flops_iteration(d_t: float, N: int, n: int, m: int, mean_planes: float) -> float:
    """Per-iteration FLOP estimate with unit constants."""
    return N * mean_planes ** 2 * d_t * (n + m) + N * d_t ** 2 * n


def flops_cut_epoch(d_t: float, N: int, n: int, m: int, K: int) -> float:
    return N * d_t * (n + m) + N * m * K


def average_degree(W: np.ndarray) -> float:
    """Mean row support of the mixing matrix (self-loops included)."""
    return float((W > 0).sum()) / W.shape[0]


def cost_update(counters: CostCounters, d_t: float, N: int, n: int, m: int,
                p: np.ndarray, plane_counts: list[int], K: int,
                cut_epoch: bool) -> CostCounters:
    """Accumulate one iteration's communication and computation costs."""
    c1 = comm_bits_iteration(d_t, N, n, m, p, plane_counts)
    c2 = comm_bits_cut_epoch(d_t, N, n, m, K) if cut_epoch else 0.0
    mean_planes = float(np.mean(plane_counts)) if plane_counts else 0.0
    f1 = flops_iteration(d_t, N, n, m, mean_planes)
    f2 = flops_cut_epoch(d_t, N, n, m, K) if cut_epoch else 0.0

    counters.comm_bits_cum += c1 + c2
    counters.flops_cum += f1 + f2
    counters.d_t.append(d_t)
    counters.c1_trace.append(c1)
    counters.c2_trace.append(c2)
    return counters


def format_csv(records: list[MetricsRecord]) -> str:
    """Render the trace with a stable header and repr-exact floats."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        cells = []
        for value in rec.row():
            cells.append(repr(value) if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
