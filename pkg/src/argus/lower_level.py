"""Decentralized estimation of the lower-level solution.

K rounds of proximal primal steps on the linearized augmented Lagrangian of
the lower problem, interleaved with dual ascent on the consensus multipliers.
The Taylor anchor is pinned to the current upper iterate, which makes the
linearized gradient coincide with the true lower gradient at that point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BilevelProblem
from .errors import DivergenceError, StalenessError
from .network import MixingMatrix

Pair = tuple[int, int]


@dataclass
class LowerLevelState:
    """Inner-loop iterates: per-agent y', consensus duals phi keyed by ordered
    neighbor pair, and the frozen anchor for the Taylor linearization."""

    y_prime: np.ndarray  # (N, m)
    phi: dict[Pair, np.ndarray]
    anchor_x: np.ndarray  # (N, n)
    neighbors: list[np.ndarray]  # per agent, including self
    k: int = 0

    def phi_at(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        if key not in self.phi:
            raise StalenessError(f"missing dual value for pair {key}")
        return self.phi[key]


def init_state(y0: np.ndarray, x: np.ndarray, W: np.ndarray) -> LowerLevelState:
    """Fresh inner state: y' starts at the current lower block, duals at zero."""
    N, m = y0.shape
    neighbors = [np.flatnonzero(W[i] > 0) for i in range(N)]
    phi: dict[Pair, np.ndarray] = {}
    for i in range(N):
        for j in neighbors[i]:
            if j != i:
                phi[(i, int(j))] = np.zeros(m)
    return LowerLevelState(y_prime=y0.copy(), phi=phi, anchor_x=x.copy(), neighbors=neighbors)


def lower_grad_y(problem: BilevelProblem, state: LowerLevelState, i: int, mu: float) -> np.ndarray:
    """Gradient of the augmented Lagrangian's smooth part in agent i's y'.

    With the anchor at the current x, the linearized local term contributes
    exactly grad_g_y; the dual and penalty terms come in antisymmetric pairs,
    which doubles the penalty coefficient.
    """
    x_i = state.anchor_x[i]
    y_i = state.y_prime[i]
    grad = problem.grad_g_y(i, x_i, y_i).astype(np.float64, copy=True)
    for j in state.neighbors[i]:
        j = int(j)
        if j == i:
            continue
        grad += state.phi_at(i, j) - state.phi_at(j, i)
        grad += 2.0 * mu * (y_i - state.y_prime[j])
    return grad


def estimate_lower_solution(problem: BilevelProblem, x: np.ndarray, W: MixingMatrix | np.ndarray,
                            K: int, eta_y_ll: float, eta_phi: float, mu: float,
                            y0: np.ndarray | None = None) -> np.ndarray:
    """Run K communication rounds and return the resulting lower-block estimate.

    Each round: every agent mixes neighbor y' values, takes a proximal step
    against the smooth gradient, then every ordered pair updates its dual by
    the consensus residual.  Barrier semantics: all reads see round-k values.
    """
    Wm = W.W if isinstance(W, MixingMatrix) else np.asarray(W, dtype=np.float64)
    if K < 1:
        raise ValueError(f"need at least one round, got K={K}")
    if eta_y_ll <= 0 or eta_phi <= 0:
        raise ValueError("lower-level step sizes must be > 0")
    if y0 is None:
        y0 = np.zeros((Wm.shape[0], problem.dims.m))
    state = init_state(np.asarray(y0, dtype=np.float64), np.asarray(x, dtype=np.float64), Wm)

    N = state.y_prime.shape[0]
    for k in range(K):
        mixed = Wm @ state.y_prime
        new_y = np.empty_like(state.y_prime)
        for i in range(N):
            step = mixed[i] - eta_y_ll * lower_grad_y(problem, state, i, mu)
            new_y[i] = problem.prox_r(step, eta_y_ll)
        if not np.all(np.isfinite(new_y)):
            raise DivergenceError(f"lower-level estimate diverged at round {k + 1}", iteration=k + 1)
        state.y_prime = new_y
        for (i, j) in state.phi:
            state.phi[(i, j)] = state.phi[(i, j)] + eta_phi * (state.y_prime[i] - state.y_prime[j])
        state.k = k + 1
    return state.y_prime
