"""Asynchrony model: per-iteration active sets, virtual step sizes, and
simulated round timing for the sync/async comparison.

Activation is Bernoulli per agent unless a delay model drives it; either way
an agent that has missed tau-1 consecutive iterations is force-included, so
the staleness bound holds by construction rather than by assumption.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class ActiveSet:
    """Agents performing the gradient work of one iteration."""

    t: int
    members: np.ndarray  # sorted agent indices

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=np.int64)
        if self.members.size == 0:
            raise InvalidArgumentError("active set must be non-empty")

    def mask(self, N: int) -> np.ndarray:
        m = np.zeros(N, dtype=bool)
        m[self.members] = True
        return m

    def __contains__(self, i: int) -> bool:
        return bool(np.isin(i, self.members))


@dataclass
class ActivationSchedule:
    """Activation probabilities plus the consecutive-miss bookkeeping."""

    p: np.ndarray  # per-agent activation probability in (0, 1]
    tau: int  # staleness bound, >= 1
    miss_count: np.ndarray = field(default=None)

    def __post_init__(self):
        self.p = np.atleast_1d(np.asarray(self.p, dtype=np.float64))
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise InvalidArgumentError("activation probabilities must lie in (0, 1]")
        if self.tau < 1:
            raise InvalidArgumentError(f"staleness bound must be >= 1, got {self.tau}")
        if self.miss_count is None:
            self.miss_count = np.zeros(self.p.size, dtype=np.int64)

    @property
    def N(self) -> int:
        return self.p.size


def draw_active_set(sched: ActivationSchedule, t: int, rng: np.random.Generator,
                    eligible: np.ndarray | None = None) -> ActiveSet:
    """Draw the active set for iteration t and update miss counters.

    eligible, when given (delay-driven runs), replaces the Bernoulli draw as
    the base membership; tau enforcement and the non-empty fallback still
    apply on top of it.
    """
    N = sched.N
    if eligible is None:
        included = rng.random(N) < sched.p
    else:
        included = np.asarray(eligible, dtype=bool).copy()
        if included.shape != (N,):
            raise InvalidArgumentError("eligible mask must have one entry per agent")

    # agents one miss away from violating the staleness bound are forced in
    included |= sched.miss_count >= sched.tau - 1
    if not included.any():
        included[0] = True

    sched.miss_count[included] = 0
    sched.miss_count[~included] += 1
    return ActiveSet(t=t, members=np.flatnonzero(included))


def effective_step(eta_base: float, p_i: float) -> float:
    """Step size whose activation-weighted expectation equals eta_base."""
    if p_i <= 0 or p_i > 1:
        raise InvalidArgumentError(f"activation probability must be in (0, 1], got {p_i}")
    if eta_base <= 0:
        raise InvalidArgumentError(f"base step must be > 0, got {eta_base}")
    return eta_base / p_i


@dataclass
class DelayModel:
    """Per-agent iteration-duration distributions with optional stragglers.

    Durations are compute + communication, both lognormal-jittered around the
    configured means.  Each iteration, straggler_count agents drawn uniformly
    have their duration multiplied by straggler_multiplier.
    """

    compute_mean: np.ndarray  # per agent
    compute_jitter: float
    comm_mean: float
    comm_jitter: float
    round_length: float
    straggler_count: int = 0
    straggler_multiplier: float = 1.0

    def __post_init__(self):
        self.compute_mean = np.atleast_1d(np.asarray(self.compute_mean, dtype=np.float64))
        if np.any(self.compute_mean <= 0) or self.comm_mean <= 0:
            raise InvalidArgumentError("delay means must be > 0")
        if self.compute_jitter < 0 or self.comm_jitter < 0:
            raise InvalidArgumentError("jitter must be >= 0")
        if self.round_length <= 0:
            raise InvalidArgumentError("round_length must be > 0")
        if not (0 <= self.straggler_count < self.compute_mean.size):
            raise InvalidArgumentError("straggler count must be in [0, N)")
        if self.straggler_multiplier < 1.0:
            raise InvalidArgumentError("straggler multiplier must be >= 1")

    @property
    def N(self) -> int:
        return self.compute_mean.size

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One iteration's per-agent durations."""
        compute = self.compute_mean * np.exp(self.compute_jitter * rng.standard_normal(self.N))
        comm = self.comm_mean * np.exp(self.comm_jitter * rng.standard_normal(self.N))
        delays = compute + comm
        if self.straggler_count > 0:
            slow = rng.choice(self.N, size=self.straggler_count, replace=False)
            delays[slow] *= self.straggler_multiplier
        return delays

    def estimate_activation_probs(self, rng: np.random.Generator, samples: int = 20_000) -> np.ndarray:
        """Monte-Carlo estimate of P(duration_i <= round_length)."""
        hits = np.zeros(self.N, dtype=np.int64)
        for _ in range(samples):
            hits += self.sample(rng) <= self.round_length
        p = hits / samples
        return np.clip(p, 1.0 / samples, 1.0)


def simulate_round_time(delays: np.ndarray, mode: str,
                        round_length: float | None = None) -> tuple[float, np.ndarray]:
    """Duration of one round and the set of agents that finished in time.

    sync waits for everyone; async closes the round at round_length and keeps
    whoever finished.
    """
    delays = np.asarray(delays, dtype=np.float64)
    if np.any(delays <= 0):
        raise InvalidArgumentError("delays must be > 0")
    if mode == "sync":
        return float(delays.max()), np.arange(delays.size)
    if mode == "async":
        if round_length is None or round_length <= 0:
            raise InvalidArgumentError("async mode needs round_length > 0")
        return float(round_length), np.flatnonzero(delays <= round_length)
    raise InvalidArgumentError(f"unknown mode {mode!r}")
