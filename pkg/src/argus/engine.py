"""The iteration loop: gossip mixing, asynchronous proximal primal updates,
regularized dual ascent, and the periodic cutting-plane refresh.

Communication is modeled as cache writes at phase boundaries; asynchrony only
decides which agents do gradient work and which snapshot they read.  Every
active agent evaluates its primal gradients at the state frozen when it was
last active, updates against the freshly mixed values, then refreshes its
snapshot at the end of the iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import metrics as met
from .core import BilevelProblem
from .cutting_planes import (CuttingPlane, Polytope, build_cut, eval_h_blocks,
                             maintain_polytope)
from .errors import (DivergenceError, InvalidArgumentError, NumericError,
                     StalenessError)
from .lower_level import estimate_lower_solution
from .network import MixingMatrix, Topology, metropolis_weights, sample_er_topology
from .scheduler import (ActivationSchedule, DelayModel, draw_active_set,
                        effective_step, simulate_round_time)

MODE_ASYNC = "argus"
MODE_SYNC = "argus-s"


@dataclass
class HyperParams:
    eta_x: float = 0.05
    eta_y: float = 0.05
    eta_lambda: float = 0.05
    eta_theta: float = 0.05
    eta_y_ll: float = 0.1
    eta_phi: float = 0.05
    mu: float = 0.5
    lambda1: float = 1.0
    epsilon: float = 0.05
    iota: int = 5
    T1: int = 250
    K: int = 1
    M: int = 10
    T: int = 500
    L_est: float = 1.0
    fd_step: float = 1e-6

    def __post_init__(self):
        for name in ("eta_x", "eta_y", "eta_lambda", "eta_theta", "eta_y_ll", "eta_phi"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.epsilon <= 0:
            raise InvalidArgumentError("epsilon must be > 0")
        if self.iota < 1:
            raise InvalidArgumentError("cut period iota must be >= 1")
        if self.M < 1:
            raise InvalidArgumentError("polytope cap M must be >= 1")
        if self.K < 1:
            raise InvalidArgumentError("lower-level rounds K must be >= 1")
        if self.T < 0:
            raise InvalidArgumentError("iteration count T must be >= 0")
        if self.T1 > self.T:
            raise InvalidArgumentError("last cut iteration T1 must be <= T")
        if self.mu <= 0:
            raise InvalidArgumentError("penalty mu must be > 0")
        if self.lambda1 < 0:
            raise InvalidArgumentError("h weight lambda1 must be >= 0")


@dataclass
class Snapshot:
    """Everything an agent's stale gradient evaluation reads."""

    x: np.ndarray
    y: np.ndarray
    lam: list[float]
    theta: dict[int, np.ndarray]
    planes: list[CuttingPlane]
    nbr_x: dict[int, np.ndarray]
    nbr_y: dict[int, np.ndarray]


@dataclass
class LagrangianPoint:
    """Explicit evaluation point for the per-agent Lagrangian term."""

    agent: int
    x_own: np.ndarray
    y_own: np.ndarray
    lam: list[float]
    theta: dict[int, np.ndarray]
    planes: list[CuttingPlane]
    x_others: dict[int, np.ndarray]
    y_others: dict[int, np.ndarray]

    def x_map(self) -> dict[int, np.ndarray]:
        m = dict(self.x_others)
        m[self.agent] = self.x_own
        return m

    def y_map(self) -> dict[int, np.ndarray]:
        m = dict(self.y_others)
        m[self.agent] = self.y_own
        return m


@dataclass
class AgentState:
    x: np.ndarray
    y: np.ndarray
    lam: list[float]
    theta: dict[int, np.ndarray]
    polytope: Polytope
    cache_x: dict[int, np.ndarray]
    cache_y: dict[int, np.ndarray]
    cache_lam: dict[int, list[float]]
    cache_theta: dict[int, dict]
    cache_polytope: dict[int, Polytope]
    mixed_x: np.ndarray = None
    mixed_y: np.ndarray = None
    t_hat: int = 0
    snapshot: Snapshot = None


@dataclass
class RunResult:
    records: list[met.MetricsRecord]
    counters: met.CostCounters
    agents: list[AgentState]
    config_echo: dict[str, Any]
    seed: int

    @property
    def final_record(self) -> met.MetricsRecord | None:
        return self.records[-1] if self.records else None


def regularization_coeffs(t: int, eta_lambda: float, eta_theta: float) -> tuple[float, float]:
    """Non-increasing dual regularization weights 1 / (eta * sqrt(t+1))."""
    if t < 0:
        raise InvalidArgumentError(f"iteration index must be >= 0, got {t}")
    root = math.sqrt(t + 1.0)
    return 1.0 / (eta_lambda * root), 1.0 / (eta_theta * root)


def mix_neighbors(W_row: np.ndarray, cache_x: dict[int, np.ndarray],
                  cache_y: dict[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Weighted aggregation of cached neighbor values for one agent."""
    d = None
    u = None
    for j in np.flatnonzero(W_row > 0):
        j = int(j)
        if j not in cache_x or j not in cache_y:
            raise StalenessError(f"no cached value for neighbor {j} with positive weight")
        w = W_row[j]
        d = w * cache_x[j] if d is None else d + w * cache_x[j]
        u = w * cache_y[j] if u is None else u + w * cache_y[j]
    return d, u


def local_lagrangian_value(problem: BilevelProblem, point: LagrangianPoint,
                           c1_t: float, c2_t: float) -> float:
    """Scalar value of the regularized per-agent Lagrangian term at the point."""
    x_map, y_map = point.x_map(), point.y_map()
    val = problem.eval_G(point.agent, point.x_own, point.y_own)
    for lam, plane in zip(point.lam, point.planes):
        val += lam * plane.slack(x_map, y_map)
        val -= 0.5 * c1_t * lam * lam
    for j, theta in point.theta.items():
        val += float(theta @ (point.x_own - point.x_others[j]))
        val -= 0.5 * c2_t * float(theta @ theta)
    return float(val)


def local_lagrangian_grads(problem: BilevelProblem, point: LagrangianPoint,
                           c1_t: float, c2_t: float
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[int, np.ndarray]]:
    """Analytic partials of the regularized per-agent Lagrangian term."""
    if len(point.lam) != len(point.planes):
        raise StalenessError("multiplier list misaligned with plane list")
    i = point.agent
    g_x = problem.grad_G_x(i, point.x_own, point.y_own).astype(np.float64, copy=True)
    g_y = problem.grad_G_y(i, point.x_own, point.y_own).astype(np.float64, copy=True)
    x_map, y_map = point.x_map(), point.y_map()

    g_lam = np.empty(len(point.planes))
    for l, (lam, plane) in enumerate(zip(point.lam, point.planes)):
        g_x += lam * plane.a[i]
        g_y += lam * plane.b[i]
        g_lam[l] = plane.slack(x_map, y_map) - c1_t * lam

    g_theta: dict[int, np.ndarray] = {}
    for j, theta in point.theta.items():
        g_x += theta
        g_theta[j] = (point.x_own - point.x_others[j]) - c2_t * theta
    return g_x, g_y, g_lam, g_theta


def primal_step(problem: BilevelProblem, d_i: np.ndarray, u_i: np.ndarray,
                g_x: np.ndarray, g_y: np.ndarray,
                eta_x: float, eta_y: float) -> tuple[np.ndarray, np.ndarray]:
    """Proximal step on the upper block, plain step on the lower block."""
    x_new = problem.prox_R(d_i - eta_x * g_x, eta_x)
    y_new = u_i - eta_y * g_y
    return x_new, y_new


def dual_step(lam: list[float], theta: dict[int, np.ndarray],
              g_lam: np.ndarray, g_theta: dict[int, np.ndarray],
              eta_lambda: float, eta_theta: float
              ) -> tuple[list[float], dict[int, np.ndarray]]:
    """Projected ascent on the plane multipliers, plain ascent on the
    consensus duals."""
    lam_new = [max(0.0, v + eta_lambda * g) for v, g in zip(lam, g_lam)]
    theta_new = dict(theta)
    for j, g in g_theta.items():
        theta_new[j] = theta.get(j, np.zeros_like(g)) + eta_theta * g
    return lam_new, theta_new


class Engine:
    """Owns the global simulation state and advances it one iteration at a
    time.  Deterministic given the seed: randomness is split into fixed
    substreams (data is reserved for problem generation outside the engine)."""

    def __init__(self, problem: BilevelProblem, hyper: HyperParams, *,
                 mode: str = MODE_ASYNC, seed: int = 0,
                 p_c: float = 0.5, static_topology: bool = False,
                 p_active: float | np.ndarray = 1.0, tau: int = 20,
                 delay_model: DelayModel | None = None,
                 stop_tol: float | None = None,
                 dump_topology: bool = False, dump_cuts: bool = False):
        if mode not in (MODE_ASYNC, MODE_SYNC):
            raise InvalidArgumentError(f"mode must be {MODE_ASYNC!r} or {MODE_SYNC!r}")
        self.problem = problem
        self.h = hyper
        self.mode = mode
        self.seed = seed
        self.p_c = p_c
        self.static_topology = static_topology
        self.delay_model = delay_model
        self.stop_tol = stop_tol

        N = problem.dims.N
        root = np.random.SeedSequence(seed)
        kids = root.spawn(5)  # data (reserved), topology, activation, delays, estimation
        self.rng_topology = np.random.default_rng(kids[1])
        self.rng_activation = np.random.default_rng(kids[2])
        self.rng_delays = np.random.default_rng(kids[3])
        self.rng_estimation = np.random.default_rng(kids[4])

        if delay_model is not None and mode == MODE_ASYNC:
            p = delay_model.estimate_activation_probs(self.rng_estimation)
        else:
            p = np.broadcast_to(np.asarray(p_active, dtype=np.float64), (N,)).copy()
        if mode == MODE_SYNC:
            p = np.ones(N)
        self.schedule = ActivationSchedule(p=p, tau=tau)

        x0, y0 = problem.initial_blocks()
        self.agents = self._init_agents(np.asarray(x0, dtype=np.float64),
                                        np.asarray(y0, dtype=np.float64))
        self._static_topo: Topology | None = None
        self._plane_seq = 0
        self.records: list[met.MetricsRecord] = []
        self.counters = met.CostCounters()
        self.virtual_time = 0.0
        self.activation_log: list[np.ndarray] = []
        self.topology_lines: list[str] = [] if dump_topology else None
        self.cut_rows: list[str] = [] if dump_cuts else None

    # ------------------------------------------------------------------ setup

    def _init_agents(self, x0: np.ndarray, y0: np.ndarray) -> list[AgentState]:
        N = self.problem.dims.N
        agents = []
        for i in range(N):
            cache_x = {j: x0[j].copy() for j in range(N)}  # t=0 broadcast seeds all peers
            cache_y = {j: y0[j].copy() for j in range(N)}
            snap = Snapshot(x=x0[i].copy(), y=y0[i].copy(), lam=[], theta={}, planes=[],
                            nbr_x={j: x0[j].copy() for j in range(N)},
                            nbr_y={j: y0[j].copy() for j in range(N)})
            agents.append(AgentState(
                x=x0[i].copy(), y=y0[i].copy(), lam=[], theta={},
                polytope=Polytope(owner=i, cap=self.h.M),
                cache_x=cache_x, cache_y=cache_y,
                cache_lam={}, cache_theta={}, cache_polytope={},
                mixed_x=x0[i].copy(), mixed_y=y0[i].copy(),
                t_hat=0, snapshot=snap))
        return agents

    def _next_plane_id(self) -> int:
        self._plane_seq += 1
        return self._plane_seq

    def _topology(self, t_next: int) -> Topology:
        if self.problem.dims.N == 1:
            return Topology(N=1, adjacency=np.ones((1, 1), dtype=bool), t=t_next)
        if self.static_topology:
            if self._static_topo is None:
                self._static_topo = sample_er_topology(
                    self.problem.dims.N, self.p_c, self.rng_topology, t=0)
            return Topology(N=self._static_topo.N,
                            adjacency=self._static_topo.adjacency, t=t_next)
        return sample_er_topology(self.problem.dims.N, self.p_c, self.rng_topology, t=t_next)

    # ------------------------------------------------------------- iteration

    def run_iteration(self, t: int) -> met.MetricsRecord:
        h = self.h
        N = self.problem.dims.N
        topo = self._topology(t + 1)
        mix = metropolis_weights(topo)
        W = mix.W

        # timing and the active set
        if self.delay_model is not None:
            delays = self.delay_model.sample(self.rng_delays)
            if self.mode == MODE_SYNC:
                duration, _ = simulate_round_time(delays, "sync")
                eligible = np.ones(N, dtype=bool)
            else:
                duration, done = simulate_round_time(
                    delays, "async", self.delay_model.round_length)
                eligible = np.zeros(N, dtype=bool)
                eligible[done] = True
            active = draw_active_set(self.schedule, t + 1, self.rng_activation, eligible=eligible)
        else:
            duration = 1.0
            if self.mode == MODE_SYNC:
                active = draw_active_set(self.schedule, t + 1, self.rng_activation,
                                         eligible=np.ones(N, dtype=bool))
            else:
                active = draw_active_set(self.schedule, t + 1, self.rng_activation)
        active_mask = active.mask(N)
        self.activation_log.append(active_mask)

        c1_t, c2_t = regularization_coeffs(t, h.eta_lambda, h.eta_theta)
        plane_counts_pre = [len(a.polytope) for a in self.agents]

        # phase 1: mixing + primal updates (reads are phase-start caches)
        new_x = np.empty((N, self.problem.dims.n))
        new_y = np.empty((N, self.problem.dims.m))
        for i, agent in enumerate(self.agents):
            d_i, u_i = mix_neighbors(W[i], agent.cache_x, agent.cache_y)
            agent.mixed_x, agent.mixed_y = d_i, u_i
            if active_mask[i]:
                snap = agent.snapshot
                point = LagrangianPoint(
                    agent=i, x_own=snap.x, y_own=snap.y, lam=snap.lam,
                    theta=snap.theta, planes=snap.planes,
                    x_others=snap.nbr_x, y_others=snap.nbr_y)
                g_x, g_y, _, _ = local_lagrangian_grads(self.problem, point, c1_t, c2_t)
                p_i = self.schedule.p[i]
                new_x[i], new_y[i] = primal_step(
                    self.problem, d_i, u_i, g_x, g_y,
                    effective_step(h.eta_x, p_i), effective_step(h.eta_y, p_i))
            else:
                new_x[i], new_y[i] = d_i, u_i
            if not (np.all(np.isfinite(new_x[i])) and np.all(np.isfinite(new_y[i]))):
                raise DivergenceError(
                    f"primal iterate diverged at iteration {t + 1}, agent {i}",
                    iteration=t + 1, agent=i)

        for i, agent in enumerate(self.agents):
            agent.x, agent.y = new_x[i], new_y[i]
        self._broadcast_primal(topo)

        # phase 2: dual ascent for active agents (fresh primal, stale duals)
        lam_before = [list(a.lam) for a in self.agents]
        for i, agent in enumerate(self.agents):
            if not active_mask[i]:
                continue
            snap = agent.snapshot
            stale_lam_by_id = {pl.id: v for pl, v in zip(snap.planes, snap.lam)}
            stale_lam = [stale_lam_by_id.get(pl.id, 0.0) for pl in agent.polytope.planes]
            stale_theta = {int(j): snap.theta.get(int(j), np.zeros(self.problem.dims.n))
                           for j in topo.neighbors(i) if int(j) != i}
            point = LagrangianPoint(
                agent=i, x_own=agent.x, y_own=agent.y, lam=stale_lam,
                theta=stale_theta, planes=agent.polytope.planes,
                x_others=agent.cache_x, y_others=agent.cache_y)
            _, _, g_lam, g_theta = local_lagrangian_grads(self.problem, point, c1_t, c2_t)
            p_i = self.schedule.p[i]
            agent.lam, agent.theta = dual_step(
                agent.lam, agent.theta, g_lam, g_theta,
                effective_step(h.eta_lambda, p_i), effective_step(h.eta_theta, p_i))
        self._broadcast_duals(topo)

        # phase 3: periodic cutting-plane refresh
        cut_epoch = (t + 1) % h.iota == 0 and t < h.T1
        if cut_epoch:
            try:
                self._cut_refresh(t + 1, topo, mix, lam_before)
            except NumericError as exc:
                raise DivergenceError(
                    f"cut refresh hit non-finite values at iteration {t + 1}: {exc}",
                    iteration=t + 1) from exc

        # snapshots for agents that did gradient work this iteration
        for i, agent in enumerate(self.agents):
            if active_mask[i]:
                agent.t_hat = t + 1
                agent.snapshot = Snapshot(
                    x=agent.x.copy(), y=agent.y.copy(), lam=list(agent.lam),
                    theta={j: v.copy() for j, v in agent.theta.items()},
                    planes=list(agent.polytope.planes),
                    nbr_x={j: v.copy() for j, v in agent.cache_x.items()},
                    nbr_y={j: v.copy() for j, v in agent.cache_y.items()})

        if self.topology_lines is not None:
            for (a, b) in topo.edges():
                self.topology_lines.append(f"{t + 1},{a},{b}")

        self.virtual_time += duration
        return self._record(t + 1, topo, W, active_mask, plane_counts_pre, cut_epoch)

    # ------------------------------------------------------------ broadcast

    def _broadcast_primal(self, topo: Topology) -> None:
        for i, agent in enumerate(self.agents):
            for j in topo.neighbors(i):
                j = int(j)
                self.agents[j].cache_x[i] = agent.x.copy()
                self.agents[j].cache_y[i] = agent.y.copy()

    def _broadcast_duals(self, topo: Topology) -> None:
        for i, agent in enumerate(self.agents):
            for j in topo.neighbors(i):
                j = int(j)
                if j == i:
                    continue
                self.agents[j].cache_lam[i] = list(agent.lam)
                self.agents[j].cache_theta[i] = {k: v.copy() for k, v in agent.theta.items()}

    def _broadcast_polytopes(self, topo: Topology) -> None:
        for i, agent in enumerate(self.agents):
            for j in topo.neighbors(i):
                j = int(j)
                if j == i:
                    continue
                self.agents[j].cache_polytope[i] = agent.polytope
                self.agents[j].cache_lam[i] = list(agent.lam)

    # ------------------------------------------------------------ cut epoch

    def _make_y_star_fn(self, nbr_ids: list[int], x_point: dict[int, np.ndarray],
                        x_block: np.ndarray, y_block: np.ndarray, W: np.ndarray):
        """Lower-solution map for finite differencing a cut's x coefficients.

        For a single estimation round the map is block-separable in x, so only
        blocks whose x array was actually replaced (identity check against the
        generating point) are recomputed; deeper pipelines rerun the full
        estimator.
        """
        h = self.h
        if h.K == 1:
            mixed = W @ y_block
            N = y_block.shape[0]
            cons = np.zeros_like(y_block)
            for i in range(N):
                for j in np.flatnonzero(W[i] > 0):
                    j = int(j)
                    if j != i:
                        cons[i] += 2.0 * h.mu * (y_block[i] - y_block[j])

            def solve_one(j: int, xj: np.ndarray) -> np.ndarray:
                step = mixed[j] - h.eta_y_ll * (
                    self.problem.grad_g_y(j, xj, y_block[j]) + cons[j])
                return self.problem.prox_r(step, h.eta_y_ll)

            base = {j: solve_one(j, x_point[j]) for j in nbr_ids}

            def y_star_fn(x_probe: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
                return {j: base[j] if x_probe[j] is x_point[j] else solve_one(j, x_probe[j])
                        for j in nbr_ids}
        else:
            def y_star_fn(x_probe: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
                x_mod = x_block.copy()
                for j, xj in x_probe.items():
                    x_mod[j] = xj
                ys = estimate_lower_solution(self.problem, x_mod, W, h.K,
                                             h.eta_y_ll, h.eta_phi, h.mu, y0=y_block)
                return {j: ys[j] for j in nbr_ids}
        return y_star_fn

    def _cut_refresh(self, t_next: int, topo: Topology, mix: MixingMatrix,
                     lam_before: list[list[float]]) -> None:
        h = self.h
        x_block = np.stack([a.x for a in self.agents])
        y_block = np.stack([a.y for a in self.agents])
        y_star = estimate_lower_solution(self.problem, x_block, mix, h.K,
                                         h.eta_y_ll, h.eta_phi, h.mu, y0=y_block)
        for i, agent in enumerate(self.agents):
            nbr_ids = [int(j) for j in topo.neighbors(i)]
            x_blocks = {j: agent.cache_x[j] for j in nbr_ids}
            y_blocks = {j: agent.cache_y[j] for j in nbr_ids}
            ys_blocks = {j: y_star[j] for j in nbr_ids}
            candidate = None
            if eval_h_blocks(y_blocks, ys_blocks, h.lambda1) > h.epsilon:
                candidate = build_cut(
                    x_blocks, y_blocks, ys_blocks, h.lambda1, h.epsilon,
                    owner=i, created_t=t_next, plane_id=self._next_plane_id(),
                    y_star_fn=self._make_y_star_fn(nbr_ids, x_blocks, x_block, y_block, mix.W),
                    fd_step=h.fd_step)
            agent.polytope, agent.lam = maintain_polytope(
                agent.polytope, agent.lam, lam_before[i], candidate)
            if self.cut_rows is not None:
                for plane in agent.polytope.planes:
                    na, nb = plane.norms()
                    self.cut_rows.append(
                        f"{t_next},{i},{plane.id},{plane.c!r},{na!r},{nb!r}")
        self._broadcast_polytopes(topo)

    # -------------------------------------------------------------- metrics

    def _record(self, t_next: int, topo: Topology, W: np.ndarray,
                active_mask: np.ndarray, plane_counts_pre: list[int],
                cut_epoch: bool) -> met.MetricsRecord:
        h = self.h
        dims = self.problem.dims
        x_block = np.stack([a.x for a in self.agents])
        y_block = np.stack([a.y for a in self.agents])
        gap_sq = met.stationary_gap(
            self.problem, x_block, y_block,
            [a.lam for a in self.agents],
            [a.theta for a in self.agents],
            [a.polytope.planes for a in self.agents],
            topo.adjacency, eta_virtual=h.eta_x)
        cons = met.consensus_error(x_block, y_block)
        upper, lower = met.losses(self.problem, x_block, y_block)
        d_t = met.average_degree(W)
        met.cost_update(self.counters, d_t, dims.N, dims.n, dims.m,
                        self.schedule.p, plane_counts_pre, h.K, cut_epoch)
        rec = met.MetricsRecord(
            t=t_next,
            psi=met.psi_metric(gap_sq, cons, h.L_est),
            gap_sq=gap_sq,
            consensus=cons,
            upper_loss=upper,
            lower_loss=lower,
            task_metric=self.problem.task_metric(x_block, y_block),
            active_count=int(active_mask.sum()),
            avg_cuts=float(np.mean([len(a.polytope) for a in self.agents])),
            comm_bits_cum=self.counters.comm_bits_cum,
            flops_cum=self.counters.flops_cum,
            virtual_time=self.virtual_time)
        self.records.append(rec)
        return rec

    # ------------------------------------------------------------------ run

    def run(self) -> RunResult:
        for t in range(self.h.T):
            rec = self.run_iteration(t)
            if self.stop_tol is not None and rec.psi <= self.stop_tol:
                break
        echo = {
            "mode": self.mode, "seed": self.seed, "p_c": self.p_c,
            "static_topology": self.static_topology,
            "p_active": self.schedule.p.tolist(), "tau": self.schedule.tau,
            "hyper": {k: getattr(self.h, k) for k in vars(self.h)},
        }
        return RunResult(records=self.records, counters=self.counters,
                         agents=self.agents, config_echo=echo, seed=self.seed)
