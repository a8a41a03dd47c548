"""Module-invariant property suites behind the `validate` subcommand.

Each check re-derives its expectation independently (closed forms, Monte
Carlo, eigensolves) and returns a pass flag with a short detail string.
"""
from __future__ import annotations

import copy

import numpy as np

from . import metrics as met
from .config import validate_config
from .core import grad_check, prox_l1
from .cutting_planes import build_cut, eval_h
from .lower_level import estimate_lower_solution
from .network import (Topology, check_mixing_invariants, metropolis_weights,
                      sample_er_topology, spectral_gap)
from .problems import gen_continual, gen_hyperclean, gen_quadratic
from .runner import build_engine
from .scheduler import ActivationSchedule, draw_active_set, simulate_round_time
from . import presets


def check_prox_soft_threshold(rng: np.random.Generator) -> tuple[bool, str]:
    v = rng.standard_normal((10_000, 5)) * 3
    s = rng.uniform(0, 2, size=10_000)
    worst = 0.0
    for vi, si in zip(v, s):
        expected = np.sign(vi) * np.maximum(np.abs(vi) - si, 0.0)
        worst = max(worst, float(np.max(np.abs(prox_l1(vi, si) - expected))))
    idem = all(np.array_equal(prox_l1(prox_l1(vi, si), 0.0), prox_l1(vi, si))
               for vi, si in zip(v[:100], s[:100]))
    return worst <= 1e-12 and idem, f"max closed-form deviation {worst:.2e}, idempotent={idem}"


def check_prox_optimality(rng: np.random.Generator) -> tuple[bool, str]:
    v = rng.standard_normal(6)
    s = 0.7
    u_star = prox_l1(v, s)
    best = s * np.abs(u_star).sum() + 0.5 * float((u_star - v) @ (u_star - v))
    for _ in range(1000):
        u = rng.standard_normal(6) * 2
        val = s * np.abs(u).sum() + 0.5 * float((u - v) @ (u - v))
        if val < best - 1e-12:
            return False, f"found better point than prox output ({val:.6f} < {best:.6f})"
    return True, "prox output optimal against 1000 random candidates"


def check_gradient_oracles(rng: np.random.Generator) -> tuple[bool, str]:
    instances = [
        ("quadratic", gen_quadratic(5, N=3, n=4, m=4)),
        ("hyperclean", gen_hyperclean(5, N=2, d_f=6, n_train=30, n_val=20)),
        ("continual", gen_continual(5, N=2, d_f=5)),
    ]
    worst = 0.0
    for name, prob in instances:
        for _ in range(20):
            i = int(rng.integers(0, prob.dims.N))
            x = rng.standard_normal(prob.dims.n)
            y = rng.standard_normal(prob.dims.m)
            report = grad_check(prob, i, x, y, tol=1e-5)
            worst = max(worst, report.max_error)
            if not report.passed:
                return False, f"{name}: {report}"
    return True, f"20 points x 3 instances, max rel err {worst:.2e}"


def check_mixing_suite(rng: np.random.Generator) -> tuple[bool, str]:
    worst_rho = 0.0
    for k in range(200):
        topo = sample_er_topology(10, 0.5, rng, t=k)
        mix = metropolis_weights(topo)
        violations = check_mixing_invariants(mix.W, topo.adjacency)
        if violations:
            return False, f"graph {k}: {violations}"
        worst_rho = max(worst_rho, mix.rho)
    adj = np.eye(3, dtype=bool)
    adj[0, 1] = adj[1, 0] = adj[1, 2] = adj[2, 1] = True
    rho_path = metropolis_weights(Topology(N=3, adjacency=adj)).rho
    ok = abs(rho_path - 2.0 / 3.0) <= 1e-12
    return ok and worst_rho < 1.0, f"200 graphs ok, max rho {worst_rho:.4f}, path-graph rho {rho_path:.12f}"


def check_consensus_contraction(rng: np.random.Generator) -> tuple[bool, str]:
    for _ in range(20):
        topo = sample_er_topology(8, 0.5, rng)
        mix = metropolis_weights(topo)
        z = rng.standard_normal((8, 3))
        z -= z.mean(axis=0, keepdims=True)
        lhs = np.linalg.norm(mix.W @ z)
        rhs = mix.rho * np.linalg.norm(z)
        if lhs > rhs + 1e-10:
            return False, f"contraction violated: {lhs:.6f} > {rhs:.6f}"
    return True, "||Wz|| <= rho ||z|| on 20 sampled graphs"


def check_topology_determinism(_: np.random.Generator) -> tuple[bool, str]:
    a = sample_er_topology(10, 0.5, np.random.default_rng(99))
    b = sample_er_topology(10, 0.5, np.random.default_rng(99))
    ok = np.array_equal(a.adjacency, b.adjacency)
    return ok, "identical seeds give bit-identical topologies"


def check_staleness_bound(rng: np.random.Generator) -> tuple[bool, str]:
    tau = 5
    sched = ActivationSchedule(p=np.full(6, 0.3), tau=tau)
    last_active = np.zeros(6, dtype=int)
    max_gap = 0
    for t in range(1, 3001):
        active = draw_active_set(sched, t, rng)
        mask = active.mask(6)
        gaps = t - last_active[mask]
        if gaps.size:
            max_gap = max(max_gap, int(gaps.max()))
        last_active[mask] = t
    ok = max_gap <= tau
    return ok, f"max activation gap {max_gap} (bound {tau})"


def check_step_equalization(rng: np.random.Generator) -> tuple[bool, str]:
    # N = 10 at p = 0.5 keeps the forced inclusions (tau enforcement and the
    # empty-draw fallback) rare enough not to bias the Bernoulli law
    eta, p_i, tau, n, N = 0.01, 0.5, 20, 50_000, 10
    sched = ActivationSchedule(p=np.full(N, p_i), tau=tau)
    realized = np.zeros((n, N))
    for t in range(n):
        mask = draw_active_set(sched, t, rng).mask(N)
        realized[t, mask] = eta / p_i
    means = realized.mean(axis=0)
    ses = realized.std(axis=0) / np.sqrt(n)
    ok = bool(np.all(np.abs(means - eta) <= 3 * ses + 1e-12))
    worst = float(np.max(np.abs(means - eta)))
    return ok, f"per-agent |mean virtual step - eta| max {worst:.2e} (3 s.e. = {3 * ses.max():.2e})"


def check_sync_dominance(rng: np.random.Generator) -> tuple[bool, str]:
    for _ in range(50):
        delays = rng.uniform(0.5, 5.0, size=8)
        round_length = float(rng.uniform(0.5, delays.max()))
        sync_t, _ = simulate_round_time(delays, "sync")
        async_t, _ = simulate_round_time(delays, "async", round_length)
        if sync_t < async_t - 1e-12:
            return False, f"sync {sync_t:.3f} < async {async_t:.3f}"
    return True, "sync duration >= async duration whenever round_length <= max delay"


def check_lower_monotone(rng: np.random.Generator) -> tuple[bool, str]:
    prob = gen_quadratic(8, N=3, n=3, m=3)
    x = np.tile(rng.standard_normal(3), (3, 1))
    closed = prob.closed_form_lower(x[0])
    W = np.full((3, 3), 1.0 / 3.0)
    lam_max = max(np.linalg.norm(b @ b.T + np.eye(3), 2) for b in prob.B)
    eta = 0.1 / lam_max
    y = np.tile(rng.standard_normal(3) * 2, (3, 1))
    prev = np.linalg.norm(y - closed)
    for k in range(1, 120):
        y = estimate_lower_solution(prob, x, W, 1, eta, eta / 2, 0.2, y0=y)
        cur = np.linalg.norm(y - closed)
        if cur > prev + 1e-9:
            return False, f"residual rose at round {k}: {cur:.6f} > {prev:.6f}"
        prev = cur
    return True, f"residual non-increasing over 120 rounds, final {prev:.2e}"


def check_lower_consensus_trend(rng: np.random.Generator) -> tuple[bool, str]:
    prob = gen_quadratic(9, N=4, n=3, m=3)
    topo = sample_er_topology(4, 0.8, rng)
    W = metropolis_weights(topo).W
    x = np.tile(rng.standard_normal(3), (4, 1))
    y0 = rng.standard_normal((4, 3))
    yK = estimate_lower_solution(prob, x, W, 30, 0.02, 0.01, 0.3, y0=y0)
    def disp(y):
        return float(((y - y.mean(axis=0)) ** 2).sum())
    ok = disp(yK) <= disp(y0)
    return ok, f"consensus spread {disp(y0):.4f} -> {disp(yK):.4f}"


def check_lower_plain_gd(rng: np.random.Generator) -> tuple[bool, str]:
    prob = gen_quadratic(10, N=1, n=2, m=2)  # r = 0
    x = rng.standard_normal((1, 2))
    y = rng.standard_normal((1, 2))
    W = np.ones((1, 1))
    est = estimate_lower_solution(prob, x, W, 1, 0.3, 0.1, 0.5, y0=y)
    manual = y[0] - 0.3 * prob.grad_g_y(0, x[0], y[0])
    ok = np.allclose(est[0], manual, atol=1e-12)
    return ok, "one round with r=0 equals a plain gradient step"


def check_cut_separation(rng: np.random.Generator) -> tuple[bool, str]:
    lambda1, eps = 0.5, 0.1
    y_star = {0: np.zeros(1)}
    x_blocks = {0: np.zeros(1)}
    for trial in range(50):
        y_val = rng.uniform(1.0, 4.0) * rng.choice([-1.0, 1.0])
        y_blocks = {0: np.array([y_val])}
        plane = build_cut(x_blocks, y_blocks, y_star, lambda1, eps)
        slack_at_gen = plane.slack({0: x_blocks[0]}, {0: y_blocks[0]})
        h_val = eval_h(y_blocks[0], y_star[0], lambda1)
        if abs(slack_at_gen - (h_val - eps)) > 1e-12 or slack_at_gen <= 0:
            return False, f"generating-point slack {slack_at_gen:.6f} vs h-eps {h_val - eps:.6f}"
        if plane.slack({0: x_blocks[0]}, {0: y_star[0]}) > 1e-12:
            return False, "positive slack at the lower solution itself"
        # rejection-sample feasible points and check slack <= 1e-9
        found = 0
        while found < 100:
            z = rng.uniform(-1, 1)
            if eval_h(np.array([z]), y_star[0], lambda1) <= eps:
                found += 1
                if plane.slack({0: x_blocks[0]}, {0: np.array([z])}) > 1e-9:
                    return False, f"feasible point violated (trial {trial})"
    return True, "50 cuts: exact generating slack, none violated by 100 feasible samples"


def check_polytope_cap(rng: np.random.Generator) -> tuple[bool, str]:
    cfg = copy.deepcopy(presets.QUADRATIC_TREND)
    cfg["hyper"]["T"] = 120
    cfg["hyper"]["T1"] = 120
    cfg["hyper"]["M"] = 2
    engine = build_engine(validate_config(cfg))
    engine.run()
    sizes = [len(a.polytope) for a in engine.agents]
    ok = all(s <= 2 for s in sizes)
    return ok, f"polytope sizes {sizes} with cap 2"


def check_cut_determinism(_: np.random.Generator) -> tuple[bool, str]:
    def cut_ids():
        cfg = copy.deepcopy(presets.QUADRATIC_TREND)
        cfg["hyper"]["T"] = 60
        cfg["hyper"]["T1"] = 60
        engine = build_engine(validate_config(cfg))
        engine.run()
        return [(pl.id, pl.created_t, round(pl.c, 12)) for a in engine.agents
                for pl in a.polytope.planes]
    ok = cut_ids() == cut_ids()
    return ok, "identical seeds give identical cut sets"


def check_dual_nonnegativity(_: np.random.Generator) -> tuple[bool, str]:
    cfg = copy.deepcopy(presets.QUADRATIC_TREND)
    cfg["hyper"]["T"] = 150
    cfg["hyper"]["T1"] = 150
    engine = build_engine(validate_config(cfg))
    for t in range(150):
        engine.run_iteration(t)
        for a in engine.agents:
            if any(l < 0 for l in a.lam):
                return False, f"negative multiplier at iteration {t + 1}"
    return True, "multipliers stayed >= 0 over 150 iterations"


def check_sync_async_collapse(_: np.random.Generator) -> tuple[bool, str]:
    cfg = copy.deepcopy(presets.QUADRATIC_TREND)
    cfg["hyper"]["T"] = 80
    cfg["hyper"]["T1"] = 80
    cfg["scheduler"]["p_active"] = 1.0
    runs = []
    for mode in ("argus", "argus-s"):
        c = copy.deepcopy(cfg)
        c["mode"] = mode
        engine = build_engine(validate_config(c))
        runs.append(met.format_csv(engine.run().records))
    ok = runs[0] == runs[1]
    return ok, "p=1 traces byte-identical across modes"


def check_consensus_pull(rng: np.random.Generator) -> tuple[bool, str]:
    # mixing alone (zero gradients/duals) contracts disagreement by rho^2
    x = rng.standard_normal((6, 3))
    for _ in range(30):
        topo = sample_er_topology(6, 0.6, rng)
        mix = metropolis_weights(topo)
        before = float(((x - x.mean(axis=0)) ** 2).sum())
        x = mix.W @ x
        after = float(((x - x.mean(axis=0)) ** 2).sum())
        if after > mix.rho ** 2 * before + 1e-9:
            return False, f"disagreement {before:.4e} -> {after:.4e} exceeds rho^2 bound"
    return True, "mixing contracts squared disagreement by rho^2 each step"


def check_psi_identity(_: np.random.Generator) -> tuple[bool, str]:
    cfg = copy.deepcopy(presets.QUADRATIC_TREND)
    cfg["hyper"]["T"] = 100
    cfg["hyper"]["T1"] = 100
    cfg["hyper"]["L_est"] = 1.7
    engine = build_engine(validate_config(cfg))
    result = engine.run()
    for rec in result.records:
        if abs(rec.psi - (rec.gap_sq + 1.7 ** 2 * rec.consensus)) > 1e-9:
            return False, f"identity violated at t={rec.t}"
        if rec.consensus < 0:
            return False, f"negative consensus at t={rec.t}"
    return True, "psi = gap + L^2 * consensus holds in every record"


def check_counter_monotone(_: np.random.Generator) -> tuple[bool, str]:
    cfg = copy.deepcopy(presets.QUADRATIC_TREND)
    cfg["hyper"]["T"] = 100
    cfg["hyper"]["T1"] = 50
    engine = build_engine(validate_config(cfg))
    result = engine.run()
    bits = [r.comm_bits_cum for r in result.records]
    flops = [r.flops_cum for r in result.records]
    ok = all(b2 > b1 for b1, b2 in zip(bits, bits[1:])) and \
        all(f2 > f1 for f1, f2 in zip(flops, flops[1:]))
    c2 = engine.counters.c2_trace
    epochs_ok = all((c > 0) == ((t + 1) % 5 == 0 and t < 50) for t, c in enumerate(c2))
    return ok and epochs_ok, "counters strictly increase; cut-epoch bits only at epochs"


def check_gap_permutation_invariance(rng: np.random.Generator) -> tuple[bool, str]:
    prob = gen_quadratic(12, N=4, n=3, m=3)
    x = rng.standard_normal((4, 3))
    y = rng.standard_normal((4, 3))
    adj = np.ones((4, 4), dtype=bool)
    gap1 = met.stationary_gap(prob, x, y, [[] for _ in range(4)],
                              [{} for _ in range(4)], [[] for _ in range(4)], adj, 0.05)
    perm = rng.permutation(4)
    prob2 = gen_quadratic(12, N=4, n=3, m=3)
    prob2.B = [prob.B[i] for i in perm]
    prob2.c = [prob.c[i] for i in perm]
    gap2 = met.stationary_gap(prob2, x[perm], y[perm], [[] for _ in range(4)],
                              [{} for _ in range(4)], [[] for _ in range(4)], adj, 0.05)
    ok = abs(gap1 - gap2) <= 1e-9 * max(1.0, abs(gap1))
    return ok, f"gap {gap1:.6f} invariant under agent relabeling ({gap2:.6f})"


def check_hyperclean_separation(_: np.random.Generator) -> tuple[bool, str]:
    cfg = copy.deepcopy(presets.HYPERCLEAN_DECAY)
    engine = build_engine(validate_config(cfg))
    result = engine.run()
    prob = engine.problem
    auc = prob.separation_auc(np.stack([a.x for a in result.agents]))
    psi = np.array([r.psi for r in result.records])
    ratio = psi[-50:].mean() / psi[:50].mean()
    ok = auc >= 0.7 and ratio <= 0.1
    return ok, f"separation AUC {auc:.3f} (>= 0.7), psi last/first ratio {ratio:.3f} (<= 0.1)"


def check_quadratic_gap(_: np.random.Generator) -> tuple[bool, str]:
    engine = build_engine(validate_config(copy.deepcopy(presets.QUADRATIC_ORACLE)))
    result = engine.run()
    gap = result.final_record.gap_sq
    return gap <= 1e-4, f"final squared stationary gap {gap:.2e} (<= 1e-4)"


def check_dataset_determinism(_: np.random.Generator) -> tuple[bool, str]:
    a = gen_hyperclean(4, N=2, n_train=20, n_val=10)
    b = gen_hyperclean(4, N=2, n_train=20, n_val=10)
    ok = all(np.array_equal(s1.X_tr, s2.X_tr) and np.array_equal(s1.y_tr, s2.y_tr)
             and np.array_equal(s1.corrupted, s2.corrupted)
             for s1, s2 in zip(a.datasets, b.datasets))
    return ok, "same seed reproduces identical datasets"


ALL_CHECKS = [
    ("prox soft-threshold closed form", check_prox_soft_threshold),
    ("prox optimality", check_prox_optimality),
    ("gradient oracles vs finite differences", check_gradient_oracles),
    ("mixing-matrix suite (200 seeds + path graph)", check_mixing_suite),
    ("consensus contraction", check_consensus_contraction),
    ("topology determinism", check_topology_determinism),
    ("activation staleness bound", check_staleness_bound),
    ("virtual-step equalization", check_step_equalization),
    ("sync round dominance", check_sync_dominance),
    ("lower-level monotone residual", check_lower_monotone),
    ("lower-level consensus trend", check_lower_consensus_trend),
    ("lower-level reduces to gradient descent", check_lower_plain_gd),
    ("cut separation", check_cut_separation),
    ("polytope cap", check_polytope_cap),
    ("cut determinism", check_cut_determinism),
    ("dual nonnegativity", check_dual_nonnegativity),
    ("sync/async collapse", check_sync_async_collapse),
    ("consensus pull of mixing", check_consensus_pull),
    ("psi decomposition identity", check_psi_identity),
    ("cost counters monotone", check_counter_monotone),
    ("stationary-gap permutation invariance", check_gap_permutation_invariance),
    ("hyper-cleaning separation + psi decay", check_hyperclean_separation),
    ("quadratic end-to-end gap", check_quadratic_gap),
    ("dataset determinism", check_dataset_determinism),
]


def run_all(verbose: bool = True) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in ALL_CHECKS:
        rng = np.random.default_rng(2024)
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return results
