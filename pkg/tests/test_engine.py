import copy

import numpy as np
import pytest

from argus.config import validate_config
from argus.core import finite_diff_grad
from argus.cutting_planes import CuttingPlane
from argus.engine import (Engine, HyperParams, LagrangianPoint, dual_step,
                          local_lagrangian_grads, local_lagrangian_value,
                          mix_neighbors, primal_step, regularization_coeffs)
from argus.errors import DivergenceError, InvalidArgumentError, StalenessError
from argus.metrics import format_csv
from argus.presets import QUADRATIC_TREND
from argus.problems import gen_quadratic
from argus.runner import build_engine
from conftest import ScalarQuadUpper


def small_hyper(**kw):
    base = dict(T=40, T1=40, iota=5, M=3, eta_x=0.05, eta_y=0.05,
                eta_lambda=0.05, eta_theta=0.05, lambda1=0.1, epsilon=1.5,
                eta_y_ll=0.1, eta_phi=0.05, mu=0.5)
    base.update(kw)
    return HyperParams(**base)


class TestRegularization:
    def test_direct_formula_t0(self):
        c1, c2 = regularization_coeffs(0, 0.1, 0.1)
        assert c1 == pytest.approx(10.0)
        assert c2 == pytest.approx(10.0)

    def test_direct_formula_t3(self):
        c1, _ = regularization_coeffs(3, 0.1, 0.2)
        assert c1 == pytest.approx(1.0 / (0.1 * 2.0))

    def test_nonincreasing(self):
        values = [regularization_coeffs(t, 0.05, 0.07) for t in range(1000)]
        assert all(a[0] >= b[0] and a[1] >= b[1] for a, b in zip(values, values[1:]))

    def test_negative_t_rejected(self):
        with pytest.raises(InvalidArgumentError):
            regularization_coeffs(-1, 0.1, 0.1)


class TestMixNeighbors:
    def test_weighted_mean(self):
        d, u = mix_neighbors(np.array([0.5, 0.5]),
                             {0: np.array([1.0]), 1: np.array([3.0])},
                             {0: np.array([0.0]), 1: np.array([2.0])})
        np.testing.assert_allclose(d, [2.0])
        np.testing.assert_allclose(u, [1.0])

    def test_isolated_self_loop(self):
        d, u = mix_neighbors(np.array([1.0]), {0: np.array([4.0])}, {0: np.array([5.0])})
        np.testing.assert_allclose(d, [4.0])
        np.testing.assert_allclose(u, [5.0])

    def test_consensus_fixed_point(self, rng):
        x = rng.standard_normal(3)
        row = np.array([0.2, 0.3, 0.5])
        d, _ = mix_neighbors(row, {j: x for j in range(3)}, {j: x for j in range(3)})
        np.testing.assert_allclose(d, x, atol=1e-15)

    def test_missing_cache_raises(self):
        with pytest.raises(StalenessError):
            mix_neighbors(np.array([0.5, 0.5]), {0: np.array([1.0])}, {0: np.array([1.0])})


def make_point(rng, prob, n_planes=2, n_nbrs=2):
    i = 0
    x_own = rng.standard_normal(prob.dims.n)
    y_own = rng.standard_normal(prob.dims.m)
    x_others = {j: rng.standard_normal(prob.dims.n) for j in range(1, n_nbrs + 1)}
    y_others = {j: rng.standard_normal(prob.dims.m) for j in range(1, n_nbrs + 1)}
    keys = [i] + list(x_others)
    planes = [CuttingPlane(owner=i,
                           a={k: rng.standard_normal(prob.dims.n) for k in keys},
                           b={k: rng.standard_normal(prob.dims.m) for k in keys},
                           c=float(rng.standard_normal()), id=l)
              for l in range(n_planes)]
    lam = [float(rng.uniform(0, 1)) for _ in range(n_planes)]
    theta = {j: rng.standard_normal(prob.dims.n) for j in x_others}
    return LagrangianPoint(agent=i, x_own=x_own, y_own=y_own, lam=lam,
                           theta=theta, planes=planes,
                           x_others=x_others, y_others=y_others)


class TestLagrangianGrads:
    def test_no_cuts_no_duals_reduces_to_objective(self, rng):
        prob = gen_quadratic(2, N=1, n=3, m=3)
        point = LagrangianPoint(agent=0, x_own=rng.standard_normal(3),
                                y_own=rng.standard_normal(3), lam=[], theta={},
                                planes=[], x_others={}, y_others={})
        g_x, g_y, g_lam, g_theta = local_lagrangian_grads(prob, point, 1.0, 1.0)
        np.testing.assert_allclose(g_x, prob.grad_G_x(0, point.x_own, point.y_own))
        np.testing.assert_allclose(g_y, prob.grad_G_y(0, point.x_own, point.y_own))
        assert g_lam.size == 0 and g_theta == {}

    def test_multiplier_gradient_formula(self, rng):
        # slack 0.3 with c1 = 10 and lam = 0.01 gives 0.3 - 0.1 = 0.2
        prob = gen_quadratic(2, N=1, n=2, m=2)
        plane = CuttingPlane(owner=0, a={0: np.zeros(2)}, b={0: np.zeros(2)}, c=0.3, id=1)
        point = LagrangianPoint(agent=0, x_own=np.zeros(2), y_own=np.zeros(2),
                                lam=[0.01], theta={}, planes=[plane],
                                x_others={}, y_others={})
        _, _, g_lam, _ = local_lagrangian_grads(prob, point, 10.0, 1.0)
        assert g_lam[0] == pytest.approx(0.2)

    def test_matches_finite_differences_of_scalar(self, rng):
        prob = gen_quadratic(3, N=4, n=3, m=3)
        point = make_point(rng, prob, n_planes=2, n_nbrs=2)
        c1, c2 = 2.0, 3.0
        g_x, g_y, g_lam, g_theta = local_lagrangian_grads(prob, point, c1, c2)

        def with_x(v):
            p = copy.deepcopy(point)
            p.x_own = v
            return local_lagrangian_value(prob, p, c1, c2)

        def with_y(v):
            p = copy.deepcopy(point)
            p.y_own = v
            return local_lagrangian_value(prob, p, c1, c2)

        def with_lam(v):
            p = copy.deepcopy(point)
            p.lam = list(v)
            return local_lagrangian_value(prob, p, c1, c2)

        def with_theta_j(v, j):
            p = copy.deepcopy(point)
            p.theta = dict(p.theta)
            p.theta[j] = v
            return local_lagrangian_value(prob, p, c1, c2)

        for analytic, fd in [
            (g_x, finite_diff_grad(with_x, point.x_own, 1e-6)),
            (g_y, finite_diff_grad(with_y, point.y_own, 1e-6)),
            (g_lam, finite_diff_grad(with_lam, np.array(point.lam), 1e-6)),
        ]:
            assert np.linalg.norm(np.asarray(analytic) - fd) / max(np.linalg.norm(fd), 1.0) <= 1e-5
        for j in point.theta:
            fd = finite_diff_grad(lambda v: with_theta_j(v, j), point.theta[j], 1e-6)
            assert np.linalg.norm(g_theta[j] - fd) / max(np.linalg.norm(fd), 1.0) <= 1e-5

    def test_misaligned_multipliers(self, rng):
        prob = gen_quadratic(3, N=1, n=2, m=2)
        point = LagrangianPoint(agent=0, x_own=np.zeros(2), y_own=np.zeros(2),
                                lam=[0.1], theta={}, planes=[], x_others={}, y_others={})
        with pytest.raises(StalenessError):
            local_lagrangian_grads(prob, point, 1.0, 1.0)


class TestSteps:
    def test_primal_soft_threshold(self):
        prob = gen_quadratic(1, N=1, n=2, m=2, l1_weight=1.0)
        x_new, _ = primal_step(prob, np.array([2.0, -0.5]), np.zeros(2),
                               np.zeros(2), np.zeros(2), 0.5, 0.5)
        np.testing.assert_allclose(x_new, [1.5, 0.0])

    def test_primal_identity_without_regularizer(self, rng):
        prob = gen_quadratic(1, N=1, n=2, m=2)
        d = rng.standard_normal(2)
        x_new, y_new = primal_step(prob, d, d, np.zeros(2), np.zeros(2), 0.1, 0.1)
        np.testing.assert_allclose(x_new, d)
        np.testing.assert_allclose(y_new, d)

    def test_dual_ascent_formula(self):
        lam, theta = dual_step([0.01], {}, np.array([0.2]), {}, 0.1, 0.1)
        assert lam[0] == pytest.approx(0.03)

    def test_dual_projection_at_zero(self):
        lam, _ = dual_step([0.0], {}, np.array([-1.0]), {}, 0.1, 0.1)
        assert lam[0] == 0.0

    def test_theta_ascent(self):
        _, theta = dual_step([], {1: np.zeros(2)}, np.array([]),
                             {1: np.array([1.0, 0.0])}, 0.1, 0.1)
        np.testing.assert_allclose(theta[1], [0.1, 0.0])


class TestRunIteration:
    def test_sync_async_collapse_bitwise(self):
        def run(mode):
            prob = gen_quadratic(7, N=3, n=3, m=3, init_scale=1.0)
            eng = Engine(prob, small_hyper(), mode=mode, seed=5, p_active=1.0)
            return format_csv(eng.run().records)
        assert run("argus") == run("argus-s")

    def test_cut_epochs_at_iota_multiples(self):
        prob = gen_quadratic(7, N=3, n=3, m=3, init_scale=1.0)
        eng = Engine(prob, small_hyper(T=23, T1=12, iota=5), mode="argus", seed=5)
        eng.run()
        epochs = [t + 1 for t, c in enumerate(eng.counters.c2_trace) if c > 0]
        assert epochs == [5, 10]  # multiples of 5 with t < T1

    def test_single_agent_geometric_convergence(self):
        prob = ScalarQuadUpper()
        prob.init_scale = 0.0
        eng = Engine(prob, small_hyper(T=60, T1=0, eta_x=0.3), mode="argus", seed=1)
        eng.agents[0].x = np.array([4.0])
        eng.agents[0].cache_x[0] = np.array([4.0])
        eng.agents[0].snapshot.x = np.array([4.0])
        eng.agents[0].snapshot.nbr_x[0] = np.array([4.0])
        res = eng.run()
        # x <- (1 - eta) x each iteration
        xs = 4.0 * (1 - 0.3) ** np.arange(1, 61)
        assert eng.agents[0].x[0] == pytest.approx(xs[-1], rel=1e-9)

    def test_inactive_agent_takes_mixed_values(self):
        prob = gen_quadratic(9, N=3, n=2, m=2, init_scale=1.0)
        eng = Engine(prob, small_hyper(T=5, T1=0), mode="argus", seed=3,
                     p_active=np.array([1.0, 1.0, 1e-12]), tau=10**6)
        eng.run_iteration(0)
        assert not eng.activation_log[0][2]
        np.testing.assert_allclose(eng.agents[2].x, eng.agents[2].mixed_x)
        np.testing.assert_allclose(eng.agents[2].y, eng.agents[2].mixed_y)

    def test_divergence_error_carries_context(self):
        prob = gen_quadratic(7, N=2, n=2, m=2, init_scale=1.0)
        eng = Engine(prob, small_hyper(eta_x=1e9, eta_y=1e9, T=50, T1=0),
                     mode="argus", seed=5)
        with pytest.raises(DivergenceError) as err:
            eng.run()
        assert err.value.iteration is not None


class TestRun:
    def test_zero_iterations(self):
        prob = gen_quadratic(7, N=2, n=2, m=2)
        res = Engine(prob, small_hyper(T=0, T1=0), mode="argus", seed=5).run()
        assert res.records == []

    def test_deterministic_csv_bytes(self):
        def trace():
            cfg = copy.deepcopy(QUADRATIC_TREND)
            cfg["hyper"]["T"] = 60
            cfg["hyper"]["T1"] = 60
            return format_csv(build_engine(validate_config(cfg)).run().records)
        assert trace() == trace()

    def test_dual_nonnegativity_throughout(self):
        cfg = copy.deepcopy(QUADRATIC_TREND)
        cfg["hyper"]["T"] = 120
        cfg["hyper"]["T1"] = 120
        eng = build_engine(validate_config(cfg))
        for t in range(120):
            eng.run_iteration(t)
            assert all(l >= 0 for a in eng.agents for l in a.lam)

    def test_staleness_bound_in_run(self):
        cfg = copy.deepcopy(QUADRATIC_TREND)
        cfg["hyper"]["T"] = 300
        cfg["hyper"]["T1"] = 0
        cfg["scheduler"] = {"p_active": 0.3, "tau": 6}
        eng = build_engine(validate_config(cfg))
        eng.run()
        N = eng.problem.dims.N
        last = np.zeros(N, dtype=int)
        for t, mask in enumerate(eng.activation_log, start=1):
            gaps = t - last[mask]
            assert np.all(gaps <= 6)
            last[mask] = t

    def test_stop_tol_short_circuits(self):
        prob = gen_quadratic(7, N=2, n=2, m=2)  # zero init: psi starts ~0
        eng = Engine(prob, small_hyper(T=50, T1=0), mode="argus", seed=5,
                     stop_tol=1e30)
        res = eng.run()
        assert len(res.records) == 1

    def test_snapshot_staleness_used(self):
        # an agent inactive for k iterations still evaluates at its last snapshot
        prob = gen_quadratic(9, N=2, n=2, m=2, init_scale=1.0)
        eng = Engine(prob, small_hyper(T=3, T1=0), mode="argus", seed=3,
                     p_active=np.array([1.0, 1e-12]), tau=10**6)
        snap_before = eng.agents[1].snapshot
        for t in range(3):
            eng.run_iteration(t)
        assert eng.agents[1].snapshot is snap_before
        assert eng.agents[1].t_hat == 0

    def test_consensus_pull_mix_only(self, rng):
        # with zero gradients and duals, one mixing round contracts squared
        # disagreement by at least rho^2
        from argus.network import metropolis_weights, sample_er_topology
        x = {i: rng.standard_normal(3) for i in range(6)}
        for _ in range(25):
            topo = sample_er_topology(6, 0.6, rng)
            mix = metropolis_weights(topo)
            before = np.stack([x[i] for i in range(6)])
            before_spread = float(((before - before.mean(0)) ** 2).sum())
            new_x = {}
            for i in range(6):
                d, _ = mix_neighbors(mix.W[i], x, x)
                new_x[i] = d
            x = new_x
            after = np.stack([x[i] for i in range(6)])
            after_spread = float(((after - after.mean(0)) ** 2).sum())
            assert after_spread <= mix.rho ** 2 * before_spread + 1e-12


class TestHyperParamsValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(InvalidArgumentError):
            small_hyper(iota=0)
        with pytest.raises(InvalidArgumentError):
            small_hyper(eta_x=0.0)
        with pytest.raises(InvalidArgumentError):
            small_hyper(T1=100, T=50)
        with pytest.raises(InvalidArgumentError):
            small_hyper(M=0)
        with pytest.raises(InvalidArgumentError):
            small_hyper(epsilon=0.0)
