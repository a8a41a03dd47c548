import numpy as np
import pytest

from argus.core import prox_l1
from argus.cutting_planes import CuttingPlane
from argus.metrics import (CSV_COLUMNS, CostCounters, MetricsRecord,
                           average_degree, comm_bits_cut_epoch,
                           comm_bits_iteration, consensus_error, cost_update,
                           flops_cut_epoch, flops_iteration, format_csv,
                           losses, prox_grad_mapping, psi_metric,
                           stationary_gap)
from argus.problems import gen_quadratic
from conftest import ZeroProblem


class TestProxGradMapping:
    def test_identity_prox_returns_gradient(self, rng):
        a = rng.standard_normal(4)
        b = rng.standard_normal(4)
        np.testing.assert_allclose(prox_grad_mapping(a, b, 0.3), b, atol=1e-12)

    def test_stationary_point_is_zero(self, rng):
        a = rng.standard_normal(4)
        np.testing.assert_allclose(prox_grad_mapping(a, np.zeros(4), 0.5), np.zeros(4))

    def test_l1_case(self):
        out = prox_grad_mapping(np.array([1.0]), np.array([0.0]), 0.5, prox=prox_l1)
        np.testing.assert_allclose(out, [1.0])

    def test_zero_rate_convention(self, rng):
        b = rng.standard_normal(3)
        np.testing.assert_array_equal(prox_grad_mapping(rng.standard_normal(3), b, 0.0), b)


class TestConsensusError:
    def test_zero_at_consensus(self, rng):
        x = np.tile(rng.standard_normal(3), (4, 1))
        y = np.tile(rng.standard_normal(2), (4, 1))
        assert consensus_error(x, y) == 0.0

    def test_direct_formula(self):
        x = np.array([[1.0], [3.0]])
        y = np.zeros((2, 1))
        assert consensus_error(x, y) == pytest.approx(2.0)

    def test_shift_invariance(self, rng):
        x = rng.standard_normal((5, 3))
        y = rng.standard_normal((5, 2))
        shift_x = x + rng.standard_normal(3)
        shift_y = y + rng.standard_normal(2)
        assert consensus_error(shift_x, shift_y) == pytest.approx(consensus_error(x, y))


class TestStationaryGap:
    def test_zero_at_stationary_consensus(self, rng):
        prob = gen_quadratic(1, N=3, n=2, m=2)
        v = rng.standard_normal(2)
        x = np.tile(v, (3, 1))
        y = x.copy()  # grad_G vanishes at x = y
        adj = np.ones((3, 3), dtype=bool)
        gap = stationary_gap(prob, x, y, [[]] * 3, [{}] * 3, [[]] * 3, adj, 0.1)
        assert gap == pytest.approx(0.0, abs=1e-24)

    def test_theta_block_counts_ordered_pairs(self):
        prob = ZeroProblem(N=2, n=1, m=1)
        x = np.array([[1.0], [0.0]])
        y = np.zeros((2, 1))
        adj = np.ones((2, 2), dtype=bool)
        gap = stationary_gap(prob, x, y, [[], []], [{}, {}], [[], []], adj, 0.1)
        assert gap == pytest.approx(2.0)  # both (0,1) and (1,0) contribute 1

    def test_duplicate_formula_oracle(self, rng):
        prob = gen_quadratic(4, N=3, n=2, m=2)
        x = rng.standard_normal((3, 2))
        y = rng.standard_normal((3, 2))
        adj = np.ones((3, 3), dtype=bool)
        keys = [0, 1, 2]
        planes = [[CuttingPlane(owner=i,
                                a={k: rng.standard_normal(2) for k in keys},
                                b={k: rng.standard_normal(2) for k in keys},
                                c=float(rng.standard_normal()), id=i)]
                  for i in range(3)]
        lams = [[float(rng.uniform(0, 1))] for _ in range(3)]
        thetas = [{j: rng.standard_normal(2) for j in range(3) if j != i} for i in range(3)]
        eta = 0.07
        gap = stationary_gap(prob, x, y, lams, thetas, planes, adj, eta)

        # independent re-implementation
        gx = np.zeros(2)
        gy = np.zeros(2)
        for i in range(3):
            gxi = prob.grad_G_x(i, x[i], y[i]) + lams[i][0] * planes[i][0].a[i] \
                + sum(thetas[i].values())
            gyi = prob.grad_G_y(i, x[i], y[i]) + lams[i][0] * planes[i][0].b[i]
            gx += gxi
            gy += gyi
        gx /= 3
        gy /= 3
        oracle = 0.0
        for i in range(3):
            p = (x[i] - (x[i] - eta * gx)) / eta  # identity prox
            oracle += float(p @ p)
        oracle += float(gy @ gy)
        for i in range(3):
            s = planes[i][0].c
            for k in keys:
                s += float(planes[i][0].a[k] @ x[k]) + float(planes[i][0].b[k] @ y[k])
            oracle += s * s
        for i in range(3):
            for j in range(3):
                if i != j:
                    d = x[i] - x[j]
                    oracle += float(d @ d)
        assert gap == pytest.approx(oracle, abs=1e-10)

    def test_permutation_invariance(self, rng):
        prob = gen_quadratic(12, N=4, n=3, m=3)
        x = rng.standard_normal((4, 3))
        y = rng.standard_normal((4, 3))
        adj = np.ones((4, 4), dtype=bool)
        gap1 = stationary_gap(prob, x, y, [[]] * 4, [{}] * 4, [[]] * 4, adj, 0.05)
        perm = rng.permutation(4)
        prob2 = gen_quadratic(12, N=4, n=3, m=3)
        prob2.B = [prob.B[i] for i in perm]
        prob2.c = [prob.c[i] for i in perm]
        gap2 = stationary_gap(prob2, x[perm], y[perm], [[]] * 4, [{}] * 4, [[]] * 4, adj, 0.05)
        assert gap2 == pytest.approx(gap1, rel=1e-12)


class TestCostCounters:
    def test_worked_example_40960(self):
        # N=10, m=n=5, d=4, p_i=1, two planes per agent
        c1 = comm_bits_iteration(4.0, 10, 5, 5, np.ones(10), [2] * 10)
        assert c1 == 40960.0

    def test_cut_epoch_worked_example_160(self):
        assert comm_bits_cut_epoch(1.0, 1, 1, 1, K=1) == 160.0

    def test_no_epoch_contributes_zero(self):
        counters = CostCounters()
        cost_update(counters, 4.0, 10, 5, 5, np.ones(10), [2] * 10, K=1, cut_epoch=False)
        assert counters.c2_trace == [0.0]
        assert counters.comm_bits_cum == 40960.0

    def test_cumulative_totals(self):
        counters = CostCounters()
        for t in range(10):
            cost_update(counters, 3.0, 4, 2, 2, np.full(4, 0.5), [1] * 4,
                        K=2, cut_epoch=(t % 5 == 4))
        c1 = comm_bits_iteration(3.0, 4, 2, 2, np.full(4, 0.5), [1] * 4)
        c2 = comm_bits_cut_epoch(3.0, 4, 2, 2, K=2)
        assert counters.comm_bits_cum == pytest.approx(10 * c1 + 2 * c2)
        f1 = flops_iteration(3.0, 4, 2, 2, 1.0)
        f2 = flops_cut_epoch(3.0, 4, 2, 2, K=2)
        assert counters.flops_cum == pytest.approx(10 * f1 + 2 * f2)
        assert counters.d_t == [3.0] * 10

    def test_average_degree_counts_support(self):
        W = np.array([[0.5, 0.5, 0.0], [0.5, 0.25, 0.25], [0.0, 0.25, 0.75]])
        assert average_degree(W) == pytest.approx(7 / 3)


class TestPsiAndTrace:
    def test_psi_identity(self):
        assert psi_metric(2.0, 3.0, 1.5) == pytest.approx(2.0 + 1.5 ** 2 * 3.0)

    def test_losses_include_nonsmooth_terms(self, rng):
        prob = gen_quadratic(3, N=2, n=2, m=2, l1_weight=0.5)
        x = rng.standard_normal((2, 2))
        y = rng.standard_normal((2, 2))
        upper, lower = losses(prob, x, y)
        expected_upper = sum(prob.eval_G(i, x[i], y[i]) + 0.5 * np.abs(x[i]).sum()
                             for i in range(2))
        assert upper == pytest.approx(expected_upper)
        assert lower == pytest.approx(sum(prob.eval_g(i, x[i], y[i])
                                          + 0.5 * np.abs(y[i]).sum() for i in range(2)))

    def test_csv_header_exact(self):
        assert format_csv([]).splitlines()[0] == ",".join(CSV_COLUMNS)
        assert CSV_COLUMNS == ["t", "psi", "gap_sq", "consensus", "upper_loss",
                               "lower_loss", "task_metric", "active_count",
                               "avg_cuts", "comm_bits_cum", "flops_cum",
                               "virtual_time"]

    def test_csv_roundtrip_floats(self):
        rec = MetricsRecord(t=1, psi=1 / 3, gap_sq=0.1, consensus=0.2,
                            upper_loss=-1.5, lower_loss=2.25, task_metric=float("nan"),
                            active_count=3, avg_cuts=1.5, comm_bits_cum=100.0,
                            flops_cum=200.0, virtual_time=1.0)
        line = format_csv([rec]).splitlines()[1]
        cells = line.split(",")
        assert float(cells[1]) == 1 / 3  # repr round-trips exactly
        assert cells[0] == "1"
