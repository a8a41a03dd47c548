import numpy as np
import pytest

from argus.errors import InvalidArgumentError
from argus.scheduler import (ActivationSchedule, ActiveSet, DelayModel,
                             draw_active_set, effective_step, simulate_round_time)


class TestDrawActiveSet:
    def test_all_probability_one(self, rng):
        sched = ActivationSchedule(p=np.ones(5), tau=10)
        for t in range(50):
            active = draw_active_set(sched, t, rng)
            assert active.members.tolist() == [0, 1, 2, 3, 4]

    def test_inclusion_frequency(self):
        # Monte-Carlo oracle: frequency ~ p + O(1/tau) within +-0.03 for tau=20
        rng = np.random.default_rng(0)
        sched = ActivationSchedule(p=np.full(10, 0.5), tau=20)
        hits = np.zeros(10)
        n = 10_000
        for t in range(n):
            hits += draw_active_set(sched, t, rng).mask(10)
        freq = hits / n
        assert np.all(np.abs(freq - 0.5) <= 0.03)

    def test_forced_after_tau_minus_one_misses(self):
        rng = np.random.default_rng(1)
        tau = 5
        p = np.ones(4)
        p[3] = 1e-12  # agent 3 effectively never drawn
        sched = ActivationSchedule(p=p, tau=tau)
        for t in range(tau - 1):
            active = draw_active_set(sched, t, rng)
            assert 3 not in active
        active = draw_active_set(sched, tau - 1, rng)
        assert 3 in active  # miss count hit tau-1, forced in

    def test_empty_draw_falls_back_to_lowest_index(self):
        rng = np.random.default_rng(2)
        sched = ActivationSchedule(p=np.full(3, 1e-15), tau=1000)
        active = draw_active_set(sched, 0, rng)
        assert active.members.tolist() == [0]

    def test_eligible_mask_is_base_membership(self, rng):
        sched = ActivationSchedule(p=np.full(4, 0.5), tau=100)
        eligible = np.array([True, False, True, False])
        active = draw_active_set(sched, 0, rng, eligible=eligible)
        assert active.members.tolist() == [0, 2]

    def test_staleness_bound_property(self, rng):
        tau = 7
        sched = ActivationSchedule(p=np.full(5, 0.25), tau=tau)
        last = np.zeros(5, dtype=int)
        for t in range(1, 5000):
            mask = draw_active_set(sched, t, rng).mask(5)
            assert np.all(t - last[~mask] < tau + 1)
            last[mask] = t

    def test_schedule_validation(self):
        with pytest.raises(InvalidArgumentError):
            ActivationSchedule(p=np.array([0.0]), tau=5)
        with pytest.raises(InvalidArgumentError):
            ActivationSchedule(p=np.array([0.5]), tau=0)
        with pytest.raises(InvalidArgumentError):
            ActiveSet(t=0, members=np.array([], dtype=int))


class TestEffectiveStep:
    def test_direct_formula(self):
        assert effective_step(0.01, 0.5) == pytest.approx(0.02)

    def test_identity_case(self):
        assert effective_step(0.01, 1.0) == pytest.approx(0.01)

    def test_invalid_probability(self):
        with pytest.raises(InvalidArgumentError):
            effective_step(0.01, 0.0)
        with pytest.raises(InvalidArgumentError):
            effective_step(-0.01, 0.5)

    def test_expected_virtual_step_equalized(self):
        # Monte-Carlo oracle: mean realized virtual step -> eta within 1e-4
        rng = np.random.default_rng(3)
        eta, p = 0.01, 0.25
        step = effective_step(eta, p)
        draws = rng.random(100_000) < p
        mean = float(np.mean(np.where(draws, step, 0.0)))
        assert abs(mean - eta) <= 1e-4


class TestRoundTime:
    def test_sync_takes_max(self):
        dur, who = simulate_round_time(np.array([1.0, 2.0, 10.0]), "sync")
        assert dur == 10.0
        assert who.tolist() == [0, 1, 2]

    def test_async_threshold(self):
        dur, who = simulate_round_time(np.array([1.0, 2.0, 10.0]), "async", 3.0)
        assert dur == 3.0
        assert who.tolist() == [0, 1]

    def test_equal_delays_all_finish(self):
        dur, who = simulate_round_time(np.array([2.0, 2.0, 2.0]), "async", 2.0)
        assert dur == 2.0
        assert who.tolist() == [0, 1, 2]

    def test_async_needs_round_length(self):
        with pytest.raises(InvalidArgumentError):
            simulate_round_time(np.array([1.0]), "async", 0.0)
        with pytest.raises(InvalidArgumentError):
            simulate_round_time(np.array([1.0]), "async", None)

    def test_sync_dominates_async(self, rng):
        for _ in range(100):
            delays = rng.uniform(0.1, 5.0, size=6)
            rl = float(rng.uniform(0.1, delays.max()))
            assert simulate_round_time(delays, "sync")[0] >= \
                simulate_round_time(delays, "async", rl)[0]

    def test_nonpositive_delays_rejected(self):
        with pytest.raises(InvalidArgumentError):
            simulate_round_time(np.array([1.0, 0.0]), "sync")


class TestDelayModel:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            DelayModel(compute_mean=np.array([1.0, -1.0]), compute_jitter=0.1,
                       comm_mean=0.1, comm_jitter=0.1, round_length=1.0)
        with pytest.raises(InvalidArgumentError):
            DelayModel(compute_mean=np.ones(3), compute_jitter=0.1, comm_mean=0.1,
                       comm_jitter=0.1, round_length=1.0, straggler_count=3)

    def test_straggler_multiplier_applied(self):
        model = DelayModel(compute_mean=np.ones(10), compute_jitter=0.0,
                           comm_mean=0.1, comm_jitter=0.0, round_length=2.0,
                           straggler_count=2, straggler_multiplier=10.0)
        delays = model.sample(np.random.default_rng(4))
        assert (delays > 5.0).sum() == 2
        assert (np.abs(delays - 1.1) < 1e-9).sum() == 8

    def test_activation_probability_estimate(self):
        model = DelayModel(compute_mean=np.ones(10), compute_jitter=0.1,
                           comm_mean=0.2, comm_jitter=0.1, round_length=1.6,
                           straggler_count=2, straggler_multiplier=10.0)
        p = model.estimate_activation_probs(np.random.default_rng(5), samples=5000)
        # stragglers hit 2 of 10 agents uniformly; the rest nearly always finish
        assert np.all(np.abs(p - 0.8) < 0.05)
