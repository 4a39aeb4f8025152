import numpy as np
import pytest

from seqrec import data, kernels
from seqrec.curriculum import RewardKind, load_curriculum
from seqrec.errors import RangeError, UnknownState
from seqrec.planner import backward_induction, best_failfree_sequence, forward_search
from seqrec.simulate import (
    graduation_quarters,
    graduation_stats,
    hub_bottleneck_expected_time,
    resource_experiment,
    simulate_student,
)

from .helpers import independent_curriculum, line_curriculum, make_curriculum, random_curriculum


def plan(cur, kind=RewardKind.ON_TIME):
    return backward_induction(forward_search(cur), kind)


class TestSimulateStudent:
    def test_failfree_matches_best_sequence(self):
        cur = make_curriculum([[], [0], [0], [0]], cap=2, horizon=6, eps=0.0)
        table = plan(cur, RewardKind.TIME_TO_GRADUATION)
        seq = best_failfree_sequence(cur)
        traj = simulate_student(cur, table, seed=123)
        assert traj.graduated
        assert traj.graduation_quarter == len(seq)
        assert [(s.quarter, s.action) for s in traj.steps] == seq

    def test_certain_failure_never_graduates(self):
        cur = independent_curriculum(2, cap=2, horizon=5, eps=1.0)
        table = plan(cur)
        traj = simulate_student(cur, table, seed=5)
        assert not traj.graduated
        assert traj.graduation_quarter is None
        assert len(traj.steps) == 5

    def test_state_evolution_consistent(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            cur = random_curriculum(rng, n_max=5, t_max=5)
            table = plan(cur)
            traj = simulate_student(cur, table, seed=int(rng.integers(1 << 30)))
            bits = 0
            for step in traj.steps:
                assert step.state_before.bits == bits
                for c, passed in step.outcomes.items():
                    assert c in step.action
                    if passed:
                        bits |= 1 << c
            if traj.graduated and traj.graduation_quarter > 0:
                assert table.is_terminal_bits(bits)

    def test_policy_gap_raises(self):
        cur = line_curriculum(2, horizon=2, eps=0.5)
        table = plan(cur)
        broken = table.replace_actions({})
        broken.policy.pop((0, 0))
        with pytest.raises(UnknownState):
            simulate_student(cur, broken, seed=1)


class TestGraduationStats:
    def test_failfree_all_on_time(self):
        cur = make_curriculum([[], [0]], cap=1, horizon=4, eps=0.0)
        table = plan(cur)
        rep = graduation_stats(cur, table, n=500, seed=9)
        assert rep.on_time_prob == 1.0
        assert rep.expected_time == len(best_failfree_sequence(cur))
        assert rep.n_failed == 0

    def test_histogram_sums_to_graduates(self):
        cur = load_curriculum(data.path("counterexample.json"))
        table = plan(cur)
        rep = graduation_stats(cur, table, n=10_000, seed=3)
        assert sum(rep.time_histogram.values()) == rep.n - rep.n_failed
        assert 0.0 <= rep.on_time_prob <= 1.0

    def test_counterexample_frequency_matches_value(self):
        cur = load_curriculum(data.path("counterexample.json"))
        table = plan(cur)
        n = 1_000_000
        rep = graduation_stats(cur, table, n=n, seed=20240)
        assert rep.on_time_prob == pytest.approx(0.81, abs=0.002)

    def test_reproducible_bit_identical(self):
        cur = load_curriculum(data.path("counterexample.json"))
        table = plan(cur)
        a = graduation_stats(cur, table, n=5000, seed=42)
        b = graduation_stats(cur, table, n=5000, seed=42)
        assert a == b

    def test_batch_matches_single_trajectories(self):
        rng = np.random.default_rng(13)
        cur = random_curriculum(rng, n_max=5, t_max=5)
        table = plan(cur)
        seed = 777
        grads = graduation_quarters(cur, table, n=200, seed=seed)
        for j in (0, 3, 57, 199):
            traj = simulate_student(cur, table, seed=kernels.substream(seed, j))
            expect = traj.graduation_quarter if traj.graduated else -1
            assert grads[j] == (expect if expect is not None else -1)

    def test_n_range(self):
        cur = line_curriculum(2, horizon=2, eps=0.1)
        with pytest.raises(RangeError):
            graduation_stats(cur, plan(cur), n=0, seed=1)


class TestMonteCarloConsistency:
    def test_frequency_within_three_se(self):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 4:
            cur = random_curriculum(rng, n_max=5, t_max=5, eps_range=(0.1, 0.4))
            g = forward_search(cur)
            if sum(len(l) for l in g.layers) > 200:
                continue
            table = backward_induction(g, RewardKind.ON_TIME)
            n = 20_000
            rep = graduation_stats(cur, table, n=n, seed=checked)
            v = table.root_value
            se = np.sqrt(max(v * (1 - v), 1e-12) / n)
            assert abs(rep.on_time_prob - v) <= 3 * se + 1e-9
            checked += 1


class TestResourceExperiment:
    def test_direction_and_closed_form(self):
        mean_hub, mean_dep = resource_experiment(9, 0.2, 0.1, n=20_000, seed=4)
        assert mean_hub > mean_dep
        predicted = hub_bottleneck_expected_time(9, 0.2, 0.1)
        assert mean_hub == pytest.approx(predicted, rel=0.02)

    def test_near_full_availability(self):
        n_courses = 5
        mean_hub, mean_dep = resource_experiment(n_courses, 0.999, 0.0,
                                                 n=2000, seed=8)
        assert mean_hub == pytest.approx(n_courses + 1, abs=0.1)
        assert mean_dep == pytest.approx(n_courses + 1, abs=0.1)

    def test_parameter_validation(self):
        with pytest.raises(RangeError):
            resource_experiment(3, 0.0, 0.1, n=10, seed=1)
        with pytest.raises(RangeError):
            resource_experiment(3, 1.0, 0.1, n=10, seed=1)
        with pytest.raises(RangeError):
            resource_experiment(3, 0.5, 1.0, n=10, seed=1)
