import numpy as np
import pytest

from seqrec import kernels
from seqrec.curriculum import RewardKind
from seqrec.planner import backward_induction, forward_search
from seqrec.simulate import graduation_quarters

from .helpers import random_curriculum

needs_compiled = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(),
    reason="compiled extension not built")


class TestRng:
    def test_mix64_known_zero(self):
        # splitmix64 finalizer of 0 is 0; substreams never feed it 0-like inputs
        assert kernels.mix64(0) == 0
        assert kernels.mix64(1) != 1

    def test_draw_uniform_range_and_determinism(self):
        draws = [kernels.draw_u01(123, t, i) for t in range(1, 50) for i in range(8)]
        assert all(0.0 <= u < 1.0 for u in draws)
        assert draws == [kernels.draw_u01(123, t, i)
                         for t in range(1, 50) for i in range(8)]
        assert abs(np.mean(draws) - 0.5) < 0.05

    def test_substreams_differ(self):
        streams = {kernels.substream(7, j) for j in range(1000)}
        assert len(streams) == 1000


@needs_compiled
class TestBackendEquivalence:
    def test_graphs_and_policies_identical(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            cur = random_curriculum(rng, n_max=6, t_max=5)
            with kernels.forced("python"):
                g_py = forward_search(cur)
                t_py = backward_induction(g_py, RewardKind.ON_TIME)
            with kernels.forced("compiled"):
                g_c = forward_search(cur)
                t_c = backward_induction(g_c, RewardKind.ON_TIME)
            for a, b in zip(g_py.layers, g_c.layers):
                assert np.array_equal(a, b)
            for a, b in zip(g_py.and_layers, g_c.and_layers):
                assert np.array_equal(a.src, b.src)
                assert np.array_equal(a.action, b.action)
                assert np.array_equal(a.succ_off, b.succ_off)
                assert np.array_equal(a.succ_state, b.succ_state)
                assert np.array_equal(a.succ_prob, b.succ_prob)
            assert t_py.values == t_c.values
            assert t_py.policy == t_c.policy

    def test_trajectories_identical(self):
        rng = np.random.default_rng(32)
        for seed in (0, 1, 99):
            cur = random_curriculum(rng, n_max=6, t_max=6, eps_range=(0.1, 0.5))
            table = backward_induction(forward_search(cur), RewardKind.ON_TIME)
            with kernels.forced("python"):
                a = graduation_quarters(cur, table, 2000, seed)
            with kernels.forced("compiled"):
                b = graduation_quarters(cur, table, 2000, seed)
            assert np.array_equal(a, b)

    def test_expand_guard_raises_consistently(self):
        from .helpers import independent_curriculum

        cur = independent_curriculum(8, cap=4, horizon=2, eps=0.1)
        eps = cur.failure.table(cur.cap)
        prereqs = np.array(cur.prereq_masks(), dtype=np.int64)
        states = np.zeros(1, dtype=np.int64)
        avail = cur.calendar.offered_mask(8, 1)
        for name in kernels.available_backends():
            with kernels.forced(name):
                with pytest.raises(OverflowError):
                    kernels.expand_states(states, avail, prereqs, 4, eps,
                                          max_actions=10, max_slots=10**9)
                with pytest.raises(OverflowError):
                    kernels.expand_states(states, avail, prereqs, 4, eps,
                                          max_actions=10**9, max_slots=5)
