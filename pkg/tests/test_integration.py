"""Two-step pipeline: planner-generated candidate policies as bandit arms.

The planner cannot distinguish value-tied course orderings; the learner
can, once per-context GPA feedback arrives.  This drives the whole stack:
tie-class enumeration -> per-arm trajectory simulation -> adaptive
personalized selection.
"""

import numpy as np

from seqrec.bandit import BanditConfig, run
from seqrec.curriculum import RewardKind
from seqrec.planner import enumerate_candidate_policies
from seqrec.simulate import graduation_stats

from .helpers import make_curriculum


def test_candidate_policies_feed_policy_selection():
    # hub course unlocks three others; cap 2 gives three value-tied plans
    cur = make_curriculum([[], [0], [0], [0]], cap=2, horizon=4, eps=0.05)
    arms = enumerate_candidate_policies(cur, RewardKind.ON_TIME, 3)
    assert len(arms) == 3
    root = arms[0].root_value
    assert all(a.root_value == root for a in arms)

    # all arms graduate students equally well in time terms
    for i, arm in enumerate(arms):
        rep = graduation_stats(cur, arm, n=4000, seed=100 + i)
        assert abs(rep.on_time_prob - root) < 0.03

    class SequenceGpaEnv:
        """GPA depends on which tied ordering a student follows: students
        with low context do better under arm 0, high context under arm 2."""

        n_arms = 3
        context_dim = 1

        def mean(self, theta, arm):
            best = 0 if theta[0] < 0.5 else 2
            return 3.6 if arm == best else 3.0

        def sample_context(self, rng):
            return rng.random(1)

        def sample_reward(self, theta, arm, rng):
            return float(np.clip(rng.normal(self.mean(theta, arm), 0.3), 0.0, 4.0))

        def best_mean(self, theta):
            return (0 if theta[0] < 0.5 else 2), 3.6

    env = SequenceGpaEnv()
    hist = run(env, 15_000, BanditConfig(n_arms=3), seed=9)
    tail = slice(-4000, None)
    theta = hist.theta[tail, 0]
    arm = hist.arm[tail]
    assert np.argmax(np.bincount(arm[theta < 0.5], minlength=3)) == 0
    assert np.argmax(np.bincount(arm[theta >= 0.5], minlength=3)) == 2
    # learned selection beats any fixed arm on realized GPA
    fixed_best = max(
        np.mean([env.mean((t,), a) for t in np.linspace(0.01, 0.99, 99)])
        for a in range(3))
    assert hist.gpa[tail].mean() > fixed_best + 0.05
