"""Acceptance suite: one test per criterion, each printing a PASS line with
its runtime (run with ``pytest tests/test_acceptance.py -v -s``).

Wall-clock budgets are asserted only under the compiled kernel backend; the
pure-Python fallback checks the same functional content at its own pace.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from seqrec import data, kernels
from seqrec.bandit import BanditConfig, Partition, Scheme, benchmark, locate, regret, run, update
from seqrec.curriculum import CourseState, RewardKind, load_curriculum
from seqrec.planner import (
    backward_induction,
    forward_search,
    recommend,
    state_counts,
)
from seqrec.simulate import (
    graduation_stats,
    hub_bottleneck_expected_time,
    resource_experiment,
)
from seqrec.synth import EnvModel, load_gpa_table

from .helpers import (
    expectimax_value,
    independent_curriculum,
    line_curriculum,
    random_curriculum,
    random_small_curriculum,
)

SEED = 20240
ENFORCE_TIMING = kernels.active_backend() == "compiled"


class _Criterion:
    def __init__(self, num, name, budget_s):
        self.num, self.name, self.budget = num, name, budget_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        print(f"ACCEPTANCE {self.num:02d} {self.name}: {status} "
              f"({elapsed:.2f}s, budget {self.budget:.0f}s)")
        if exc_type is None and ENFORCE_TIMING:
            assert elapsed < self.budget, (
                f"criterion {self.num} took {elapsed:.2f}s > {self.budget}s")
        return False


def test_01_counterexample_exactness():
    with _Criterion(1, "counter-example exactness", 1.0):
        cur = load_curriculum(data.path("counterexample.json"))
        table = backward_induction(forward_search(cur), RewardKind.ON_TIME)
        assert abs(table.q_value(0, 1, 0b01) - 0.81) <= 1e-12
        assert abs(table.q_value(0, 1, 0b11) - 0.784) <= 1e-12
        assert recommend(table, CourseState.empty(2), 1) == (0,)

        def eps(c, k):
            return Fraction(1, 10) if k == 1 else Fraction(1, 5)

        exact = expectimax_value(cur, RewardKind.ON_TIME, eps_fn=eps)
        assert exact == Fraction(81, 100)
        assert abs(table.root_value - float(exact)) <= 1e-12


def test_02_bruteforce_oracle_equivalence():
    with _Criterion(2, "brute-force oracle equivalence (50 instances)", 60.0):
        rng = np.random.default_rng(SEED)
        for i in range(50):
            n = int(rng.integers(2, 5))
            if i % 2:
                # dense: everything offered, loose prerequisites, full load
                cur = random_curriculum(
                    rng, n_min=n, n_max=n, t_min=2, t_max=3,
                    cap=min(n, 2), offer_prob=1.0, edge_prob=0.2, periods=(1,))
            else:
                cur = random_curriculum(
                    rng, n_min=n, n_max=n, t_min=2, t_max=4,
                    cap=1 if n == 4 else int(rng.integers(1, 3)))
            kind = RewardKind.ON_TIME if i % 2 else RewardKind.TIME_TO_GRADUATION
            table = backward_induction(forward_search(cur), kind)
            oracle = expectimax_value(cur, kind)
            assert abs(table.root_value - oracle) <= 1e-9, (i, cur)


def test_03_value_monotone_in_dominance():
    with _Criterion(3, "value monotone under state dominance (50 instances)", 60.0):
        rng = np.random.default_rng(SEED + 1)
        for i in range(50):
            cur, graph = random_small_curriculum(rng, max_states=200,
                                                 n_max=6, t_max=5)
            kind = RewardKind.ON_TIME if i % 2 else RewardKind.TIME_TO_GRADUATION
            table = backward_induction(graph, kind)
            for t in range(cur.horizon + 1):
                layer = graph.layers[t].tolist()
                for a in layer:
                    for b in layer:
                        if a & ~b == 0:  # a's passes are a subset of b's
                            assert table.values[(b, t)] >= table.values[(a, t)] - 1e-12


def test_04_maximal_load_recommendations():
    with _Criterion(4, "max-load recommendations without constraints", 30.0):
        rng = np.random.default_rng(SEED + 2)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            cap = int(rng.integers(1, 4))
            horizon = int(rng.integers(2, 6))
            eps = float(rng.uniform(0.05, 0.4))
            cur = independent_curriculum(n, cap=cap, horizon=horizon, eps=eps,
                                         load_factors=(1.0,))
            graph = forward_search(cur)
            table = backward_induction(graph, RewardKind.ON_TIME)
            for (bits, t), a in table.policy.items():
                if table.is_terminal_bits(bits):
                    continue
                remaining = n - bits.bit_count()
                assert a.bit_count() == min(cap, remaining), (n, cap, bits, t)


def test_05_layer_growth_laws():
    with _Criterion(5, "layer growth laws", 30.0):
        rng = np.random.default_rng(SEED + 3)
        for _ in range(30):
            cur = random_curriculum(rng, n_max=8)
            counts = state_counts(forward_search(cur))
            assert all(x <= y for x, y in zip(counts, counts[1:]))
        for n in range(2, 7):
            cur = independent_curriculum(n, cap=1, horizon=n + 2, eps=0.1)
            counts = state_counts(forward_search(cur))
            expect = [sum(math.comb(n, k) for k in range(min(t, n) + 1))
                      for t in range(n + 3)]
            assert counts == expect
        for n in (3, 5, 8):
            cur = line_curriculum(n, horizon=n + 3, eps=0.2)
            counts = state_counts(forward_search(cur))
            # the all-zero state stays reachable (idle action / failures),
            # so layer t holds the t+1 prefixes of the chain, capped once
            # the chain is complete
            assert counts == [min(t, n) + 1 for t in range(n + 4)]


def test_06_monte_carlo_matches_planner():
    with _Criterion(6, "simulator frequency matches planner value", 120.0):
        rng = np.random.default_rng(SEED + 4)
        n = 100_000
        for i in range(10):
            cur, graph = random_small_curriculum(
                rng, max_states=200, n_max=6, t_max=5, eps_range=(0.1, 0.45))
            table = backward_induction(graph, RewardKind.ON_TIME)
            rep = graduation_stats(cur, table, n=n, seed=SEED + i)
            v = table.root_value
            se = math.sqrt(max(v * (1.0 - v), 0.0) / n)
            assert abs(rep.on_time_prob - v) <= 3.0 * se + 1e-9, (i, v, rep.on_time_prob)


def test_07_resource_allocation_direction():
    with _Criterion(7, "rare-hub course dominates completion time", 60.0):
        n_dep, p, eps = 9, 0.2, 0.1
        assert p < 1.0 / (math.sqrt(n_dep) + 1.0)
        mean_hub, mean_dep = resource_experiment(n_dep, p, eps, n=100_000, seed=SEED)
        assert mean_hub > mean_dep
        predicted = hub_bottleneck_expected_time(n_dep, p, eps)  # = 140/9
        assert abs(mean_hub - predicted) / predicted <= 0.02


def test_08_bandit_invariants_and_flip_environment():
    with _Criterion(8, "partition invariants + per-half argmax", 120.0):
        # 1e5 fuzzed updates under an aggressive splitting schedule
        rng = np.random.default_rng(SEED + 5)
        n_arms, dim = 3, 2
        cfg = BanditConfig(n_arms, split_scale=6.0, split_exponent=1.2)
        part = Partition.fresh(dim, n_arms)
        n = 100_000
        thetas = rng.random((n, dim))
        arms = rng.integers(0, n_arms, n)
        gpas = rng.uniform(0.0, 4.0, n)
        for i in range(n):
            cluster = locate(part, thetas[i])
            update(part, cluster, int(arms[i]), float(gpas[i]), cfg)
            if i % 10_000 == 9_999:
                for theta in rng.random((50, dim)):
                    owners = [c for c in part.clusters() if c.contains(theta)]
                    assert len(owners) == 1
        total = sum(c.total for c in part.clusters())
        total += sum(c.total for c in part.archived)
        assert total == n

        # two arms whose optimum flips at theta = 1/2
        class FlipEnv:
            n_arms = 2
            context_dim = 1

            def sample_context(self, rng):
                return rng.random(1)

            def mean(self, theta, arm):
                return 3.5 if (arm == 0) == (theta[0] < 0.5) else 2.9

            def sample_reward(self, theta, arm, rng):
                return float(np.clip(rng.normal(self.mean(theta, arm), 0.3),
                                     0.0, 4.0))

            def best_mean(self, theta):
                return (0 if theta[0] < 0.5 else 1), 3.5

        hist = run(FlipEnv(), 20_000, BanditConfig(2), seed=SEED)
        tail = slice(-5000, None)
        theta = hist.theta[tail, 0]
        arm = hist.arm[tail]
        assert np.argmax(np.bincount(arm[theta < 0.5], minlength=2)) == 0
        assert np.argmax(np.bincount(arm[theta >= 0.5], minlength=2)) == 1


def _table_env():
    return EnvModel(table=load_gpa_table(data.path("gpa_table_sat.csv")),
                    unavailable="marginal")


def test_09_regret_sublinearity():
    with _Criterion(9, "regret sublinear on the GPA-table environment", 300.0):
        env = _table_env()
        n = 100_000
        hist = run(env, n, BanditConfig(env.n_arms), seed=SEED)
        series = regret(hist)
        idx = np.unique(np.geomspace(10_000, n, 60).astype(int)) - 1
        slope = np.polyfit(np.log(idx + 1.0),
                           np.log(np.maximum(series.cumulative[idx], 1e-9)), 1)[0]
        assert slope < 0.95, slope
        ratio = series.average[n - 1] / series.average[999]
        assert ratio < 0.25, ratio


def test_10_benchmark_ordering():
    with _Criterion(10, "oracle > adaptive > context-blind; random near 3.26", 300.0):
        env = _table_env()
        n = 100_000
        finals = {s: benchmark(s, env, n, SEED).curve[-1] for s in Scheme}
        assert finals[Scheme.ORACLE] > finals[Scheme.ADAPTIVE]
        assert finals[Scheme.ADAPTIVE] > finals[Scheme.NO_PERSONALIZATION]
        assert abs(finals[Scheme.RANDOM] - 3.26) <= 0.05


def test_11_reconstruction_direction_and_saturation():
    with _Criterion(11, "richer calendar strictly better; counts saturate", 300.0):
        rich = load_curriculum(data.path("mae19_rich.json"))
        sparse = load_curriculum(data.path("mae19_sparse.json"))
        results = {}
        for name, cur in (("rich", rich), ("sparse", sparse)):
            graph = forward_search(cur)
            counts = state_counts(graph)
            sat = next(t for t, c in enumerate(counts) if c == counts[-1])
            assert sat < cur.horizon, (name, counts)
            table = backward_induction(graph, RewardKind.ON_TIME)
            rep = graduation_stats(cur, table, n=20_000, seed=SEED)
            results[name] = (table.root_value, rep.expected_time)
        assert results["rich"][0] > results["sparse"][0]
        assert results["rich"][1] < results["sparse"][1]
