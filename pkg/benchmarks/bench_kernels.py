"""Benchmark the compiled kernels against the pure-Python fallback.

Runs forward search, backward induction and batch Monte-Carlo simulation
on the bundled 19-course curriculum under every available backend and
checks that the outputs agree exactly.

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from seqrec import data, kernels, planner, simulate
from seqrec.curriculum import RewardKind, load_curriculum


def time_backend(name, cur, n_mc, seed):
    with kernels.forced(name):
        t0 = time.perf_counter()
        graph = planner.forward_search(cur)
        t_fwd = time.perf_counter() - t0
        t0 = time.perf_counter()
        table = planner.backward_induction(graph, RewardKind.ON_TIME)
        t_bwd = time.perf_counter() - t0
        t0 = time.perf_counter()
        grads = simulate.graduation_quarters(cur, table, n_mc, seed)
        t_mc = time.perf_counter() - t0
    return graph, table, grads, (t_fwd, t_bwd, t_mc)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="fewer Monte-Carlo samples")
    ap.add_argument("--seed", type=int, default=20240)
    args = ap.parse_args()
    n_mc = 20_000 if args.quick else 200_000

    cur = load_curriculum(data.path("mae19_rich.json"))
    backends = kernels.available_backends()
    print(f"curriculum: {cur.n_courses} courses, horizon {cur.horizon}, cap {cur.cap}")
    print(f"backends: {', '.join(backends)} (active: {kernels.active_backend()})")
    print(f"monte-carlo trajectories: {n_mc}\n")

    results = {}
    for name in backends:
        graph, table, grads, times = time_backend(name, cur, n_mc, args.seed)
        results[name] = (graph, table, grads)
        n_and = sum(len(a) for a in graph.and_layers)
        print(f"[{name:8s}] forward search  {times[0]:8.3f} s   "
              f"({n_and} AND nodes)")
        print(f"[{name:8s}] backward induct {times[1]:8.3f} s   "
              f"(V(s0) = {table.root_value:.6f})")
        print(f"[{name:8s}] simulate {n_mc:>7d} {times[2]:8.3f} s   "
              f"(on-time {np.mean(grads >= 0):.4f})")

    if len(results) == 2:
        (g1, t1, s1), (g2, t2, s2) = results.values()
        assert all(np.array_equal(a, b) for a, b in zip(g1.layers, g2.layers))
        assert t1.values == t2.values and t1.policy == t2.policy
        assert np.array_equal(s1, s2)
        print("\nbackends agree exactly (graphs, tables, trajectories)")


if __name__ == "__main__":
    main()
