"""Shared test machinery: instance generators and the brute-force oracle.

The oracle evaluates the optimal expected reward by exhaustive recursion
over every action/outcome branch of the decision tree, recomputing
feasibility from the raw course data at every node.  No memoization, no
layered graph: it shares nothing with the planner's code path beyond the
curriculum data structures, so agreement is meaningful evidence.
"""

from __future__ import annotations

import itertools

from seqrec.curriculum import (
    AvailabilityCalendar,
    Course,
    Curriculum,
    FailureModel,
    RewardKind,
    validate,
)


def _feasible_ids(cur: Curriculum, t: int, bits: int) -> list[int]:
    out = []
    for c in cur.courses:
        if bits >> c.id & 1:
            continue
        if not cur.calendar.offered(c.id, t):
            continue
        if all(bits >> p & 1 for p in c.prerequisites):
            out.append(c.id)
    return out


def _terminal_bits(cur: Curriculum, bits: int) -> bool:
    m = cur.mandatory_mask
    return bits & m == m and (bits & cur.elective_mask).bit_count() >= cur.elective_quota


def expectimax_value(cur: Curriculum, kind: RewardKind, bits: int = 0, t: int = 0,
                     eps_fn=None):
    """Optimal value of holding ``bits`` at the end of quarter t, by
    exhaustive policy-tree enumeration.

    ``eps_fn(course, k)`` may supply exact probabilities (e.g. Fractions);
    it defaults to the curriculum's failure model.  Terminal rewards use
    integers so exact arithmetic propagates.
    """
    if eps_fn is None:
        eps_fn = cur.failure.eps
    one = eps_fn(0, 1) * 0 + 1  # 1 in the arithmetic of eps_fn's returns

    def terminal_reward(arrival):
        if kind is RewardKind.ON_TIME:
            return one
        return one * (cur.horizon - arrival + 1)

    def rec(bits, t):
        if _terminal_bits(cur, bits):
            return terminal_reward(t)
        if t == cur.horizon:
            return one * 0
        feas = _feasible_ids(cur, t + 1, bits)
        best = one * 0
        for k in range(min(cur.cap, len(feas)) + 1):
            for combo in itertools.combinations(feas, k):
                q = one * 0
                for outcome in range(1 << k):
                    p = one
                    succ = bits
                    for b, c in enumerate(combo):
                        if outcome >> b & 1:
                            p = p * eps_fn(c, k)
                        else:
                            p = p * (one - eps_fn(c, k))
                            succ |= 1 << c
                    if p != 0:
                        q = q + p * rec(succ, t + 1)
                if q > best:
                    best = q
        return best

    return rec(bits, t)


def make_curriculum(prereqs, *, cap, horizon, n_mandatory=None, elective_quota=0,
                    patterns=None, period=1, eps=0.1, load_factors=(1.0,)):
    """Small-instance constructor: prereqs[i] = iterable of prerequisite ids."""
    n = len(prereqs)
    n_mandatory = n if n_mandatory is None else n_mandatory
    courses = tuple(
        Course(id=i, code=f"K{i}", mandatory=i < n_mandatory,
               prerequisites=frozenset(prereqs[i]))
        for i in range(n))
    if patterns is None:
        patterns = tuple((True,) * period for _ in range(n))
    base = (eps,) * n if isinstance(eps, float) else tuple(eps)
    return validate(Curriculum(
        courses=courses,
        calendar=AvailabilityCalendar(period=period, pattern=tuple(patterns)),
        failure=FailureModel(base=base, load_factors=tuple(load_factors)),
        cap=cap, horizon=horizon, elective_quota=elective_quota))


def line_curriculum(n, *, cap=1, horizon, eps=0.1):
    return make_curriculum([[i - 1] if i else [] for i in range(n)],
                           cap=cap, horizon=horizon, eps=eps)


def independent_curriculum(n, *, cap, horizon, eps=0.1, load_factors=(1.0,)):
    return make_curriculum([[] for _ in range(n)], cap=cap, horizon=horizon,
                           eps=eps, load_factors=load_factors)


def random_curriculum(rng, *, n_max=6, t_max=5, c_max=3, all_mandatory=False,
                      edge_prob=0.4, offer_prob=0.75, eps_range=(0.05, 0.35),
                      periods=(1, 2, 3), n_min=2, t_min=1, cap=None):
    """Random validated curriculum; forward edges only, so always a DAG and
    never an elective prerequisite of a mandatory course."""
    n = int(rng.integers(n_min, n_max + 1))
    n_mand = n if all_mandatory else int(rng.integers(1, n + 1))
    quota = 0 if n_mand == n else int(rng.integers(0, n - n_mand + 1))
    prereqs = [set() for _ in range(n)]
    for j in range(n):
        for i in range(j):
            if rng.random() < edge_prob:
                prereqs[j].add(i)
    period = int(rng.choice(periods))
    patterns = []
    for _ in range(n):
        row = [bool(rng.random() < offer_prob) for _ in range(period)]
        if not any(row):
            row[int(rng.integers(period))] = True
        patterns.append(tuple(row))
    eps = tuple(float(rng.uniform(*eps_range)) for _ in range(n))
    return make_curriculum(
        prereqs, cap=cap if cap is not None else int(rng.integers(1, c_max + 1)),
        horizon=int(rng.integers(t_min, t_max + 1)),
        n_mandatory=n_mand, elective_quota=quota,
        patterns=patterns, period=period, eps=eps)


def random_small_curriculum(rng, max_states, **kwargs):
    """Rejection-sample a curriculum whose total state count stays small."""
    from seqrec import planner

    while True:
        cur = random_curriculum(rng, **kwargs)
        graph = planner.forward_search(cur)
        if sum(len(layer) for layer in graph.layers) <= max_states:
            return cur, graph
