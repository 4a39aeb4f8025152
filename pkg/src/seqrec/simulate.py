"""Monte-Carlo simulation of student trajectories under a policy.

Sampling uses a counter-based generator (seed, trajectory, quarter, draw)
so reports are bit-identical across platforms, backends and any parallel
trajectory schedule.  `graduation_stats` derives per-trajectory substreams
from its seed; trajectory j of a batch equals `simulate_student` run with
`kernels.substream(seed, j)`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .curriculum import Curriculum, CourseState, action_sets, is_terminal
from .errors import RangeError, UnknownState

DEFAULT_SEED = 20240


@dataclass(frozen=True)
class TrajectoryStep:
    quarter: int
    state_before: CourseState
    action: tuple[int, ...]
    outcomes: dict  # course id -> passed?


@dataclass(frozen=True)
class Trajectory:
    steps: list
    graduated: bool
    graduation_quarter: int | None


@dataclass(frozen=True)
class GradReport:
    """Aggregate graduation statistics over n sampled trajectories.

    ``expected_time`` is conditional on graduating; ``n_failed`` counts the
    students who did not finish within the horizon.  ``ci_halfwidth`` is the
    95% normal-approximation half-width on ``on_time_prob``.
    """

    n: int
    on_time_prob: float
    expected_time: float | None
    time_histogram: dict
    n_failed: int
    ci_halfwidth: float

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "on_time_prob": self.on_time_prob,
            "expected_time": self.expected_time,
            "time_histogram": {str(k): v for k, v in sorted(self.time_histogram.items())},
            "n_failed": self.n_failed,
            "ci_halfwidth": self.ci_halfwidth,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GradReport":
        return cls(
            n=doc["n"], on_time_prob=doc["on_time_prob"],
            expected_time=doc["expected_time"],
            time_histogram={int(k): v for k, v in doc["time_histogram"].items()},
            n_failed=doc["n_failed"], ci_halfwidth=doc["ci_halfwidth"])


def simulate_student(curriculum: Curriculum, policy, seed: int) -> Trajectory:
    """Sample one trajectory, validating every action against the model.

    At each quarter the policy's recommendation is taken and each course
    passes independently with probability 1 - eps(course, load).  Stops at
    the first terminal state or at the horizon.  Deterministic given seed.
    """
    cur = curriculum
    eps = cur.failure
    bits = 0
    steps: list[TrajectoryStep] = []
    state = CourseState(bits, cur.n_courses)
    if is_terminal(cur, state):
        return Trajectory(steps=[], graduated=True, graduation_quarter=0)
    for t in range(1, cur.horizon + 1):
        state = CourseState(bits, cur.n_courses)
        a = policy.action_bits(bits, t - 1)
        if a is None:
            raise UnknownState(bits, t, "policy gap")
        combo = tuple(c for c in range(cur.n_courses) if a >> c & 1)
        legal = action_sets(cur, t, state)
        if combo not in legal:
            raise UnknownState(bits, t, f"policy action {combo} violates constraints")
        k = len(combo)
        outcomes = {}
        for idx, c in enumerate(combo):
            passed = kernels.draw_u01(seed, t, idx) >= eps.eps(c, k)
            outcomes[c] = passed
            if passed:
                bits |= 1 << c
        steps.append(TrajectoryStep(quarter=t, state_before=state,
                                    action=combo, outcomes=outcomes))
        if is_terminal(cur, CourseState(bits, cur.n_courses)):
            return Trajectory(steps=steps, graduated=True, graduation_quarter=t)
    return Trajectory(steps=steps, graduated=False, graduation_quarter=None)


def graduation_quarters(curriculum: Curriculum, policy, n: int, seed: int) -> np.ndarray:
    """Graduation quarter per trajectory (-1 = none); the batch primitive."""
    if n < 1:
        raise RangeError(f"sample count {n} < 1")
    cur = curriculum
    pol_states, pol_actions = zip(*policy.quarter_tables())
    try:
        return kernels.simulate_batch(
            cur.horizon, n, seed,
            cur.mandatory_mask, cur.elective_mask, cur.elective_quota,
            cur.failure.table(cur.cap), list(pol_states), list(pol_actions))
    except LookupError as exc:
        t, bits = (int(x) for x in str(exc).split(","))
        raise UnknownState(bits, t, "policy gap") from None


def graduation_stats(curriculum: Curriculum, policy, n: int, seed: int) -> GradReport:
    """Aggregate n independent trajectories into a GradReport.

    Deterministic given (n, seed); trajectories use per-index substreams so
    aggregation order cannot matter.
    """
    grads = graduation_quarters(curriculum, policy, n, seed)
    graduated = grads >= 0
    n_grad = int(np.count_nonzero(graduated))
    p = n_grad / n
    hist: dict[int, int] = {}
    if n_grad:
        qs, counts = np.unique(grads[graduated], return_counts=True)
        hist = {int(q): int(c) for q, c in zip(qs, counts)}
    expected = float(grads[graduated].mean()) if n_grad else None
    return GradReport(
        n=n, on_time_prob=p, expected_time=expected, time_histogram=hist,
        n_failed=n - n_grad,
        ci_halfwidth=1.96 * float(np.sqrt(p * (1.0 - p) / n)))


def histogram_csv(report: GradReport) -> str:
    lines = ["quarter,count"]
    lines += [f"{q},{c}" for q, c in sorted(report.time_histogram.items())]
    return "\n".join(lines) + "\n"


def load_grad_report(path) -> GradReport:
    import json

    from .errors import ParseError

    try:
        with open(path) as fh:
            return GradReport.from_json_dict(json.load(fh))
    except (OSError, KeyError, ValueError) as exc:
        raise ParseError(f"cannot read graduation report {path}: {exc}") from exc


def read_histogram_csv(text: str) -> dict:
    rows = text.strip().splitlines()
    assert rows[0] == "quarter,count"
    return {int(q): int(c) for q, c in (r.split(",") for r in rows[1:])}


def resource_experiment(n_courses: int, p: float, eps: float, n: int, seed: int,
                        max_quarters: int = 10_000) -> tuple[float, float]:
    """Mean completion times under two teaching-resource allocations.

    A hub course is the prerequisite of ``n_courses`` dependent courses;
    one course per quarter may be taken (cap 1).  Case 1: the hub itself is
    offered each quarter with probability p, everything else always.
    Case 2: one dependent course is offered with probability p, everything
    else always.  The simulated student is greedy: hub first, then the
    rarely-offered course whenever available, then any remaining course.
    Returns (mean_time_case1, mean_time_case2) over n students each.

    With the hub rare, expected completion is 1/((1-eps)p) + N/(1-eps)
    quarters; with a dependent course rare the student works through the
    others while waiting, which is faster whenever p < 1/(sqrt(N) + 1).
    """
    if not 0.0 < p < 1.0:
        raise RangeError(f"availability probability {p} outside (0, 1)")
    if not 0.0 <= eps < 1.0:
        raise RangeError(f"failure probability {eps} outside [0, 1)")
    if n < 1:
        raise RangeError(f"sample count {n} < 1")

    rng = np.random.default_rng(seed)
    means = []
    for rare_is_hub in (True, False):
        done_at = np.zeros(n, dtype=np.int64)
        hub_passed = np.zeros(n, dtype=bool)
        rare_passed = np.zeros(n, dtype=bool)
        n_common = n_courses if rare_is_hub else n_courses - 1
        common_left = np.full(n, n_common, dtype=np.int64)
        alive = np.arange(n)
        t = 0
        while len(alive) and t < max_quarters:
            t += 1
            offered = rng.random(len(alive)) < p
            passes = rng.random(len(alive)) >= eps
            hub = hub_passed[alive]
            rare = rare_passed[alive]
            left = common_left[alive]
            if rare_is_hub:
                # Hub rarely offered; everything else gated behind it.
                take_hub = ~hub & offered
                take_common = hub & (left > 0)
                hub_passed[alive[take_hub & passes]] = True
                common_left[alive[take_common & passes]] -= 1
            else:
                take_hub = ~hub
                take_rare = hub & ~rare & offered
                take_common = hub & ~take_rare & (left > 0)
                hub_passed[alive[take_hub & passes]] = True
                rare_passed[alive[take_rare & passes]] = True
                common_left[alive[take_common & passes]] -= 1
            finished = hub_passed[alive] & (common_left[alive] == 0) & (
                rare_passed[alive] if not rare_is_hub else True)
            done_at[alive[finished]] = t
            alive = alive[~finished]
        if len(alive):
            done_at[alive] = max_quarters
        means.append(float(done_at.mean()))
    return means[0], means[1]


def hub_bottleneck_expected_time(n_courses: int, p: float, eps: float) -> float:
    """Closed-form mean completion time when the hub is the rare course."""
    return 1.0 / ((1.0 - eps) * p) + n_courses / (1.0 - eps)
