"""Curriculum domain model: courses, prerequisites, availability, pass/fail risk.

A curriculum is a set of courses split into mandatory and elective groups,
a prerequisite DAG over them, a per-quarter offering calendar, a failure
model giving the probability of failing each course as a function of the
simultaneous course load, a per-quarter cap on courses taken, a horizon in
quarters and an elective quota for graduation.

Course ids are dense integers with mandatory courses occupying 0..M-1.
Completion states are bit vectors over the courses (bit n set = course n
passed), wrapped in :class:`CourseState`.  All types are immutable after
validation and every operation here is a pure function of its inputs, so
shared concurrent reads are safe.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    CycleDetected,
    ElectivePrereqOfMandatory,
    NeverOffered,
    QuarterOutOfRange,
    RangeError,
    WidthMismatch,
)

# Failure multipliers by simultaneous-course count (index k-1 = load k).
# Loads beyond the table reuse the last entry.
DEFAULT_LOAD_FACTORS = (1.0, 1.0, 1.1, 1.25)

# States are stored in 64-bit machine words in the hot kernels.
MAX_COURSES = 62


@dataclass(frozen=True)
class Course:
    """One course: dense id, display code, mandatory flag, prerequisite ids."""

    id: int
    code: str
    mandatory: bool
    prerequisites: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.id in self.prerequisites:
            raise RangeError(f"course {self.code} lists itself as a prerequisite")


@dataclass(frozen=True)
class AvailabilityCalendar:
    """Per-course offering schedule.

    ``pattern[n]`` is a repeating tuple of booleans of length ``period``;
    course n is offered in quarter t (1-based) iff ``pattern[n][(t-1) % period]``.
    ``explicit[n]``, when set, overrides the pattern with one boolean per
    quarter of the horizon (for aperiodic cases such as once every two years
    within a fixed horizon).
    """

    period: int
    pattern: tuple[tuple[bool, ...], ...]
    explicit: tuple[tuple[bool, ...], ...] | None = None

    def offered(self, course_id: int, t: int) -> bool:
        if self.explicit is not None:
            row = self.explicit[course_id]
            return t <= len(row) and row[t - 1]
        return self.pattern[course_id][(t - 1) % self.period]

    def offered_mask(self, n_courses: int, t: int) -> int:
        """Bitmask of courses offered in quarter t."""
        mask = 0
        for n in range(n_courses):
            if self.offered(n, t):
                mask |= 1 << n
        return mask


@dataclass(frozen=True)
class FailureModel:
    """Failure probability per course as a function of simultaneous load.

    eps(n, k) = clamp(base[n] * load_factors[min(k, len)-1], 0, 1).
    ``load_factors`` must be non-negative and non-decreasing so that
    eps(n, k) is non-decreasing in k.
    """

    base: tuple[float, ...]
    load_factors: tuple[float, ...] = DEFAULT_LOAD_FACTORS

    def __post_init__(self):
        for b in self.base:
            if not 0.0 <= b <= 1.0:
                raise RangeError(f"base failure probability {b} outside [0, 1]")
        if not self.load_factors:
            raise RangeError("load_factors must be non-empty")
        prev = 0.0
        for f in self.load_factors:
            if f < 0.0:
                raise RangeError(f"load factor {f} is negative")
            if f < prev:
                raise RangeError("load factors must be non-decreasing")
            prev = f

    @classmethod
    def uniform(cls, eps: float, n_courses: int, load_factors=DEFAULT_LOAD_FACTORS):
        return cls(base=(eps,) * n_courses, load_factors=tuple(load_factors))

    def eps(self, course_id: int, k: int) -> float:
        """Probability of failing ``course_id`` when taking k courses at once."""
        if k < 1:
            raise RangeError(f"simultaneous course count {k} < 1")
        factor = self.load_factors[min(k, len(self.load_factors)) - 1]
        return min(1.0, max(0.0, self.base[course_id] * factor))

    def table(self, cap: int):
        """(N, cap) array with entry [n, k-1] = eps(n, k); used by the kernels."""
        import numpy as np

        out = np.empty((len(self.base), cap), dtype=np.float64)
        for n in range(len(self.base)):
            for k in range(1, cap + 1):
                out[n, k - 1] = self.eps(n, k)
        return out

    def zeroed(self) -> "FailureModel":
        return FailureModel(base=(0.0,) * len(self.base), load_factors=self.load_factors)


@dataclass(frozen=True)
class CourseState:
    """Completion state: bit n set iff course n has been passed."""

    bits: int
    width: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.width:
            raise RangeError(f"state {self.bits:#x} does not fit in {self.width} bits")

    @classmethod
    def empty(cls, width: int) -> "CourseState":
        return cls(0, width)

    @classmethod
    def from_ids(cls, ids: Iterable[int], width: int) -> "CourseState":
        bits = 0
        for n in ids:
            bits |= 1 << n
        return cls(bits, width)

    def ids(self) -> tuple[int, ...]:
        return tuple(n for n in range(self.width) if self.bits >> n & 1)

    def count(self) -> int:
        return self.bits.bit_count()

    def passed(self, course_id: int) -> bool:
        return bool(self.bits >> course_id & 1)

    def with_passed(self, ids: Iterable[int]) -> "CourseState":
        return CourseState.from_ids(ids, self.width)._union(self)

    def _union(self, other: "CourseState") -> "CourseState":
        return CourseState(self.bits | other.bits, self.width)


class RewardKind(Enum):
    """Terminal reward shape: on-time indicator or remaining-time credit."""

    ON_TIME = "on-time"
    TIME_TO_GRADUATION = "time-to-grad"


@dataclass(frozen=True)
class Curriculum:
    """Validated curriculum. Build with :func:`validate` or :func:`load_curriculum`."""

    courses: tuple[Course, ...]
    calendar: AvailabilityCalendar
    failure: FailureModel
    cap: int
    horizon: int
    elective_quota: int

    @property
    def n_courses(self) -> int:
        return len(self.courses)

    @property
    def n_mandatory(self) -> int:
        return sum(1 for c in self.courses if c.mandatory)

    @property
    def mandatory_mask(self) -> int:
        return (1 << self.n_mandatory) - 1

    @property
    def elective_mask(self) -> int:
        return ((1 << self.n_courses) - 1) & ~self.mandatory_mask

    def prereq_masks(self) -> list[int]:
        """Per-course bitmask of prerequisite courses."""
        out = []
        for c in self.courses:
            m = 0
            for p in c.prerequisites:
                m |= 1 << p
            out.append(m)
        return out

    def code_to_id(self) -> dict[str, int]:
        return {c.code: c.id for c in self.courses}

    def with_failure(self, failure: FailureModel) -> "Curriculum":
        return Curriculum(self.courses, self.calendar, failure, self.cap,
                          self.horizon, self.elective_quota)

    def to_json_dict(self) -> dict:
        """Canonical JSON form; also the hashing basis for policy files."""
        rows = []
        for c in self.courses:
            if self.calendar.explicit is not None:
                offered = list(self.calendar.explicit[c.id])
            else:
                offered = list(self.calendar.pattern[c.id])
            rows.append({
                "code": c.code,
                "mandatory": c.mandatory,
                "prereqs": sorted(self.courses[p].code for p in c.prerequisites),
                "offered": offered,
                "fail_base": self.failure.base[c.id],
            })
        return {
            "cap": self.cap,
            "horizon": self.horizon,
            "elective_quota": self.elective_quota,
            "period": self.calendar.period,
            "courses": rows,
            "load_factors": list(self.failure.load_factors),
        }


def _find_cycle(n_courses: int, prereqs: Sequence[frozenset[int]]) -> list[int] | None:
    """Return the course ids on some prerequisite cycle, or None."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * n_courses
    stack_path: list[int] = []

    def visit(n):
        color[n] = GRAY
        stack_path.append(n)
        for m in sorted(prereqs[n]):
            if color[m] == GRAY:
                return stack_path[stack_path.index(m):]
            if color[m] == WHITE:
                cyc = visit(m)
                if cyc is not None:
                    return cyc
        stack_path.pop()
        color[n] = BLACK
        return None

    for n in range(n_courses):
        if color[n] == WHITE:
            cyc = visit(n)
            if cyc is not None:
                return cyc
    return None


def validate(curriculum: Curriculum) -> Curriculum:
    """Check structural invariants; return the curriculum or raise.

    Enforced: acyclic prerequisite DAG, no elective as a (transitive)
    prerequisite of a mandatory course, every course offered at least once,
    field ranges, and the 62-course kernel width limit.
    """
    cur = curriculum
    n = cur.n_courses
    if n == 0:
        raise RangeError("curriculum has no courses")
    if n > MAX_COURSES:
        raise RangeError(f"{n} courses exceeds the supported maximum of {MAX_COURSES}")
    if cur.cap < 1:
        raise RangeError(f"cap {cur.cap} < 1")
    if cur.horizon < 1:
        raise RangeError(f"horizon {cur.horizon} < 1")
    n_elective = n - cur.n_mandatory
    if not 0 <= cur.elective_quota <= n_elective:
        raise RangeError(
            f"elective quota {cur.elective_quota} outside 0..{n_elective}")
    for i, c in enumerate(cur.courses):
        if c.id != i:
            raise RangeError(f"course ids must be dense; got {c.id} at position {i}")
        if c.mandatory != (i < cur.n_mandatory):
            raise RangeError("mandatory courses must precede electives")
        for p in c.prerequisites:
            if not 0 <= p < n:
                raise RangeError(f"course {c.code} has invalid prerequisite id {p}")
    if len(cur.failure.base) != n:
        raise RangeError("failure model size does not match course count")

    prereqs = [c.prerequisites for c in cur.courses]
    cycle = _find_cycle(n, prereqs)
    if cycle is not None:
        raise CycleDetected(cycle)

    # Transitive reach from any elective into a mandatory course is banned.
    for m in range(cur.n_mandatory):
        seen = set()
        frontier = list(prereqs[m])
        while frontier:
            p = frontier.pop()
            if p in seen:
                continue
            seen.add(p)
            if not cur.courses[p].mandatory:
                raise ElectivePrereqOfMandatory(p, m)
            frontier.extend(prereqs[p])

    cal = cur.calendar
    if cal.period < 1:
        raise RangeError(f"calendar period {cal.period} < 1")
    if cal.explicit is not None:
        if len(cal.explicit) != n:
            raise RangeError("explicit calendar size does not match course count")
        for c in cur.courses:
            if not any(cal.explicit[c.id]):
                raise NeverOffered(c.code)
    else:
        if len(cal.pattern) != n:
            raise RangeError("calendar pattern size does not match course count")
        for c in cur.courses:
            if len(cal.pattern[c.id]) != cal.period:
                raise RangeError(f"offering pattern of {c.code} does not match period")
            if not any(cal.pattern[c.id]):
                raise NeverOffered(c.code)
    return cur


def feasible_courses(curriculum: Curriculum, t: int, state: CourseState) -> set[int]:
    """Courses electable in quarter t from ``state``.

    A course is feasible iff it is not yet passed, it is offered in quarter
    t, and all of its prerequisites are passed.
    """
    if not 1 <= t <= curriculum.horizon:
        raise QuarterOutOfRange(t, curriculum.horizon)
    _check_width(curriculum, state)
    out = set()
    bits = state.bits
    for c in curriculum.courses:
        if bits >> c.id & 1:
            continue
        if not curriculum.calendar.offered(c.id, t):
            continue
        if all(bits >> p & 1 for p in c.prerequisites):
            out.add(c.id)
    return out


def action_sets(curriculum: Curriculum, t: int, state: CourseState) -> list[tuple[int, ...]]:
    """All course subsets takeable in quarter t, capped at ``cap`` courses.

    Includes the empty action (a student may always take no course).
    Deterministic order: by subset size, then lexicographically by the
    sorted course ids.
    """
    feas = sorted(feasible_courses(curriculum, t, state))
    out: list[tuple[int, ...]] = []
    for k in range(min(curriculum.cap, len(feas)) + 1):
        out.extend(itertools.combinations(feas, k))
    return out


def is_terminal(curriculum: Curriculum, state: CourseState) -> bool:
    """True iff every mandatory course is passed and the elective quota is met."""
    _check_width(curriculum, state)
    m = curriculum.mandatory_mask
    if state.bits & m != m:
        return False
    return (state.bits & curriculum.elective_mask).bit_count() >= curriculum.elective_quota


def reward(curriculum: Curriculum, kind: RewardKind, state: CourseState, t: int) -> float:
    """Reward for holding ``state`` at the end of quarter t.

    Zero for non-terminal states; otherwise 1 under ON_TIME or T - t + 1
    under TIME_TO_GRADUATION.
    """
    if not 1 <= t <= curriculum.horizon:
        raise QuarterOutOfRange(t, curriculum.horizon)
    if not is_terminal(curriculum, state):
        return 0.0
    return terminal_value(kind, t, curriculum.horizon)


def terminal_value(kind: RewardKind, t: int, horizon: int) -> float:
    """Terminal reward by arrival quarter; accepts t = 0 for the degenerate
    case of a curriculum whose initial state is already terminal."""
    if kind is RewardKind.ON_TIME:
        return 1.0
    return float(horizon - t + 1)


def dominates(state: CourseState, other: CourseState) -> bool:
    """True iff every course passed in ``state`` is also passed in ``other``."""
    if state.width != other.width:
        raise WidthMismatch(f"widths {state.width} != {other.width}")
    return state.bits & ~other.bits == 0


def _check_width(curriculum: Curriculum, state: CourseState):
    if state.width != curriculum.n_courses:
        raise WidthMismatch(
            f"state width {state.width} != curriculum size {curriculum.n_courses}")


def curriculum_from_dict(doc: dict) -> Curriculum:
    """Build and validate a curriculum from its JSON form.

    Codes map to dense ids deterministically: mandatory courses first in
    input order, then electives in input order.  Each course's ``offered``
    row is a repeating pattern when its length equals ``period``, otherwise
    an explicit per-quarter table of length ``horizon``.
    """
    from .errors import ParseError

    try:
        cap = int(doc["cap"])
        horizon = int(doc["horizon"])
        quota = int(doc["elective_quota"])
        period = int(doc["period"])
        rows = doc["courses"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed curriculum document: {exc}") from exc

    ordered = [r for r in rows if r.get("mandatory")] + [r for r in rows if not r.get("mandatory")]
    codes = [r["code"] for r in ordered]
    if len(set(codes)) != len(codes):
        raise ParseError("duplicate course codes")
    ids = {code: i for i, code in enumerate(codes)}

    courses = []
    offered_rows = []
    base = []
    for i, r in enumerate(ordered):
        try:
            prereqs = frozenset(ids[p] for p in r.get("prereqs", []))
        except KeyError as exc:
            raise ParseError(f"unknown prerequisite code {exc} for {r['code']}") from exc
        courses.append(Course(id=i, code=r["code"], mandatory=bool(r.get("mandatory")),
                              prerequisites=prereqs))
        offered_rows.append(tuple(bool(x) for x in r["offered"]))
        base.append(float(r.get("fail_base", 0.0)))

    lengths = {len(row) for row in offered_rows}
    if lengths == {period}:
        calendar = AvailabilityCalendar(period=period, pattern=tuple(offered_rows))
    elif lengths == {horizon}:
        calendar = AvailabilityCalendar(
            period=period,
            pattern=tuple(() for _ in offered_rows),
            explicit=tuple(offered_rows),
        )
    else:
        raise ParseError(
            f"offered rows must all have length period={period} or horizon={horizon}")

    factors = tuple(float(x) for x in doc.get("load_factors", DEFAULT_LOAD_FACTORS))
    failure = FailureModel(base=tuple(base), load_factors=factors)
    return validate(Curriculum(
        courses=tuple(courses),
        calendar=calendar,
        failure=failure,
        cap=cap,
        horizon=horizon,
        elective_quota=quota,
    ))


def load_curriculum(path) -> Curriculum:
    """Load and validate a curriculum JSON file."""
    from .errors import ParseError

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read curriculum {path}: {exc}") from exc
    return curriculum_from_dict(doc)


def curriculum_sha256(curriculum: Curriculum) -> str:
    """Content hash of the canonical JSON form; embedded in policy files."""
    import hashlib

    blob = json.dumps(curriculum.to_json_dict(), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
