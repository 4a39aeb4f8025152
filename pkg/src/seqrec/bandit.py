"""Online policy personalization: adaptive-partition contextual bandit.

Students arrive one at a time with a context vector in [0,1]^W.  The
learner keeps a dyadic hypercube partition of the context space; each
active cell holds per-arm pull counters and sample-mean GPA estimates.
For each student it locates the cell, explores any arm whose counter is
below the exploration control gamma(i, l), otherwise exploits the highest
mean; once a cell has seen zeta(l) students it splits into 2^W children.

The learner is a strictly sequential state machine (single writer); runs
are deterministic given the seed.  Benchmarks for the oracle / random /
context-blind baselines live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Protocol

import numpy as np

from .errors import ContextOutOfRange, LengthMismatch, RangeError

GPA_MAX = 4.0

# Defaults tuned on the bundled GPA-table environment so that exploration
# decays within ~10^4 students; all overridable per config.  A small alpha
# keeps the per-level exploration budget 2^(2*alpha*l) * ln(i) from
# swallowing whole cells at practical student counts.
DEFAULT_ALPHA = 0.25
DEFAULT_SPLIT_EXPONENT = 2.0
DEFAULT_SPLIT_SCALE_PER_ARM = 4.0


class Phase(Enum):
    EXPLORE = "explore"
    EXPLOIT = "exploit"


class GpaEnvironment(Protocol):
    """What `run` needs from an environment (synth.EnvModel satisfies it)."""

    n_arms: int
    context_dim: int

    def sample_context(self, rng) -> np.ndarray: ...

    def sample_reward(self, theta, arm: int, rng) -> float: ...


@dataclass(frozen=True)
class BanditConfig:
    """Arm count and control-function parameters.

    gamma(i, l) = 2^(2*alpha*l) * ln i   (exploration threshold)
    zeta(l) = split_scale * 2^(split_exponent * l)   (split threshold)

    ``split_scale`` defaults to 4 * n_arms so a fresh cell forces a few
    pulls per arm before it can split.  ``max_level`` freezes refinement
    (0 = context-blind single cell).  ``inherit_stats`` copies a parent's
    counters and means into its children instead of zeroing them.
    """

    n_arms: int
    alpha: float = DEFAULT_ALPHA
    split_scale: float | None = None
    split_exponent: float = DEFAULT_SPLIT_EXPONENT
    max_level: int | None = None
    inherit_stats: bool = False

    def __post_init__(self):
        if self.n_arms < 1:
            raise RangeError(f"n_arms {self.n_arms} < 1")
        if self.alpha <= 0:
            raise RangeError(f"alpha {self.alpha} must be positive")
        if self.split_exponent <= 0:
            raise RangeError(f"split exponent {self.split_exponent} must be positive")
        if self.split_scale is not None and self.split_scale <= 0:
            raise RangeError(f"split scale {self.split_scale} must be positive")

    @property
    def scale(self) -> float:
        if self.split_scale is not None:
            return self.split_scale
        return DEFAULT_SPLIT_SCALE_PER_ARM * self.n_arms


def control_gamma(i: int, level: int, alpha: float) -> float:
    """Exploration threshold 2^(2*alpha*level) * ln(i); 0 at i = 1."""
    if i < 1:
        raise RangeError(f"student index {i} < 1")
    if level < 0:
        raise RangeError(f"level {level} < 0")
    return 2.0 ** (2.0 * alpha * level) * math.log(i)


def control_zeta(level: int, scale: float, exponent: float) -> float:
    """Split threshold scale * 2^(exponent*level)."""
    if level < 0:
        raise RangeError(f"level {level} < 0")
    return scale * 2.0 ** (exponent * level)


@dataclass
class Cluster:
    """One dyadic cell: [origin_j / 2^level, (origin_j + 1) / 2^level) per
    axis, closed on faces touching 1.  Holds per-arm counters and means."""

    level: int
    cell: tuple[int, ...]
    counts: np.ndarray
    means: np.ndarray

    @classmethod
    def fresh(cls, level: int, cell: tuple[int, ...], n_arms: int) -> "Cluster":
        return cls(level=level, cell=cell,
                   counts=np.zeros(n_arms, dtype=np.int64),
                   means=np.zeros(n_arms, dtype=np.float64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    def origin(self) -> tuple[float, ...]:
        return tuple(c * self.side for c in self.cell)

    def contains(self, theta) -> bool:
        scale = 1 << self.level
        for j, x in enumerate(theta):
            c = min(int(x * scale), scale - 1)
            if c != self.cell[j]:
                return False
        return True

    def fold(self, arm: int, gpa: float):
        self.counts[arm] += 1
        self.means[arm] += (gpa - self.means[arm]) / self.counts[arm]


@dataclass
class Partition:
    """Mutually exclusive active clusters covering [0,1]^W.

    Split clusters are archived (counters frozen) so event-conservation
    invariants remain checkable.
    """

    dim: int
    n_arms: int
    active: dict = field(default_factory=dict)  # (level, cell) -> Cluster
    archived: list = field(default_factory=list)
    max_active_level: int = 0

    @classmethod
    def fresh(cls, dim: int, n_arms: int) -> "Partition":
        part = cls(dim=dim, n_arms=n_arms)
        root = Cluster.fresh(0, (0,) * dim, n_arms)
        part.active[(0, root.cell)] = root
        return part

    def clusters(self):
        return list(self.active.values())

    def split(self, cluster: Cluster, inherit: bool):
        key = (cluster.level, cluster.cell)
        del self.active[key]
        self.archived.append(cluster)
        level = cluster.level + 1
        base = tuple(2 * c for c in cluster.cell)
        for corner in range(1 << self.dim):
            cell = tuple(base[j] + (corner >> j & 1) for j in range(self.dim))
            child = Cluster.fresh(level, cell, self.n_arms)
            if inherit:
                child.counts = cluster.counts.copy()
                child.means = cluster.means.copy()
            self.active[(level, cell)] = child
        self.max_active_level = max(self.max_active_level, level)


def locate(partition: Partition, theta) -> Cluster:
    """Active cluster containing theta (half-open cells, closed at 1)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (partition.dim,):
        raise ContextOutOfRange(f"context shape {theta.shape} != ({partition.dim},)")
    if np.any(theta < 0.0) or np.any(theta > 1.0):
        raise ContextOutOfRange(f"context {theta} outside [0,1]^{partition.dim}")
    for level in range(partition.max_active_level + 1):
        scale = 1 << level
        cell = tuple(min(int(x * scale), scale - 1) for x in theta)
        cluster = partition.active.get((level, cell))
        if cluster is not None:
            return cluster
    raise ContextOutOfRange(f"no active cluster contains {theta}")


def select(cluster: Cluster, i: int, config: BanditConfig, rng) -> tuple[int, Phase]:
    """Arm choice for student i in this cluster.

    Explores uniformly among arms whose counter is at or below
    gamma(i, level); otherwise exploits the highest mean GPA estimate
    (ties to the lowest arm id).
    """
    gamma = control_gamma(i, cluster.level, config.alpha)
    under = np.flatnonzero(cluster.counts <= gamma)
    if len(under):
        return int(under[rng.integers(len(under))]), Phase.EXPLORE
    return int(np.argmax(cluster.means)), Phase.EXPLOIT


def update(partition: Partition, cluster: Cluster, arm: int, gpa: float,
           config: BanditConfig) -> Partition:
    """Fold one observation into the cluster; split it when full.

    A cluster splits into 2^W level-(l+1) children once its total count
    reaches zeta(l); children start zeroed unless ``inherit_stats``.
    """
    if not 0.0 <= gpa <= GPA_MAX:
        raise RangeError(f"gpa {gpa} outside [0, {GPA_MAX}]")
    cluster.fold(arm, gpa)
    at_limit = config.max_level is not None and cluster.level >= config.max_level
    if not at_limit and cluster.total >= control_zeta(
            cluster.level, config.scale, config.split_exponent):
        partition.split(cluster, config.inherit_stats)
    return partition


@dataclass
class History:
    """Per-student records of one learner run (student indices are 1-based
    and contiguous)."""

    theta: np.ndarray  # (n, W)
    arm: np.ndarray
    explore: np.ndarray  # bool; True = forced exploration
    gpa: np.ndarray
    best_mean: np.ndarray | None  # oracle mean per student, when available

    @property
    def n(self) -> int:
        return len(self.arm)

    def running_average(self) -> np.ndarray:
        return np.cumsum(self.gpa) / np.arange(1, self.n + 1)


def run(env: GpaEnvironment, n_students: int, config: BanditConfig,
        seed: int, partition: Partition | None = None) -> History:
    """Run the adaptive learner over a stream of n students."""
    if n_students < 1:
        raise RangeError(f"n_students {n_students} < 1")
    rng = np.random.default_rng(seed)
    part = partition if partition is not None else Partition.fresh(env.context_dim, config.n_arms)
    has_oracle = hasattr(env, "best_mean")

    theta_log = np.empty((n_students, env.context_dim), dtype=np.float64)
    arm_log = np.empty(n_students, dtype=np.int64)
    explore_log = np.empty(n_students, dtype=bool)
    gpa_log = np.empty(n_students, dtype=np.float64)
    best_log = np.empty(n_students, dtype=np.float64) if has_oracle else None

    for i in range(1, n_students + 1):
        theta = env.sample_context(rng)
        cluster = locate(part, theta)
        arm, phase = select(cluster, i, config, rng)
        gpa = env.sample_reward(theta, arm, rng)
        update(part, cluster, arm, gpa, config)
        theta_log[i - 1] = theta
        arm_log[i - 1] = arm
        explore_log[i - 1] = phase is Phase.EXPLORE
        gpa_log[i - 1] = gpa
        if has_oracle:
            best_log[i - 1] = env.best_mean(theta)[1]
    return History(theta=theta_log, arm=arm_log, explore=explore_log,
                   gpa=gpa_log, best_mean=best_log)


@dataclass(frozen=True)
class RegretSeries:
    cumulative: np.ndarray  # Reg(I) for I = 1..n
    average: np.ndarray  # Reg(I) / I


def regret(history: History, oracle=None) -> RegretSeries:
    """Cumulative regret against the per-context best mean.

    ``oracle`` may be a callable theta -> best mean, an array of per-student
    best means, or None to use the means recorded in the history.
    """
    if oracle is None:
        if history.best_mean is None:
            raise LengthMismatch("history carries no oracle means; pass one")
        best = history.best_mean
    elif callable(oracle):
        best = np.array([oracle(theta) for theta in history.theta])
    else:
        best = np.asarray(oracle, dtype=np.float64)
        if best.shape != (history.n,):
            raise LengthMismatch(f"oracle length {best.shape} != {history.n}")
    cum = np.cumsum(best - history.gpa)
    return RegretSeries(cumulative=cum, average=cum / np.arange(1, history.n + 1))


class Scheme(Enum):
    ORACLE = "oracle"
    NO_PERSONALIZATION = "no-personalization"
    RANDOM = "random"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class BenchmarkResult:
    scheme: Scheme
    curve: np.ndarray  # running average realized GPA
    history: History | None


def benchmark(scheme: Scheme, env: GpaEnvironment, n: int, seed: int,
              config: BanditConfig | None = None) -> BenchmarkResult:
    """Run one comparison scheme and return its running-average GPA curve.

    The context-blind baseline is the adaptive learner with the partition
    frozen at the root cell; the oracle picks the per-context best arm; the
    random baseline picks arms uniformly.
    """
    if config is None:
        config = BanditConfig(n_arms=env.n_arms)
    if scheme is Scheme.ADAPTIVE:
        hist = run(env, n, config, seed)
    elif scheme is Scheme.NO_PERSONALIZATION:
        hist = run(env, n, replace(config, max_level=0), seed)
    else:
        rng = np.random.default_rng(seed)
        has_oracle = hasattr(env, "best_mean")
        theta_log = np.empty((n, env.context_dim), dtype=np.float64)
        arm_log = np.empty(n, dtype=np.int64)
        gpa_log = np.empty(n, dtype=np.float64)
        best_log = np.empty(n, dtype=np.float64) if has_oracle else None
        for i in range(n):
            theta = env.sample_context(rng)
            if scheme is Scheme.ORACLE:
                arm = env.best_mean(theta)[0]
            else:
                arm = int(rng.integers(env.n_arms))
            gpa_log[i] = env.sample_reward(theta, arm, rng)
            theta_log[i] = theta
            arm_log[i] = arm
            if has_oracle:
                best_log[i] = env.best_mean(theta)[1]
        hist = History(theta=theta_log, arm=arm_log,
                       explore=np.zeros(n, dtype=bool), gpa=gpa_log,
                       best_mean=best_log)
    return BenchmarkResult(scheme=scheme, curve=hist.running_average(), history=hist)


def history_csv(history: History) -> str:
    """History as CSV: i,theta_0..,arm,phase,gpa,regret_increment."""
    w = history.theta.shape[1]
    head = "i," + ",".join(f"theta_{j}" for j in range(w)) + ",arm,phase,gpa,regret_increment"
    lines = [head]
    for i in range(history.n):
        inc = ""
        if history.best_mean is not None:
            inc = repr(float(history.best_mean[i] - history.gpa[i]))
        phase = "explore" if history.explore[i] else "exploit"
        theta = ",".join(repr(float(x)) for x in history.theta[i])
        lines.append(f"{i + 1},{theta},{int(history.arm[i])},{phase},"
                     f"{repr(float(history.gpa[i]))},{inc}")
    return "\n".join(lines) + "\n"


def regret_csv(series: RegretSeries) -> str:
    lines = ["i,cumulative_regret,average_regret"]
    for i in range(len(series.cumulative)):
        lines.append(f"{i + 1},{repr(float(series.cumulative[i]))},"
                     f"{repr(float(series.average[i]))}")
    return "\n".join(lines) + "\n"


def curve_csv(results: list[BenchmarkResult]) -> str:
    """Benchmark curves as CSV: i,scheme,avg_gpa (one row per student per scheme)."""
    lines = ["i,scheme,avg_gpa"]
    for res in results:
        for i, v in enumerate(res.curve):
            lines.append(f"{i + 1},{res.scheme.value},{repr(float(v))}")
    return "\n".join(lines) + "\n"


def read_history_csv(text: str) -> History:
    rows = text.strip().splitlines()
    head = rows[0].split(",")
    if head[0] != "i" or head[-3:] != ["phase", "gpa", "regret_increment"]:
        raise LengthMismatch(f"unexpected history header {rows[0]}")
    w = len(head) - 5
    n = len(rows) - 1
    theta = np.empty((n, w))
    arm = np.empty(n, dtype=np.int64)
    explore = np.empty(n, dtype=bool)
    gpa = np.empty(n)
    best = np.empty(n)
    has_best = True
    for r, row in enumerate(rows[1:]):
        parts = row.split(",")
        theta[r] = [float(x) for x in parts[1:1 + w]]
        arm[r] = int(parts[1 + w])
        explore[r] = parts[2 + w] == "explore"
        gpa[r] = float(parts[3 + w])
        if parts[4 + w]:
            best[r] = gpa[r] + float(parts[4 + w])
        else:
            has_best = False
    return History(theta=theta, arm=arm, explore=explore, gpa=gpa,
                   best_mean=best if has_best else None)


def read_regret_csv(text: str) -> RegretSeries:
    rows = text.strip().splitlines()
    if rows[0] != "i,cumulative_regret,average_regret":
        raise LengthMismatch(f"unexpected regret header {rows[0]}")
    cum = np.array([float(r.split(",")[1]) for r in rows[1:]])
    avg = np.array([float(r.split(",")[2]) for r in rows[1:]])
    return RegretSeries(cumulative=cum, average=avg)


def read_curve_csv(text: str) -> dict:
    """scheme name -> running-average array."""
    rows = text.strip().splitlines()
    if rows[0] != "i,scheme,avg_gpa":
        raise LengthMismatch(f"unexpected curve header {rows[0]}")
    out: dict[str, list] = {}
    for row in rows[1:]:
        _, scheme, v = row.split(",")
        out.setdefault(scheme, []).append(float(v))
    return {k: np.array(v) for k, v in out.items()}
