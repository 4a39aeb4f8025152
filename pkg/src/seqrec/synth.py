"""Synthetic student environment backed by tabulated GPA statistics.

A GPA table gives, per context bin (e.g. math-SAT ranges) and per
candidate sequence (arm), the observed mean GPA and observation count.
The environment samples student contexts from the count-weighted bins and
rewards from a symmetric truncated normal around the cell mean, so sample
means stay unbiased while respecting the [0, 4] GPA range.

The table file is one CSV row per (bin, arm):
    bin_low,bin_high,arm,mean,count[,std]
Bins are contiguous, ordered, left-open/right-closed (the first bin also
contains its lower endpoint).  A count of 0 marks the cell unavailable
(its mean field may be empty).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bandit import GPA_MAX
from .errors import (
    ContextOutOfRange,
    OverlappingBins,
    ParseError,
    RangeError,
    UnavailableCell,
)

DEFAULT_SIGMA = 0.3


@dataclass(frozen=True)
class GpaTable:
    """Binned GPA statistics: (bin, arm) -> mean, count, optional std."""

    bins: tuple  # of (low, high) pairs over the raw context range
    arms: tuple  # arm labels as given in the file
    mean: np.ndarray  # (n_bins, n_arms); NaN where unavailable
    count: np.ndarray  # (n_bins, n_arms) int
    std: np.ndarray | None = None

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def raw_range(self) -> tuple[float, float]:
        return self.bins[0][0], self.bins[-1][1]

    def available(self, bin_index: int, arm_index: int) -> bool:
        return self.count[bin_index, arm_index] > 0

    def bin_of_raw(self, raw: float) -> int:
        low, high = self.raw_range
        if not low <= raw <= high:
            raise ContextOutOfRange(f"raw context {raw} outside [{low}, {high}]")
        for i, (lo, hi) in enumerate(self.bins):
            if raw <= hi:
                return i
        return self.n_bins - 1

    def bin_weights(self) -> np.ndarray:
        """Bin arrival probabilities proportional to observation counts."""
        totals = self.count.sum(axis=1).astype(np.float64)
        if totals.sum() == 0:
            return np.full(self.n_bins, 1.0 / self.n_bins)
        return totals / totals.sum()

    def marginal_mean(self, bin_index: int) -> float:
        """Count-weighted mean over the bin's available cells."""
        counts = self.count[bin_index]
        mask = counts > 0
        if not mask.any():
            raise UnavailableCell(bin_index, "all")
        return float(np.sum(self.mean[bin_index][mask] * counts[mask]) / counts[mask].sum())


def load_gpa_table(path) -> GpaTable:
    """Parse and validate a GPA table CSV (see module docstring)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read GPA table {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path} is empty")
    header = [h.strip().lower() for h in rows[0]]
    if header[:5] != ["bin_low", "bin_high", "arm", "mean", "count"]:
        raise ParseError(f"unexpected header {rows[0]}")
    has_std = len(header) > 5 and header[5] == "std"

    cells = {}
    bin_set = set()
    arm_set = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not f.strip() for f in row):
            continue
        try:
            lo, hi = float(row[0]), float(row[1])
            arm = int(row[2])
            count = int(row[4])
            mean = float(row[3]) if row[3].strip() else float("nan")
            std = float(row[5]) if has_std and len(row) > 5 and row[5].strip() else float("nan")
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if count < 0:
            raise RangeError(f"{path}:{lineno}: negative count")
        if count > 0 and not 0.0 <= mean <= GPA_MAX:
            raise RangeError(f"{path}:{lineno}: mean {mean} outside [0, {GPA_MAX}]")
        if lo >= hi:
            raise RangeError(f"{path}:{lineno}: empty bin [{lo}, {hi}]")
        bin_set.add((lo, hi))
        arm_set.add(arm)
        cells[((lo, hi), arm)] = (mean, count, std)

    bins = tuple(sorted(bin_set))
    for (l1, h1), (l2, h2) in zip(bins, bins[1:]):
        if l2 < h1:
            raise OverlappingBins(f"bins ({l1}, {h1}] and ({l2}, {h2}] overlap")
        if l2 > h1:
            raise RangeError(f"gap between bins ({l1}, {h1}] and ({l2}, {h2}]")
    arms = tuple(sorted(arm_set))
    arm_idx = {a: i for i, a in enumerate(arms)}

    mean = np.full((len(bins), len(arms)), np.nan)
    count = np.zeros((len(bins), len(arms)), dtype=np.int64)
    std = np.full((len(bins), len(arms)), np.nan)
    for i, b in enumerate(bins):
        for a in arms:
            if (b, a) not in cells:
                raise ParseError(f"missing cell for bin {b}, arm {a}")
            m, c, s = cells[(b, a)]
            if c > 0:
                mean[i, arm_idx[a]] = m
            count[i, arm_idx[a]] = c
            std[i, arm_idx[a]] = s
    return GpaTable(bins=bins, arms=arms, mean=mean, count=count,
                    std=std if has_std else None)


@dataclass(frozen=True)
class EnvModel:
    """Sampling environment over a GPA table.

    ``sigma`` scales the reward noise: rewards are normal around the cell
    mean, truncated symmetrically to stay within [0, 4] without biasing the
    mean.  ``unavailable`` selects what happens when the learner pulls an
    arm in a bin with no observations: "error" raises UnavailableCell,
    "marginal" substitutes the bin's count-weighted available mean.
    ``extra_dims`` appends independent uniform context dimensions (raw
    ranges) that do not affect rewards, e.g. a high-school GPA axis.
    """

    table: GpaTable
    sigma: float = DEFAULT_SIGMA
    unavailable: str = "error"
    context_dist: str = "counts"
    extra_dims: tuple = ()

    def __post_init__(self):
        if self.sigma < 0:
            raise RangeError(f"sigma {self.sigma} < 0")
        if self.unavailable not in ("error", "marginal"):
            raise RangeError(f"unknown unavailable policy {self.unavailable!r}")
        if self.context_dist not in ("counts", "uniform"):
            raise RangeError(f"unknown context distribution {self.context_dist!r}")

    @property
    def n_arms(self) -> int:
        return self.table.n_arms

    @property
    def context_dim(self) -> int:
        return 1 + len(self.extra_dims)

    @property
    def arm_labels(self) -> tuple:
        return self.table.arms

    # -- context handling ---------------------------------------------------

    def normalize(self, raw) -> np.ndarray:
        raw = np.atleast_1d(np.asarray(raw, dtype=np.float64))
        out = np.empty(self.context_dim)
        for j in range(self.context_dim):
            lo, hi = self._dim_range(j)
            out[j] = (raw[j] - lo) / (hi - lo)
        return out

    def denormalize(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        out = np.empty(self.context_dim)
        for j in range(self.context_dim):
            lo, hi = self._dim_range(j)
            out[j] = lo + theta[j] * (hi - lo)
        return out

    def _dim_range(self, j):
        return self.table.raw_range if j == 0 else self.extra_dims[j - 1]

    def sample_student(self, rng) -> tuple[np.ndarray, np.ndarray]:
        """(raw context, normalized context).

        With context_dist="counts" (default) the bin is drawn proportional
        to its observation count, then uniform within; "uniform" draws
        uniformly over the whole raw range.
        """
        rng = _as_rng(rng)
        if self.context_dist == "uniform":
            lo, hi = self.table.raw_range
        else:
            b = int(rng.choice(self.table.n_bins, p=self.table.bin_weights()))
            lo, hi = self.table.bins[b]
        raw = [rng.uniform(lo, hi)]
        for lo2, hi2 in self.extra_dims:
            raw.append(rng.uniform(lo2, hi2))
        raw = np.array(raw)
        return raw, self.normalize(raw)

    def sample_context(self, rng) -> np.ndarray:
        return self.sample_student(rng)[1]

    # -- rewards -------------------------------------------------------------

    def cell_mean(self, bin_index: int, arm_index: int) -> float:
        if self.table.available(bin_index, arm_index):
            return float(self.table.mean[bin_index, arm_index])
        if self.unavailable == "error":
            raise UnavailableCell(bin_index, self.table.arms[arm_index])
        return self.table.marginal_mean(bin_index)

    def sample_gpa(self, theta, arm_index: int, rng) -> float:
        """Truncated-normal GPA around the cell mean for this context.

        Truncation is symmetric about the mean (rejection sampling on
        [mean - d, mean + d] with d = min(mean, 4 - mean)), which keeps the
        sample mean equal to the cell mean.
        """
        rng = _as_rng(rng)
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        raw0 = self.denormalize(theta)[0]
        b = self.table.bin_of_raw(raw0)
        mu = self.cell_mean(b, arm_index)
        if self.sigma == 0.0:
            return mu
        d = min(mu, GPA_MAX - mu)
        if d <= 0.0:
            return mu
        while True:
            g = rng.normal(mu, self.sigma)
            if abs(g - mu) <= d:
                return float(g)

    def sample_reward(self, theta, arm: int, rng) -> float:
        return self.sample_gpa(theta, arm, rng)

    def best_mean(self, theta) -> tuple[int, float]:
        """(best arm index, best mean) for this context; available cells only."""
        raw0 = self.denormalize(np.atleast_1d(theta))[0]
        return self.best_in_bin(self.table.bin_of_raw(raw0))

    def best_in_bin(self, bin_index: int) -> tuple[int, float]:
        row = self.table.mean[bin_index]
        avail = self.table.count[bin_index] > 0
        best_arm = -1
        best = -np.inf
        for z in range(self.table.n_arms):
            if avail[z] and row[z] > best:
                best, best_arm = float(row[z]), z
        if best_arm < 0:
            raise UnavailableCell(bin_index, "all")
        return best_arm, best


def oracle_means(env: EnvModel):
    """Callable theta -> (best arm index, best mean), plus a per-bin table
    on its ``per_bin`` attribute."""

    per_bin = [env.best_in_bin(b) for b in range(env.table.n_bins)]

    def oracle(theta):
        return env.best_mean(theta)

    oracle.per_bin = per_bin
    return oracle


def sample_student(env: EnvModel, seed) -> tuple[np.ndarray, np.ndarray]:
    return env.sample_student(_as_rng(seed))


def sample_gpa(env: EnvModel, theta, arm_index: int, seed) -> float:
    return env.sample_gpa(theta, arm_index, _as_rng(seed))


def _as_rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def bin_arrival_probs(env: EnvModel) -> np.ndarray:
    """Per-bin arrival probabilities under the env's context distribution."""
    if env.context_dist == "uniform":
        lo, hi = env.table.raw_range
        return np.array([(h - l) / (hi - lo) for l, h in env.table.bins])
    return env.table.bin_weights()


def expected_uniform_average(env: EnvModel) -> float:
    """Long-run average GPA of uniformly random arm pulls (closed form)."""
    w = bin_arrival_probs(env)
    total = 0.0
    for b in range(env.table.n_bins):
        cell = [env.cell_mean(b, z) for z in range(env.n_arms)]
        total += w[b] * float(np.mean(cell))
    return total


def expected_oracle_average(env: EnvModel) -> float:
    """Long-run average GPA of the per-context best arm (closed form)."""
    w = bin_arrival_probs(env)
    return float(sum(w[b] * env.best_in_bin(b)[1] for b in range(env.table.n_bins)))
