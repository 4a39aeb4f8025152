"""Pure-Python reference implementations of the hot kernels.

`seqrec.kernels` selects these when the compiled extension is missing (or
when SEQREC_PURE_PYTHON=1).  The compiled versions in `_speedups.pyx`
mirror this module operation-for-operation, including floating-point
multiplication order and the counter-based RNG, so results are identical
bit for bit across backends.
"""

from __future__ import annotations

import bisect
import itertools
import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_GOLDEN2 = 0xD1B54A32D192ED03


def mix64(x: int) -> int:
    """SplitMix64 finalizer; avalanche hash on 64-bit words."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def substream(seed: int, index: int) -> int:
    """Independent stream seed for trajectory ``index`` under ``seed``."""
    return mix64((seed & _MASK64) ^ ((_GOLDEN * (index + 1)) & _MASK64))


def draw_u01(stream: int, quarter: int, idx: int) -> float:
    """Deterministic uniform in [0, 1) for draw ``idx`` of ``quarter``."""
    h = mix64((stream + _GOLDEN * quarter) & _MASK64)
    h = mix64((h + _GOLDEN2 * idx) & _MASK64)
    return (h >> 11) * (1.0 / (1 << 53))


def expand_states(states, avail_mask, prereq_masks, cap, eps,
                  max_actions, max_slots):
    """Expand one quarter of non-terminal states into AND nodes.

    Parameters
    ----------
    states : int64 array of source state bitmasks (non-terminal).
    avail_mask : int bitmask of courses offered this quarter.
    prereq_masks : int64 array, entry n = bitmask of prerequisites of n.
    cap : maximum courses per quarter.
    eps : (N, cap) float array, eps[n, k-1] = failure probability of course
        n under a k-course load.
    max_actions / max_slots : raise OverflowError before allocating if the
        expansion would produce more AND nodes / successor slots than this.

    Returns (and_src, and_action, succ_off, succ_state, succ_prob): one AND
    node per (state, action) with its successor distribution stored in the
    flattened succ arrays; ``succ_off`` has one extra entry so node i owns
    slice succ_off[i]:succ_off[i+1].  Zero-probability outcomes are omitted.
    Actions are enumerated per state by size then lexicographically by
    sorted course ids, the empty action first.
    """
    n_courses = len(prereq_masks)
    pmask = [int(x) for x in prereq_masks]
    avail = int(avail_mask)

    feas_lists = []
    total_actions = 0
    total_slots = 0
    for s in states:
        s = int(s)
        feas = [n for n in range(n_courses)
                if not s >> n & 1 and avail >> n & 1 and s & pmask[n] == pmask[n]]
        feas_lists.append((s, feas))
        for k in range(min(cap, len(feas)) + 1):
            c = math.comb(len(feas), k)
            total_actions += c
            total_slots += c << k
        if total_actions > max_actions or total_slots > max_slots:
            raise OverflowError(f"{total_actions},{total_slots}")

    and_src: list[int] = []
    and_action: list[int] = []
    succ_off: list[int] = [0]
    succ_state: list[int] = []
    succ_prob: list[float] = []

    for s, feas in feas_lists:
        for combo in _subsets_upto(feas, cap):
            k = len(combo)
            and_src.append(s)
            amask = 0
            for c in combo:
                amask |= 1 << c
            and_action.append(amask)
            if k == 0:
                succ_state.append(s)
                succ_prob.append(1.0)
            else:
                for outcome in range(1 << k):
                    p = 1.0
                    succ = s
                    for b, c in enumerate(combo):
                        if outcome >> b & 1:  # bit set = course failed
                            p *= eps[c, k - 1]
                        else:
                            p *= 1.0 - eps[c, k - 1]
                            succ |= 1 << c
                    if p != 0.0:
                        succ_state.append(succ)
                        succ_prob.append(p)
            succ_off.append(len(succ_state))

    return (
        np.asarray(and_src, dtype=np.int64),
        np.asarray(and_action, dtype=np.int64),
        np.asarray(succ_off, dtype=np.int64),
        np.asarray(succ_state, dtype=np.int64),
        np.asarray(succ_prob, dtype=np.float64),
    )


def _subsets_upto(items, cap):
    """Subsets of ``items`` of size <= cap, size-ascending then lexicographic."""
    for k in range(min(cap, len(items)) + 1):
        yield from itertools.combinations(items, k)


def simulate_batch(horizon, n, seed, mand_mask, elect_mask, quota,
                   eps, pol_states, pol_actions):
    """Sample ``n`` student trajectories under a tabulated policy.

    pol_states[t] / pol_actions[t] (t = 0..horizon-1) give the sorted state
    bitmasks known entering quarter t+1 and the action bitmask for each.
    Returns an int64 array of graduation quarters: 0 = terminal at entry,
    -1 = not graduated within the horizon.  Raises LookupError("t,state")
    on a policy gap.

    Trajectory j draws from substream(seed, j); draw idx within a quarter
    is the rank of the course in the action (ascending id).  A course
    passes iff draw >= eps(course, |action|).
    """
    mand_mask = int(mand_mask)
    elect_mask = int(elect_mask)
    st_lists = [[int(x) for x in arr] for arr in pol_states]
    ac_lists = [[int(x) for x in arr] for arr in pol_actions]
    out = np.empty(n, dtype=np.int64)

    for j in range(n):
        stream = substream(seed, j)
        s = 0
        grad = -1
        if _terminal(s, mand_mask, elect_mask, quota):
            grad = 0
        else:
            for t in range(1, horizon + 1):
                keys = st_lists[t - 1]
                pos = bisect.bisect_left(keys, s)
                if pos == len(keys) or keys[pos] != s:
                    raise LookupError(f"{t},{s}")
                a = ac_lists[t - 1][pos]
                k = a.bit_count()
                if k:
                    idx = 0
                    rem = a
                    while rem:
                        c = (rem & -rem).bit_length() - 1
                        rem &= rem - 1
                        if draw_u01(stream, t, idx) >= eps[c, k - 1]:
                            s |= 1 << c
                        idx += 1
                    if _terminal(s, mand_mask, elect_mask, quota):
                        grad = t
                        break
        out[j] = grad
    return out


def _terminal(s, mand_mask, elect_mask, quota):
    return s & mand_mask == mand_mask and (s & elect_mask).bit_count() >= quota
