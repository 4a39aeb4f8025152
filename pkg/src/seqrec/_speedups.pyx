# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: layer expansion and batch trajectory sampling.

Mirrors `seqrec._kernels_py` bit for bit (same multiplication order, same
counter-based RNG); see that module for the documented contracts.
"""

from libc.stdint cimport int64_t, uint64_t

import numpy as np


cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    static inline int seqrec_popcount64(unsigned long long x) {
        return __builtin_popcountll(x);
    }
    #else
    static inline int seqrec_popcount64(unsigned long long x) {
        int c = 0;
        while (x) { x &= x - 1; c++; }
        return c;
    }
    #endif
    """
    int seqrec_popcount64(unsigned long long x) nogil


cdef uint64_t GOLDEN = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t GOLDEN2 = <uint64_t>0xD1B54A32D192ED03


cdef inline uint64_t _mix64(uint64_t x) nogil:
    x = (x ^ (x >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    x = (x ^ (x >> 27)) * <uint64_t>0x94D049BB133111EB
    return x ^ (x >> 31)


cdef inline uint64_t _substream(uint64_t seed, uint64_t index) nogil:
    return _mix64(seed ^ (GOLDEN * (index + 1)))


cdef inline double _draw_u01(uint64_t stream, uint64_t quarter, uint64_t idx) nogil:
    cdef uint64_t h = _mix64(stream + GOLDEN * quarter)
    h = _mix64(h + GOLDEN2 * idx)
    return (h >> 11) * (1.0 / 9007199254740992.0)  # 2^53


cdef inline int _imin(int a, int b) nogil:
    return a if a < b else b


def expand_states(states, avail_mask, prereq_masks, cap, eps,
                  max_actions, max_slots):
    """See `seqrec._kernels_py.expand_states`."""
    cdef int64_t[::1] src = np.ascontiguousarray(states, dtype=np.int64)
    cdef int64_t[::1] pmask = np.ascontiguousarray(prereq_masks, dtype=np.int64)
    cdef double[:, ::1] eps_v = np.ascontiguousarray(eps, dtype=np.float64)
    cdef uint64_t avail = <uint64_t>avail_mask
    cdef int cap_c = cap
    cdef int n_courses = pmask.shape[0]
    cdef Py_ssize_t n_src = src.shape[0]
    # Counts below 2^53 are exact in doubles; the caps keep us there.
    cdef double lim_actions = <double>max_actions
    cdef double lim_slots = <double>max_slots

    cdef int feas[64]
    cdef int idx[64]
    cdef Py_ssize_t i
    cdef int n, k, nf, b, pos
    cdef uint64_t s, pm, amask, succ
    cdef double total_actions = 0.0, total_slots = 0.0, comb

    # Pass 1: exact action/slot counts (including zero-probability outcomes).
    for i in range(n_src):
        s = <uint64_t>src[i]
        nf = 0
        for n in range(n_courses):
            pm = <uint64_t>pmask[n]
            if not (s >> n) & 1 and (avail >> n) & 1 and (s & pm) == pm:
                nf += 1
        comb = 1.0
        for k in range(_imin(cap_c, nf) + 1):
            total_actions += comb
            total_slots += comb * (<double>(<uint64_t>1 << k))
            if total_actions > lim_actions or total_slots > lim_slots:
                raise OverflowError(f"{<int64_t>total_actions},{<int64_t>total_slots}")
            comb = comb * (nf - k) / (k + 1)

    cdef int64_t n_actions = <int64_t>total_actions
    cdef int64_t n_slots = <int64_t>total_slots
    and_src_a = np.empty(n_actions, dtype=np.int64)
    and_action_a = np.empty(n_actions, dtype=np.int64)
    succ_off_a = np.empty(n_actions + 1, dtype=np.int64)
    succ_state_a = np.empty(n_slots, dtype=np.int64)
    succ_prob_a = np.empty(n_slots, dtype=np.float64)
    cdef int64_t[::1] and_src = and_src_a
    cdef int64_t[::1] and_action = and_action_a
    cdef int64_t[::1] succ_off = succ_off_a
    cdef int64_t[::1] succ_state = succ_state_a
    cdef double[::1] succ_prob = succ_prob_a

    cdef int64_t na = 0, ns = 0
    cdef int outcome, cc
    cdef double p
    succ_off[0] = 0

    # Pass 2: fill, dropping zero-probability outcomes.
    for i in range(n_src):
        s = <uint64_t>src[i]
        nf = 0
        for n in range(n_courses):
            pm = <uint64_t>pmask[n]
            if not (s >> n) & 1 and (avail >> n) & 1 and (s & pm) == pm:
                feas[nf] = n
                nf += 1
        for k in range(_imin(cap_c, nf) + 1):
            if k == 0:
                and_src[na] = <int64_t>s
                and_action[na] = 0
                succ_state[ns] = <int64_t>s
                succ_prob[ns] = 1.0
                ns += 1
                na += 1
                succ_off[na] = ns
                continue
            for b in range(k):
                idx[b] = b
            while True:
                amask = 0
                for b in range(k):
                    amask |= (<uint64_t>1) << feas[idx[b]]
                and_src[na] = <int64_t>s
                and_action[na] = <int64_t>amask
                for outcome in range(1 << k):
                    p = 1.0
                    succ = s
                    for b in range(k):
                        cc = feas[idx[b]]
                        if (outcome >> b) & 1:
                            p *= eps_v[cc, k - 1]
                        else:
                            p *= 1.0 - eps_v[cc, k - 1]
                            succ |= (<uint64_t>1) << cc
                    if p != 0.0:
                        succ_state[ns] = <int64_t>succ
                        succ_prob[ns] = p
                        ns += 1
                na += 1
                succ_off[na] = ns
                pos = k - 1
                while pos >= 0 and idx[pos] == nf - k + pos:
                    pos -= 1
                if pos < 0:
                    break
                idx[pos] += 1
                for b in range(pos + 1, k):
                    idx[b] = idx[b - 1] + 1

    return (and_src_a, and_action_a, succ_off_a,
            succ_state_a[:ns].copy(), succ_prob_a[:ns].copy())


def simulate_batch(horizon, n, seed, mand_mask, elect_mask, quota,
                   eps, pol_states, pol_actions):
    """See `seqrec._kernels_py.simulate_batch`."""
    cdef int T = horizon
    cdef Py_ssize_t n_traj = n
    cdef uint64_t seed_c = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t mand = <uint64_t>mand_mask
    cdef uint64_t elect = <uint64_t>elect_mask
    cdef int quota_c = quota
    cdef double[:, ::1] eps_v = np.ascontiguousarray(eps, dtype=np.float64)

    keys_list = [np.ascontiguousarray(arr, dtype=np.int64) for arr in pol_states]
    acts_list = [np.ascontiguousarray(arr, dtype=np.int64) for arr in pol_actions]
    cdef int64_t[::1] keys
    cdef int64_t[::1] acts

    out_a = np.empty(n_traj, dtype=np.int64)
    cdef int64_t[::1] out = out_a

    cdef Py_ssize_t j
    cdef int t, k, b, c
    cdef Py_ssize_t lo, hi, mid
    cdef bint found
    cdef uint64_t stream, s, a, rem
    cdef int64_t grad

    for j in range(n_traj):
        stream = _substream(seed_c, <uint64_t>j)
        s = 0
        grad = -1
        if (s & mand) == mand and seqrec_popcount64(s & elect) >= quota_c:
            grad = 0
        else:
            for t in range(1, T + 1):
                keys = keys_list[t - 1]
                acts = acts_list[t - 1]
                lo = 0
                hi = keys.shape[0]
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if <uint64_t>keys[mid] < s:
                        lo = mid + 1
                    else:
                        hi = mid
                found = lo < keys.shape[0] and <uint64_t>keys[lo] == s
                if not found:
                    raise LookupError(f"{t},{s}")
                a = <uint64_t>acts[lo]
                k = seqrec_popcount64(a)
                if k:
                    b = 0
                    rem = a
                    while rem:
                        c = seqrec_popcount64((rem & (0 - rem)) - 1)
                        rem &= rem - 1
                        if _draw_u01(stream, <uint64_t>t, <uint64_t>b) >= eps_v[c, k - 1]:
                            s |= (<uint64_t>1) << c
                        b += 1
                    if (s & mand) == mand and seqrec_popcount64(s & elect) >= quota_c:
                        grad = t
                        break
        out[j] = grad
    return out_a
