"""Layered-graph construction and optimal-policy extraction.

`forward_search` walks the horizon quarter by quarter, expanding every
reachable non-terminal completion state into its feasible course
combinations (AND nodes) and their stochastic successors, producing a
layered AND/OR graph.  `backward_induction` sweeps the graph bottom-up,
computing action values Q and state values V, and records the optimal
recommendation per (state, quarter).

States are int bitmasks throughout this module; layers are sorted int64
arrays so the hot loops can run in the compiled kernels.  Within a layer,
expansion order is deterministic (states ascending, actions by size then
lexicographically), so results are reproducible and independent of any
internal parallelism.  Graphs and policy tables are immutable once built
and safe for concurrent reads.

Argmax ties are broken toward the larger action set, then toward the
lexicographically smaller sorted course-id tuple.  Preferring the larger
set keeps recommendations maximal whenever extra courses cannot hurt
(constant per-course failure rates make value weakly increasing in the
action), which also pins a unique deterministic table for golden tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels
from .curriculum import (
    CourseState,
    Curriculum,
    FailureModel,
    RewardKind,
    curriculum_sha256,
    terminal_value,
)
from .errors import (
    ActionOverlapsState,
    ChecksumMismatch,
    GraphMismatch,
    Infeasible,
    ParseError,
    QuarterOutOfRange,
    RangeError,
    SizeLimitExceeded,
    UnknownState,
)

DEFAULT_MAX_NODES = 50_000_000


def _popcounts(arr):
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(arr.astype(np.uint64)).astype(np.int64)
    return np.array([int(x).bit_count() for x in arr], dtype=np.int64)


@dataclass(frozen=True)
class AndLayer:
    """AND nodes of one quarter, flattened.

    Node i elects action ``action[i]`` from state ``src[i]`` and owns the
    successor slice succ_off[i]:succ_off[i+1].  Nodes are grouped by source
    state (sources ascending), actions per source by size then
    lexicographically, the empty action first.
    """

    src: np.ndarray
    action: np.ndarray
    succ_off: np.ndarray
    succ_state: np.ndarray
    succ_prob: np.ndarray

    def __len__(self):
        return len(self.src)


_EMPTY_AND = None


def _empty_and_layer() -> AndLayer:
    global _EMPTY_AND
    if _EMPTY_AND is None:
        z = np.empty(0, dtype=np.int64)
        _EMPTY_AND = AndLayer(z, z, np.zeros(1, dtype=np.int64), z,
                              np.empty(0, dtype=np.float64))
    return _EMPTY_AND


@dataclass(frozen=True)
class LayeredGraph:
    """Reachable completion states per quarter plus their AND nodes.

    ``layers[t]`` is the sorted state set L(t) for t = 0..horizon;
    ``terminal[t]`` flags terminal states within it; ``and_layers[t-1]``
    holds the AND nodes of quarter t.
    """

    n_courses: int
    horizon: int
    cap: int
    mandatory_mask: int
    elective_mask: int
    elective_quota: int
    layers: list  # of int64 arrays
    terminal: list  # of bool arrays
    and_layers: list  # of AndLayer

    def state_in_layer(self, bits: int, t: int) -> bool:
        layer = self.layers[t]
        pos = int(np.searchsorted(layer, bits))
        return pos < len(layer) and int(layer[pos]) == bits

    def successors(self, bits: int, action_bits: int, t: int):
        """(state, prob) pairs of the AND node (bits, action) in quarter t."""
        al = self.and_layers[t - 1]
        lo = int(np.searchsorted(al.src, bits, side="left"))
        hi = int(np.searchsorted(al.src, bits, side="right"))
        for i in range(lo, hi):
            if int(al.action[i]) == action_bits:
                sl = slice(int(al.succ_off[i]), int(al.succ_off[i + 1]))
                return list(zip(al.succ_state[sl].tolist(),
                                al.succ_prob[sl].tolist()))
        raise GraphMismatch(f"AND node ({bits:#x}, {action_bits:#x}) absent in quarter {t}")

    def validate(self, atol: float = 1e-9) -> "LayeredGraph":
        """Full structural check; O(total successor entries)."""
        if len(self.layers) != self.horizon + 1 or len(self.and_layers) != self.horizon:
            raise GraphMismatch("layer count does not match horizon")
        if self.layers[0].tolist() != [0]:
            raise GraphMismatch("L(0) must be exactly the all-zero state")
        for t in range(1, self.horizon + 1):
            prev, cur = self.layers[t - 1], self.layers[t]
            if not np.all(np.isin(prev, cur)):
                raise GraphMismatch(f"L({t - 1}) not a subset of L({t})")
            al = self.and_layers[t - 1]
            if len(al):
                pos = np.searchsorted(cur, al.succ_state)
                if np.any(pos >= len(cur)) or np.any(cur[pos] != al.succ_state):
                    raise GraphMismatch(f"successor outside L({t})")
                if np.any(al.succ_prob < 0.0) or np.any(al.succ_prob > 1.0):
                    raise GraphMismatch("probability outside [0, 1]")
                sums = np.add.reduceat(al.succ_prob, al.succ_off[:-1])
                if np.max(np.abs(sums - 1.0)) > atol:
                    raise GraphMismatch(f"distribution sum off by {np.max(np.abs(sums - 1.0))}")
        return self


def transition_distribution(state: CourseState, action: Iterable[int],
                            failure: FailureModel) -> dict[CourseState, float]:
    """Distribution over successor states of taking ``action`` from ``state``.

    Each of the 2^|A| pass/fail outcomes contributes the product of its
    per-course pass/fail probabilities under load |A|; zero-probability
    outcomes are omitted.
    """
    combo = sorted(set(int(c) for c in action))
    k = len(combo)
    for c in combo:
        if not 0 <= c < state.width:
            raise RangeError(f"course id {c} outside 0..{state.width - 1}")
        if state.bits >> c & 1:
            raise ActionOverlapsState(f"course {c} is already passed")
    if k == 0:
        return {state: 1.0}
    out: dict[CourseState, float] = {}
    for outcome in range(1 << k):
        p = 1.0
        succ = state.bits
        for b, c in enumerate(combo):
            if outcome >> b & 1:
                p *= failure.eps(c, k)
            else:
                p *= 1.0 - failure.eps(c, k)
                succ |= 1 << c
        if p != 0.0:
            out[CourseState(succ, state.width)] = p
    return out


def forward_search(curriculum: Curriculum,
                   max_nodes: int = DEFAULT_MAX_NODES) -> LayeredGraph:
    """Enumerate reachable states layer by layer (the forward phase).

    Terminal states are never expanded; they persist into later layers
    unchanged.  Every (state, action) pair of a non-terminal state becomes
    an AND node of its quarter, successors computed from the failure model.
    Raises SizeLimitExceeded when the running node count (states + AND
    nodes) passes ``max_nodes``, reporting the offending quarter.
    """
    cur = curriculum
    n = cur.n_courses
    prereqs = np.array(cur.prereq_masks(), dtype=np.int64)
    eps_table = cur.failure.table(cur.cap)
    mand, elect, quota = cur.mandatory_mask, cur.elective_mask, cur.elective_quota

    def term_flags(layer):
        return ((layer & mand) == mand) & (_popcounts(layer & elect) >= quota)

    layers = [np.array([0], dtype=np.int64)]
    terminal = [term_flags(layers[0])]
    and_layers: list[AndLayer] = []
    node_count = 1
    max_slots = 4 * max_nodes

    for t in range(1, cur.horizon + 1):
        prev = layers[t - 1]
        prev_term = terminal[t - 1]
        nonterm = prev[~prev_term]
        if len(nonterm):
            avail = cur.calendar.offered_mask(n, t)
            try:
                arrays = kernels.expand_states(
                    nonterm, avail, prereqs, cur.cap, eps_table,
                    max_actions=max_nodes - node_count, max_slots=max_slots)
            except OverflowError:
                raise SizeLimitExceeded(t, node_count, max_nodes) from None
            al = AndLayer(*arrays)
        else:
            al = _empty_and_layer()
        parts = [al.succ_state, prev[prev_term]] if len(al) else [prev[prev_term]]
        layer = np.unique(np.concatenate(parts)) if parts else np.empty(0, np.int64)
        layers.append(layer)
        terminal.append(term_flags(layer))
        and_layers.append(al)
        node_count += len(layer) + len(al)
        if node_count > max_nodes:
            raise SizeLimitExceeded(t, node_count, max_nodes)

    return LayeredGraph(
        n_courses=n, horizon=cur.horizon, cap=cur.cap,
        mandatory_mask=mand, elective_mask=elect, elective_quota=quota,
        layers=layers, terminal=terminal, and_layers=and_layers)


@dataclass
class PolicyTable:
    """Optimal values and recommendations extracted from a layered graph.

    ``values[(s, t)]`` is V(s, t) for s in L(t), t = 0..horizon.
    ``policy[(s, t)]`` is the action bitmask to take in quarter t+1
    (t = 0..horizon-1); terminal states map to 0.
    Q values live in per-quarter arrays; use :meth:`q_value` or the
    :attr:`action_values` view.
    """

    n_courses: int
    horizon: int
    mandatory_mask: int
    elective_mask: int
    elective_quota: int
    kind: RewardKind
    values: dict
    policy: dict
    _q_layers: list  # per quarter t-1: (src, action, q) arrays
    _tables: list | None = field(default=None, repr=False)

    @property
    def root_value(self) -> float:
        return self.values[(0, 0)]

    def is_terminal_bits(self, bits: int) -> bool:
        m = self.mandatory_mask
        return bits & m == m and (bits & self.elective_mask).bit_count() >= self.elective_quota

    def action_bits(self, bits: int, t: int):
        """Action bitmask for state ``bits`` entering quarter t+1, or None."""
        return self.policy.get((bits, t))

    def q_value(self, bits: int, quarter: int, action_bits: int) -> float:
        """Q(s, quarter, A) for the AND node (s, A) of ``quarter``."""
        src, action, q = self._q_layers[quarter - 1]
        lo = int(np.searchsorted(src, bits, side="left"))
        hi = int(np.searchsorted(src, bits, side="right"))
        for i in range(lo, hi):
            if int(action[i]) == action_bits:
                return float(q[i])
        raise UnknownState(bits, quarter, f"no AND node with action {action_bits:#x}")

    @property
    def action_values(self) -> dict:
        """Materialized {(state, quarter, action-ids): Q} map.

        Intended for inspection and tests on desk-size instances; large
        graphs should use :meth:`q_value`.
        """
        out = {}
        for t in range(1, self.horizon + 1):
            src, action, q = self._q_layers[t - 1]
            for i in range(len(src)):
                ids = tuple(b for b in range(self.n_courses) if int(action[i]) >> b & 1)
                out[(int(src[i]), t, ids)] = float(q[i])
        return out

    def quarter_tables(self):
        """Per-quarter (sorted states, action bits) arrays for the simulator."""
        if self._tables is None:
            tables = []
            for t in range(self.horizon):
                keys = sorted(bits for (bits, tt) in self.policy if tt == t)
                acts = [self.policy[(b, t)] for b in keys]
                tables.append((np.array(keys, dtype=np.int64),
                               np.array(acts, dtype=np.int64)))
            self._tables = tables
        return self._tables

    def replace_actions(self, overrides: dict) -> "PolicyTable":
        """Copy with some (state, t) recommendations overridden."""
        new_policy = dict(self.policy)
        new_policy.update(overrides)
        return PolicyTable(
            n_courses=self.n_courses, horizon=self.horizon,
            mandatory_mask=self.mandatory_mask, elective_mask=self.elective_mask,
            elective_quota=self.elective_quota, kind=self.kind,
            values=self.values, policy=new_policy, _q_layers=self._q_layers)


def backward_induction(graph: LayeredGraph, kind: RewardKind) -> PolicyTable:
    """Bottom-up value sweep over a forward-search graph.

    Terminal states carry their reward at the quarter of the layer they sit
    in (a trajectory entering a terminal state banks its reward on arrival;
    terminal states are never expanded, so there is no second crediting).
    Non-terminal states in the final layer are worth 0.
    """
    T = graph.horizon
    if len(graph.layers) != T + 1 or len(graph.and_layers) != T:
        raise GraphMismatch("layer count does not match horizon")

    values: dict = {}
    policy: dict = {}
    q_layers: list = []

    def layer_values(t, and_best=None):
        """V array aligned with graph.layers[t]."""
        layer = graph.layers[t]
        out = np.zeros(len(layer), dtype=np.float64)
        term = graph.terminal[t]
        out[term] = terminal_value(kind, t, T)
        if and_best is not None:
            srcs, best = and_best
            pos = np.searchsorted(layer, srcs)
            out[pos] = best
        return out

    v_next = layer_values(T)
    for i, bits in enumerate(graph.layers[T].tolist()):
        values[(bits, T)] = float(v_next[i])

    for t in range(T, 0, -1):
        al = graph.and_layers[t - 1]
        if len(al):
            layer_next = graph.layers[t]
            pos = np.searchsorted(layer_next, al.succ_state)
            if np.any(pos >= len(layer_next)) or np.any(layer_next[pos] != al.succ_state):
                raise GraphMismatch(f"successor outside L({t})")
            contrib = al.succ_prob * v_next[pos]
            q = np.add.reduceat(contrib, al.succ_off[:-1])
            q_layers.append((al.src, al.action, q))

            starts = np.flatnonzero(np.r_[True, al.src[1:] != al.src[:-1]])
            sizes = np.diff(np.r_[starts, len(al.src)])
            srcs = al.src[starts]
            # Argmax with ties to the larger action, then lexicographically
            # smaller ids.  Enumeration order within a size class is already
            # lexicographic, so "first index among max-size ties" suffices.
            qmax = np.maximum.reduceat(q, starts)
            is_max = q == np.repeat(qmax, sizes)
            k_arr = _popcounts(al.action)
            kbest = np.maximum.reduceat(np.where(is_max, k_arr, -1), starts)
            cand = is_max & (k_arr == np.repeat(kbest, sizes))
            idx = np.arange(len(al.src))
            pick = np.minimum.reduceat(np.where(cand, idx, len(al.src)), starts)
            best_actions = al.action[pick]
            and_best = (srcs, qmax)
        else:
            q_layers.append((al.src, al.action, np.empty(0, dtype=np.float64)))
            srcs = np.empty(0, dtype=np.int64)
            best_actions = srcs
            and_best = (srcs, np.empty(0, dtype=np.float64))

        v_here = layer_values(t - 1, and_best)
        layer_here = graph.layers[t - 1]
        term_here = graph.terminal[t - 1]
        for i, bits in enumerate(layer_here.tolist()):
            values[(bits, t - 1)] = float(v_here[i])
            if term_here[i]:
                policy[(bits, t - 1)] = 0
        for s_bits, a_bits in zip(srcs.tolist(), best_actions.tolist()):
            policy[(s_bits, t - 1)] = int(a_bits)
        v_next = v_here

    q_layers.reverse()
    return PolicyTable(
        n_courses=graph.n_courses, horizon=T,
        mandatory_mask=graph.mandatory_mask, elective_mask=graph.elective_mask,
        elective_quota=graph.elective_quota, kind=kind,
        values=values, policy=policy, _q_layers=q_layers)


def recommend(policy: PolicyTable, state: CourseState, t: int) -> tuple[int, ...]:
    """Recommended course ids for ``state`` entering quarter t.

    Terminal states yield the empty recommendation.  Raises UnknownState
    when the state is not reachable entering quarter t, with a diagnostic
    listing the quarters (if any) where it is known.
    """
    if not 1 <= t <= policy.horizon:
        raise QuarterOutOfRange(t, policy.horizon)
    bits = state.bits
    a = policy.action_bits(bits, t - 1)
    if a is None:
        known = sorted(tt + 1 for (b, tt) in policy.policy if b == bits)
        detail = f"state known entering quarters {known}" if known else "state never reachable"
        raise UnknownState(bits, t, detail)
    return tuple(c for c in range(policy.n_courses) if a >> c & 1)


def state_counts(graph: LayeredGraph) -> list[int]:
    """|L(t)| for t = 0..horizon."""
    return [len(layer) for layer in graph.layers]


def graph_stats_rows(graph: LayeredGraph) -> list[tuple[int, int, int]]:
    """(quarter, num_states, num_and_nodes) per quarter, quarter 0 included."""
    rows = [(0, len(graph.layers[0]), 0)]
    for t in range(1, graph.horizon + 1):
        rows.append((t, len(graph.layers[t]), len(graph.and_layers[t - 1])))
    return rows


def graph_stats_csv(graph: LayeredGraph) -> str:
    lines = ["quarter,num_states,num_and_nodes"]
    lines += [f"{t},{ns},{na}" for t, ns, na in graph_stats_rows(graph)]
    return "\n".join(lines) + "\n"


def _infeasible_detail(curriculum: Curriculum, graph: LayeredGraph) -> str:
    union = 0
    for bits in graph.layers[graph.horizon].tolist():
        union |= bits
    missing = [curriculum.courses[c].code for c in range(curriculum.n_mandatory)
               if not union >> c & 1]
    if missing:
        return "mandatory courses unreachable within the horizon: " + ", ".join(missing)
    return "no state meets all mandatory courses plus the elective quota within the horizon"


def best_failfree_sequence(curriculum: Curriculum,
                           max_nodes: int = DEFAULT_MAX_NODES) -> list[tuple[int, tuple[int, ...]]]:
    """Shortest-completion course sequence assuming no failures.

    Plans with all failure probabilities forced to zero under the
    remaining-time reward and walks the (now deterministic) optimal path.
    Returns one (quarter, course ids) entry per quarter up to graduation;
    the list length is the minimal feasible completion time.
    """
    zero = curriculum.with_failure(curriculum.failure.zeroed())
    graph = forward_search(zero, max_nodes=max_nodes)
    table = backward_induction(graph, RewardKind.TIME_TO_GRADUATION)
    if table.root_value == 0.0 and not table.is_terminal_bits(0):
        raise Infeasible(_infeasible_detail(curriculum, graph))
    seq: list[tuple[int, tuple[int, ...]]] = []
    bits = 0
    for t in range(1, curriculum.horizon + 1):
        if table.is_terminal_bits(bits):
            break
        a = table.policy[(bits, t - 1)]
        seq.append((t, tuple(c for c in range(curriculum.n_courses) if a >> c & 1)))
        bits |= a
        if table.is_terminal_bits(bits):
            break
    return seq


def enumerate_candidate_policies(curriculum: Curriculum, kind: RewardKind,
                                 k: int,
                                 max_nodes: int = DEFAULT_MAX_NODES) -> list[PolicyTable]:
    """Up to ``k`` distinct optimal policies, differing in argmax tie choices.

    All returned tables achieve the same optimal root value; they differ
    only at on-path states where several actions tie for the maximum Q.
    The first entry is exactly the backward-induction table.
    """
    if k < 1:
        raise RangeError(f"k {k} < 1")
    graph = forward_search(curriculum, max_nodes=max_nodes)
    base = backward_induction(graph, kind)
    if base.root_value == 0.0 and not base.is_terminal_bits(0):
        raise Infeasible(_infeasible_detail(curriculum, graph))

    # Per quarter: (state -> [tied actions in preference order]) and
    # (state, action) -> successor states.
    tie_classes: list[dict] = []
    succ_index: list[dict] = []
    for t in range(1, graph.horizon + 1):
        al = graph.and_layers[t - 1]
        src, action, q = base._q_layers[t - 1]
        ties: dict[int, list[int]] = {}
        succs: dict[tuple[int, int], list[int]] = {}
        for i in range(len(src)):
            s, a = int(src[i]), int(action[i])
            if q[i] == base.values[(s, t - 1)]:
                ties.setdefault(s, []).append(a)
            sl = slice(int(al.succ_off[i]), int(al.succ_off[i + 1]))
            succs[(s, a)] = [int(x) for x in al.succ_state[sl]]
        for s, acts in ties.items():
            acts.sort(key=lambda a: (-a.bit_count(), _ids(a)))
        tie_classes.append(ties)
        succ_index.append(succs)

    results: list[PolicyTable] = []

    def walk(t: int, frontier: frozenset, overrides: dict):
        if len(results) >= k:
            return
        if t > graph.horizon:
            results.append(base.replace_actions(overrides) if overrides else base)
            return
        points = sorted(s for s in frontier if not base.is_terminal_bits(s))
        if not points:
            results.append(base.replace_actions(overrides) if overrides else base)
            return
        import itertools

        for combo in itertools.product(*(tie_classes[t - 1][s] for s in points)):
            new_overrides = dict(overrides)
            nxt = set()
            for s, a in zip(points, combo):
                if a != base.policy[(s, t - 1)]:
                    new_overrides[(s, t - 1)] = a
                nxt.update(succ_index[t - 1][(s, a)])
            walk(t + 1, frozenset(nxt), new_overrides)
            if len(results) >= k:
                return

    walk(1, frozenset({0}), {})
    return results


def _ids(action_bits: int) -> tuple[int, ...]:
    return tuple(b for b in range(action_bits.bit_length()) if action_bits >> b & 1)


# ---------------------------------------------------------------------------
# Policy file format: JSON with entries sorted by (quarter, state-as-hex).

def write_policy_json(path, table: PolicyTable, curriculum: Curriculum):
    """Write a policy file; embeds a content hash of the curriculum."""
    import json

    width = (curriculum.n_courses + 3) // 4
    codes = [c.code for c in curriculum.courses]
    entries = []
    for (bits, t), a in table.policy.items():
        entries.append({
            "state": f"{bits:0{width}x}",
            "quarter": t + 1,
            "action": [codes[c] for c in _ids(a)],
            "value": table.values[(bits, t)],
        })
    entries.sort(key=lambda e: (e["quarter"], e["state"]))
    doc = {
        "format": "seqrec-policy-v1",
        "reward": table.kind.value,
        "n_courses": curriculum.n_courses,
        "horizon": curriculum.horizon,
        "elective_quota": curriculum.elective_quota,
        "n_mandatory": curriculum.n_mandatory,
        "codes": codes,
        "curriculum_sha256": curriculum_sha256(curriculum),
        "root_value": table.root_value,
        "entries": entries,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass
class LoadedPolicy:
    """Policy reloaded from a JSON file; simulator- and recommend-ready."""

    n_courses: int
    horizon: int
    mandatory_mask: int
    elective_mask: int
    elective_quota: int
    kind: RewardKind
    codes: list
    curriculum_sha256: str
    root_value: float
    values: dict
    policy: dict
    _tables: list | None = None

    is_terminal_bits = PolicyTable.is_terminal_bits
    action_bits = PolicyTable.action_bits
    quarter_tables = PolicyTable.quarter_tables


def load_policy_json(path) -> LoadedPolicy:
    import json

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read policy {path}: {exc}") from exc
    if doc.get("format") != "seqrec-policy-v1":
        raise ParseError(f"{path} is not a seqrec policy file")
    codes = doc["codes"]
    ids = {code: i for i, code in enumerate(codes)}
    n_mand = doc["n_mandatory"]
    values: dict = {}
    policy: dict = {}
    for e in doc["entries"]:
        bits = int(e["state"], 16)
        t = e["quarter"] - 1
        a = 0
        for code in e["action"]:
            a |= 1 << ids[code]
        policy[(bits, t)] = a
        values[(bits, t)] = e["value"]
    return LoadedPolicy(
        n_courses=len(codes), horizon=doc["horizon"],
        mandatory_mask=(1 << n_mand) - 1,
        elective_mask=((1 << len(codes)) - 1) & ~((1 << n_mand) - 1),
        elective_quota=doc["elective_quota"],
        kind=RewardKind(doc["reward"]), codes=codes,
        curriculum_sha256=doc["curriculum_sha256"],
        root_value=doc["root_value"], values=values, policy=policy)


def check_policy_matches(policy: LoadedPolicy, curriculum: Curriculum):
    """Raise ChecksumMismatch unless the policy came from this curriculum."""
    got = curriculum_sha256(curriculum)
    if got != policy.curriculum_sha256:
        raise ChecksumMismatch(
            f"policy was built from curriculum {policy.curriculum_sha256[:12]}, "
            f"given {got[:12]}")
