"""Backend selection for the hot kernels.

At import time the compiled extension (`seqrec._speedups`) is preferred;
the pure-Python module `seqrec._kernels_py` is the fallback.  Set
SEQREC_PURE_PYTHON=1 to force the fallback.  Both backends produce
bit-identical results; `benchmarks/bench_kernels.py` compares their speed.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import _kernels_py

_speedups = None
if os.environ.get("SEQREC_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _speedups  # type: ignore[attr-defined]
    except ImportError:
        _speedups = None

_impl = _speedups if _speedups is not None else _kernels_py

BACKEND = "compiled" if _impl is _speedups and _speedups is not None else "python"


def available_backends() -> dict:
    """Name -> module for every importable backend."""
    out = {"python": _kernels_py}
    if _speedups is not None:
        out["compiled"] = _speedups
    return out


def active_backend() -> str:
    return "compiled" if _impl is not _kernels_py else "python"


@contextmanager
def forced(name: str):
    """Temporarily route kernel calls through the named backend."""
    global _impl
    previous = _impl
    _impl = available_backends()[name]
    try:
        yield
    finally:
        _impl = previous


def expand_states(states, avail_mask, prereq_masks, cap, eps,
                  max_actions, max_slots):
    return _impl.expand_states(states, avail_mask, prereq_masks, cap, eps,
                               max_actions, max_slots)


def simulate_batch(horizon, n, seed, mand_mask, elect_mask, quota,
                   eps, pol_states, pol_actions):
    return _impl.simulate_batch(horizon, n, seed, mand_mask, elect_mask, quota,
                                eps, pol_states, pol_actions)


# The RNG helpers are part of the public simulation contract (substreams are
# how graduation_stats derives per-trajectory seeds); always the pure ones.
mix64 = _kernels_py.mix64
substream = _kernels_py.substream
draw_u01 = _kernels_py.draw_u01
