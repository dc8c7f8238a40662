"""Numerical conventions used to turn finiteness and limit statements into verdicts.

Every threshold lives here so that reports can echo them verbatim.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THRESHOLDS = {
    # ladder shells s_{k+1}/s_k below this over the last 3 shells -> converged
    "tail_ratio": 0.9,
    # ladder shells s_{k+1}/s_k at or above this over the last 3 shells -> diverging
    "divergence_ratio": 0.95,
    # Carleson profile: final level max below this and decreasing -> vanishing
    "vanishing": 1e-3,
    # Carleson profile: relative change over the last 4 levels below this -> stabilized
    "stabilized": 0.05,
    # two-depth stability factor (chain estimate)
    "stability_factor": 2.0,
    # geometric decay of dyadic level increments
    "increment_ratio": 0.8,
    # allowed upward noise when checking monotone decrease
    "monotone_noise": 0.10,
    # reflection comparability factor between exterior and interior energies
    "comparability_factor": 8.0,
}

DEFAULT_OUTER_RADIUS = 1.5
DEFAULT_TOL = 1e-6
MAX_CLI_DEPTH = 20
MAX_LEVEL = 48
# the multi-resolution family is materialised as a list; keep it desk sized
MAX_MR_LEVEL = 18


def worker_count() -> int:
    """Worker cap from ``CURVESPACE_THREADS`` (defaults to the CPU count, at most 8)."""
    raw = os.environ.get("CURVESPACE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def parallel_map(fn, items):
    """Map ``fn`` over ``items`` on a thread pool, preserving order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
