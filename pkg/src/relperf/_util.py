"""Process-level helpers."""

from __future__ import annotations

import os

__all__ = ["thread_count"]


def thread_count(upper: int | None = None) -> int:
    """Worker cap for parallel sweeps; RELPERF_THREADS overrides the CPU count."""
    n = os.cpu_count() or 1
    env = os.environ.get("RELPERF_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            pass
    if upper is not None:
        n = min(n, max(1, upper))
    return n
