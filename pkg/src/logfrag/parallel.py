"""Process-pool fan-out capped by the ``LOGFRAG_THREADS`` environment variable."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count(requested: int | None = None) -> int:
    if requested is None:
        try:
            requested = int(os.environ.get("LOGFRAG_THREADS", "1"))
        except ValueError:
            requested = 1
    cap = os.environ.get("LOGFRAG_THREADS")
    if cap is not None:
        try:
            requested = min(requested, int(cap))
        except ValueError:
            pass
    return max(1, requested)


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Order-preserving map; runs serially when a single worker is allowed."""
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
