"""Order-preserving worker pool; WVN_THREADS caps the process count."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("WVN_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass
    return max(1, min(cap, requested or cap))


def pool_map(fn, items, workers: int | None = None) -> list:
    """[fn(x) for x in items], possibly in parallel; results keep input order."""
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
