"""Ordered process-pool map whose results do not depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable

ENV_THREADS = "RESAMP_HD_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Workers to use: ``requested`` (default: CPU count), capped by RESAMP_HD_THREADS."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(ENV_THREADS)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, int(n))


def map_ordered(fn: Callable, items: Iterable, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally spread over processes, in input order."""
    items = list(items)
    w = min(worker_count(workers), len(items))
    if w <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * w))))
