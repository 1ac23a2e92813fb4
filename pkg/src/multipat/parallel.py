"""Deterministic task mapping with an optional thread pool.

Results are collected in input order and every task derives its own RNG
stream from explicit ids, so outputs are identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads=None) -> int:
    if threads is None or int(threads) <= 0:
        return os.cpu_count() or 1
    return int(threads)


def parallel_map(fn, items, threads=1) -> list:
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
