"""Ordered thread-pool map with a worker cap from ``BBMLAB_THREADS``.

Work is always split into the same blocks regardless of the worker count
and results come back in submission order, so reductions over them are
bit-identical for any thread setting.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable


def worker_count() -> int:
    """Value of ``BBMLAB_THREADS`` (at least 1), or the CPU count when unset."""
    raw = os.environ.get("BBMLAB_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"BBMLAB_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def ordered_map(fn: Callable, items: Iterable) -> list:
    """``[fn(item) for item in items]``, evaluated on up to :func:`worker_count` threads."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
