"""Deterministic worker-pool helper for independent units of work."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_parallel_map(
    fn: Callable[[T], R], items: Sequence[T], threads: int = 1
) -> list[R]:
    """Apply fn to each item, returning results in input order.

    With threads <= 1 this is a plain loop. With more threads, items run
    on a thread pool; results are still collected by position, so output
    is byte-identical regardless of worker count (fn must be pure).
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
