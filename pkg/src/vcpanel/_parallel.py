from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def parallel_map(func, items, threads: int = 1) -> list:
    """Order-preserving map, in worker processes when ``threads > 1``.

    ``func`` must be a module-level callable; every task carries its own
    seed so the schedule cannot change results.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, items))
