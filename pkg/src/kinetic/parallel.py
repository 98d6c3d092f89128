"""Order-preserving map over a process pool.

Work items carry their own substream keys, and results come back in item
order, so any reduction done afterwards sees the same sequence regardless of
the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("KINETIC_WORKERS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items, workers: int | None = None, chunksize: int | None = None) -> list:
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunksize = chunksize or max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
