"""
Ordered fan-out of independent grid work over a process pool.

Results always come back in input order, so any reduction performed by the caller on the
assembled array is identical for every worker count.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional

import numpy as np

import settings

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 4096


def resolve_workers(workers: Optional[int] = None) -> int:
    return max(1, int(workers if workers is not None else settings.WORKERS))


def ordered_map(func: Callable, items: Iterable, workers: Optional[int] = None) -> List:
    """
    Apply func to every item, in parallel when more than one worker is requested.

    Args:
        func: Module-level callable (or picklable callable object).
        items: Work units.
        workers: Pool size; None falls back to TMLAB_WORKERS.

    Returns:
        Results in the order of items.
    """
    items = list(items)
    n = resolve_workers(workers)
    if n == 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} work units to {n} workers")
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))


def map_points(func: Callable, points: np.ndarray, workers: Optional[int] = None,
               chunk_size: Optional[int] = None) -> np.ndarray:
    """Evaluate func on row chunks of points and stitch the results back together"""
    chunk_size = chunk_size or DEFAULT_CHUNK
    points = np.asarray(points)
    if len(points) == 0:
        return func(points)
    n_chunks = max(1, -(-len(points) // chunk_size))
    chunks = np.array_split(points, n_chunks)
    return np.concatenate(ordered_map(func, chunks, workers), axis=0)
