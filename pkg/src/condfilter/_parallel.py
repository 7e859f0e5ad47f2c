import os
from concurrent.futures import ThreadPoolExecutor


def default_threads():
    return os.cpu_count() or 1


def chunk_bounds(n, chunk):
    """Fixed row-chunk boundaries; they depend on ``n`` and ``chunk`` only."""
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(fn, n, chunk, threads=None):
    """Apply ``fn(lo, hi)`` over fixed chunks and return results in chunk order.

    Chunk boundaries never depend on ``threads``, so any per-chunk arithmetic
    (and any merge the caller performs in list order) is bitwise identical for
    every worker count.
    """
    bounds = chunk_bounds(n, chunk)
    threads = threads or default_threads()
    if threads <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=min(threads, len(bounds))) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
