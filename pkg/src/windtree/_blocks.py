"""Fixed-size block scheduling for reproducible map-reduce.

Index ranges are cut into blocks of a fixed size that does not depend on the
worker count, and block results are reduced strictly in block order.  Worker
count therefore changes only who computes a block, never the floating-point
reduction order.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from functools import reduce

BLOCK = 1 << 16


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = int(os.environ.get("WINDTREE_WORKERS", "1"))
    return max(1, int(workers))


def block_ranges(total: int, block: int = BLOCK):
    return [(s, min(block, total - s)) for s in range(0, total, block)]


def map_blocks(func, arg_tuples, workers=None):
    workers = resolve_workers(workers)
    if workers == 1 or len(arg_tuples) <= 1:
        return [func(*a) for a in arg_tuples]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, *zip(*arg_tuples)))


def map_reduce(func, arg_tuples, merge, workers=None):
    return reduce(merge, map_blocks(func, arg_tuples, workers))
