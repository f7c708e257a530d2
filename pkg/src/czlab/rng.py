"""Counter-based random streams keyed by (seed, experiment, index)."""

import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def stream(seed: int, experiment: str = "", index: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, experiment, index) triple.

    Streams do not depend on the order in which they are requested, so results
    are reproducible under any scheduling.
    """
    tag = zlib.crc32(experiment.encode("utf8"))
    key = np.random.SeedSequence([int(seed), tag, int(index)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("CZLAB_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(func, items):
    """Ordered map, threaded up to CZLAB_THREADS workers."""
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
