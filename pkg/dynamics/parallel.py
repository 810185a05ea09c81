"""
Chunked Monte Carlo dispatch

Work is cut into chunks whose size depends only on the sample size, and each
chunk gets its own child seed. Results come back in chunk order, so the
worker count never changes what is computed.
"""

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np

DEFAULT_CHUNK = 4096
WORKERS_ENV = "ROVELLA_LAB_WORKERS"


def resolve_workers(workers: Optional[int] = None) -> int:
    """Explicit value, else ROVELLA_LAB_WORKERS, else 1"""
    if workers is None:
        raw = os.getenv(WORKERS_ENV)
        if not raw:
            return 1
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def chunk_plan(seed: int, total: int, chunk_size: int = DEFAULT_CHUNK) -> List[Tuple[int, np.random.SeedSequence]]:
    """(count, seed sequence) per chunk; child i is the same for every total"""
    if total < 1:
        raise ValueError("total must be positive")
    n_chunks = -(-total // chunk_size)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    counts = [chunk_size] * (n_chunks - 1) + [total - chunk_size * (n_chunks - 1)]
    return list(zip(counts, children))


def run_chunks(func: Callable, tasks: Iterable, workers: int = 1) -> list:
    """Apply func to every task, in order, serially or on a process pool"""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    try:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(func, tasks))
    except Exception as e:
        print(f"❌ Worker pool failed: {e}", file=sys.stderr)
        raise
