"""Order-preserving worker pool for independent Monte Carlo tasks.

Every task carries its own seed key, so results do not depend on which worker
ran it; ``parallel_map`` with one thread and with many returns the same list.
"""

from __future__ import annotations

import logging
import signal
from collections.abc import Callable, Iterable
from multiprocessing import Pool
from typing import TypeVar

from services.errors import ArgumentError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _ignore_sigint() -> None:
    """Workers leave Ctrl-C to the parent, which terminates the pool."""
    signal.signal(signal.SIGINT, signal.SIG_IGN)


def parallel_map(fn: Callable[[T], R], tasks: Iterable[T], threads: int = 1) -> list[R]:
    """``[fn(task) for task in tasks]``, spread over ``threads`` worker processes.

    ``fn`` and the tasks must be picklable when ``threads > 1``.
    """
    if threads < 1:
        raise ArgumentError(f"threads must be >= 1, got {threads}")
    task_list = list(tasks)
    if threads == 1 or len(task_list) <= 1:
        return [fn(task) for task in task_list]
    workers = min(threads, len(task_list))
    chunksize = max(1, len(task_list) // (4 * workers))
    logger.debug(f"parallel_map: {len(task_list)} tasks on {workers} workers (chunksize {chunksize})")
    with Pool(workers, _ignore_sigint) as pool:
        try:
            return pool.map(fn, task_list, chunksize=chunksize)
        except KeyboardInterrupt:
            pool.terminate()
            pool.join()
            logger.error("parallel run interrupted")
            raise
