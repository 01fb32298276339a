from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar
import logging

from app.utils.rng import Rng

logger = logging.getLogger(__name__)

T = TypeVar("T")

ReplicaTask = Callable[[int, Rng], T]


def _run_chunk(task: ReplicaTask, rng: Rng, indices: Sequence[int]) -> List[T]:
    return [task(i, rng.child(i)) for i in indices]


def run_replicas(task: ReplicaTask, count: int, rng: Rng, threads: int = 1) -> List[T]:
    """
    Run `task(i, rng.child(i))` for i in range(count).

    Replicas share nothing but what `task` closes over and their own
    substream, so the results, returned in replica order, are identical for
    any number of workers. With threads > 1 the task must be picklable (a
    module-level function or a functools.partial of one).
    """
    if count <= 0:
        return []
    if threads <= 1 or count == 1:
        return _run_chunk(task, rng, range(count))

    workers = min(threads, count)
    chunk = -(-count // (4 * workers))
    chunks = [range(start, min(start + chunk, count)) for start in range(0, count, chunk)]
    logger.info(f"Running {count} replicas on {workers} workers in {len(chunks)} chunks")
    results: List[T] = []
    with ProcessPoolExecutor(max_workers=workers) as executor:
        for part in executor.map(_run_chunk, [task] * len(chunks), [rng] * len(chunks), chunks):
            results.extend(part)
    return results
