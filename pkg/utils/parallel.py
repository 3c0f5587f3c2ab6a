# utils/parallel.py
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar
import logging

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_frames(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1, desc: str = "frames", progress: bool = False) -> List[R]:
    """Apply fn to every item, results in input order whatever the job count.

    fn must be a module-level function when jobs > 1 (it is pickled to workers).
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not progress)]

    workers = min(jobs, len(items))
    logger.debug(f"Running {len(items)} {desc} on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=not progress))
