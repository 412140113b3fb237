"""Ordered map with an optional thread pool, capped by ``MLAB_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MLAB_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def substream(*key: int) -> np.random.Generator:
    """Independent generator for a counter key, e.g. ``substream(seed, i)``."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])
