"""Reproducible random substreams and an order-preserving parallel map.

Work is cut into fixed-size blocks. Block ``b`` draws from a Philox
generator keyed by ``(key, b)``, where ``key`` is one draw from the
caller's generator. Results therefore depend on the seed and the block
size, never on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_BLOCK = 4096


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def substreams(rng, n: int) -> list[np.random.Generator]:
    key = int(as_generator(rng).integers(0, 2**63 - 1))
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence([key, b]))) for b in range(n)]


def block_sizes(total: int, block: int = DEFAULT_BLOCK) -> list[int]:
    total = int(total)
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


def pmap(fn: Callable[..., T], args: Sequence[tuple], threads: int = 1) -> list[T]:
    """``[fn(*a) for a in args]``, optionally on a thread pool, in input order."""
    if threads <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda a: fn(*a), args))
