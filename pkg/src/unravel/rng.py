"""Per-trajectory random streams.

Every trajectory owns a Philox (counter-based) generator keyed by
``(master seed, stream tag, trajectory index)``.  Nothing depends on how the
trajectories are grouped into blocks or threads, so ensembles are
bit-identical for any degree of parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

# Fixed work-unit size.  Kept independent of the thread count so that the
# vectorised kernels always see identical array layouts.
BLOCK_SIZE = 4096

STREAMS = {
    "direct": 1,
    "direct-mixed": 2,
    "homodyne": 3,
    "heterodyne": 4,
    "photocount": 5,
    "misc": 6,
}


def trajectory_rng(seed: int, index: int, stream: str | int = "misc") -> np.random.Generator:
    tag = STREAMS[stream] if isinstance(stream, str) else int(stream)
    seq = np.random.SeedSequence(int(seed), spawn_key=(tag, int(index)))
    return np.random.Generator(np.random.Philox(seq))


def trajectory_rngs(seed: int, indices: Sequence[int], stream: str | int = "misc") -> list[np.random.Generator]:
    return [trajectory_rng(seed, i, stream) for i in indices]


def blocks(n: int, size: int = BLOCK_SIZE) -> list[range]:
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


def run_blocks(func: Callable[[range], T], n: int, threads: int = 1) -> list[T]:
    """Apply ``func`` to consecutive index blocks, returning results in index order."""
    parts = blocks(n)
    if threads <= 1 or len(parts) == 1:
        return [func(b) for b in parts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, parts))


def draw_chunk(rngs: Sequence[np.random.Generator], n: int, kind: str) -> np.ndarray:
    """Next ``n`` draws of each generator stacked as rows, shape ``(len(rngs), n)``.

    ``kind`` is ``"uniform"``, ``"normal"`` or ``"complex-normal"`` (two
    independent standard normals per entry, real and imaginary parts).
    """
    if kind == "uniform":
        return np.stack([g.random(n) for g in rngs])
    if kind == "normal":
        return np.stack([g.standard_normal(n) for g in rngs])
    if kind == "complex-normal":
        pairs = np.stack([g.standard_normal((n, 2)) for g in rngs])
        return pairs[..., 0] + 1j * pairs[..., 1]
    raise ValueError(f"unknown draw kind {kind!r}")
