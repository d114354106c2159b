"""Deterministic pairwise reductions.

Every sum that feeds an inequality check goes through these two functions.
The reduction tree is fixed by the element order alone: adjacent pairs are
combined level by level and an odd trailing element is carried unchanged to
the next level.  The segmented variant applies the same tree to each
segment, so reducing one segment on its own and reducing it as part of a
batch give bit-identical results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


def pairwise_sum(values: np.ndarray) -> np.ndarray | float:
    """Sum ``values`` along axis 0 with a fixed pairwise tree."""
    a = np.asarray(values, dtype=float)
    if a.shape[0] == 0:
        return np.zeros(a.shape[1:]) if a.ndim > 1 else 0.0
    while a.shape[0] > 1:
        n = a.shape[0]
        half = n // 2
        paired = a[0 : 2 * half : 2] + a[1 : 2 * half : 2]
        if n % 2:
            paired = np.concatenate([paired, a[n - 1 : n]], axis=0)
        a = paired
    out = a[0]
    return float(out) if a.ndim == 1 else out.copy()


def segmented_pairwise_sum(values: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Pairwise-sum consecutive segments of ``values``.

    ``values`` holds the segments back to back along axis 0 and ``lengths``
    gives the size of each.  Empty segments sum to zero.
    """
    a = np.asarray(values, dtype=float)
    lengths = np.asarray(lengths, dtype=np.int64)
    nseg = lengths.shape[0]
    out = np.zeros((nseg,) + a.shape[1:])
    if nseg == 0 or a.shape[0] == 0:
        return out
    if int(lengths.sum()) != a.shape[0]:
        raise ValueError("segment lengths do not cover the values array")

    while lengths.max() > 1:
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        seg_of = np.repeat(np.arange(nseg), lengths)
        local = np.arange(a.shape[0]) - starts[seg_of]
        new_lengths = (lengths + 1) // 2

        heads = np.flatnonzero(local % 2 == 0)
        has_partner = local[heads] + 1 < lengths[seg_of[heads]]
        new = a[heads].copy()
        pi = heads[has_partner]
        new[has_partner] = a[pi] + a[pi + 1]

        # heads come out in (segment, local) order, which is the next layout
        a = new
        lengths = new_lengths

    nonempty = lengths > 0
    out[nonempty] = a
    return out


def resolve_threads(threads: int | None) -> int:
    """Worker count: explicit value, else ``RIESZLAB_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("RIESZLAB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def parallel_map(fn: Callable[[T], object], items: Sequence[T], threads: int | None = None) -> list:
    """Order-preserving map over ``items``.

    Work items are fixed by the caller, never by the worker count, so the
    outputs do not depend on ``threads``.
    """
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
