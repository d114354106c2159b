"""Shared measures and independent reference computations."""

import functools
import itertools
import math

import numpy as np
import pytest

from rieszlab.measure import build_ifs_measure, build_rectifiable_measure, cantor_spec, embed_measure


@functools.lru_cache(maxsize=None)
def cantor(ratio, depth, m=1):
    return embed_measure(build_ifs_measure(cantor_spec(ratio, depth)), m)


@functools.lru_cache(maxsize=None)
def unit_segment(count=2**16):
    return build_rectifiable_measure("segment", {"start": [0.0], "end": [1.0]}, 1.0 / count)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def cantor_ball_count(ratio, depth, lo, hi):
    """Atoms of the depth-d two-map Cantor measure in the open interval (lo, hi).

    Walks the construction intervals: an interval [a, a+L] carries the
    2^k left endpoints of its depth-k descendants, all in [a, a+L).
    """

    def count(a, length, levels):
        if levels == 0:
            return 1 if lo < a < hi else 0
        if a >= hi or a + length <= lo:
            return 0
        if a > lo and a + length < hi:
            return 2**levels
        sub = ratio * length
        return count(a, sub, levels - 1) + count(a + length - sub, sub, levels - 1)

    return count(0.0, 1.0, depth)


def cantor_atom(ratio, depth, word):
    """Position of the atom with address ``word`` (0 = left map, 1 = right map)."""
    x, length = 0.0, 1.0
    for letter in word:
        length *= ratio
        if letter:
            x += 1.0 / ratio * length - length
    return x


def exhaustive_best_spread(points, x0, r, count):
    """Best min hull-distance / r over all ordered tuples of candidates in the ball."""
    pts = np.asarray(points, dtype=float)
    inside = pts[np.sum((pts - x0) ** 2, axis=1) < r * r]
    best = 0.0
    for combo in itertools.permutations(range(inside.shape[0]), count):
        chosen = inside[list(combo)]
        dists = []
        for j in range(1, count):
            base = chosen[0]
            span = chosen[1:j] - base
            v = chosen[j] - base
            if span.shape[0]:
                q, _ = np.linalg.qr(span.T)
                v = v - q @ (q.T @ v)
            dists.append(float(np.linalg.norm(v)))
        best = max(best, min(dists) / r)
    return best


def scalar_u_integrand(phi, dphi, dist, proj2, eps, s, k):
    """U integrand for one atom at distance ``dist`` with squared projection ``proj2``."""
    r2 = dist * dist
    t = r2 / (eps * eps)
    return (phi(t) * (k - (s + 1) * proj2 / r2) + 2 * dphi(t) * proj2 / eps**2) / dist ** (s + 1)


def log_ratio(t):
    return math.log(t / (1 - t))


def exhaustive_best_spread_fast(points, x0, r, count):
    """Vectorized version of :func:`exhaustive_best_spread` (all ordered tuples at once)."""
    pts = np.asarray(points, dtype=float)
    inside = pts[np.sum((pts - x0) ** 2, axis=1) < r * r]
    if inside.shape[0] < count:
        return 0.0
    tuples = np.fromiter(itertools.chain.from_iterable(itertools.permutations(range(inside.shape[0]), count)),
                         dtype=np.int64).reshape(-1, count)
    chosen = inside[tuples]
    base = chosen[:, 0]
    basis = []
    worst = np.full(tuples.shape[0], np.inf)
    for j in range(1, count):
        v = chosen[:, j] - base
        for e in basis:
            v = v - np.sum(v * e, axis=1, keepdims=True) * e
        for e in basis:
            v = v - np.sum(v * e, axis=1, keepdims=True) * e
        d = np.linalg.norm(v, axis=1)
        worst = np.minimum(worst, d)
        basis.append(v / np.where(d > 0, d, 1.0)[:, None])
    return float(worst.max() / r)
