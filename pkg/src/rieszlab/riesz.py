"""Truncated and smoothed s-Riesz transforms of discrete measures.

All transforms are direct atom sums reduced with the fixed pairwise tree;
batch evaluation is chunked by query point with a chunk size that does not
depend on the thread count, so results are bit-identical for any
``threads``.
"""

from __future__ import annotations

import csv
import io
import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from rieszlab._summation import pairwise_sum, parallel_map, segmented_pairwise_sum
from rieszlab.geometry import AffineFrame
from rieszlab.measure import DiscreteMeasure, ball_mass, sq_dist
from rieszlab.smoothing import SmoothingProfile, kernel_factor

CHUNK = 64
_INFLATE = 1.0 + 1e-9


class PreconditionError(ValueError):
    """An operation was called outside the regime where it is defined."""


@dataclass(frozen=True)
class RieszValue:
    value: np.ndarray
    atom_count: int


def _as_point(mu: DiscreteMeasure, x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(mu.m)


def truncated_riesz(mu: DiscreteMeasure, x, eps: float, s: float) -> RieszValue:
    """Sum of w (x-y)/|x-y|^(s+1) over atoms with |x - y| > eps."""
    x = _as_point(mu, x)
    if eps < mu.radius_floor:
        warnings.warn(f"eps={eps:.3g} below the radius floor {mu.radius_floor:.3g}", stacklevel=2)
    d2 = sq_dist(mu.positions, x)
    mask = d2 > eps * eps
    diff = x - mu.positions[mask]
    terms = (mu.weights[mask] / d2[mask] ** ((s + 1) / 2))[:, None] * diff
    return RieszValue(np.asarray(pairwise_sum(terms)).reshape(mu.m), int(mask.sum()))


def _smoothed_chunk(mu: DiscreteMeasure, X: np.ndarray, eps: float, profile: SmoothingProfile):
    radius = eps * profile.support_radius_factor
    lists = mu.tree.query_ball_point(X, radius * _INFLATE)
    idx_parts, lengths = [], []
    for i, cand in enumerate(lists):
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        idx_parts.append(cand)
        lengths.append(cand.size)
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.sum() == 0:
        return np.zeros((X.shape[0], mu.m)), np.zeros(X.shape[0], dtype=np.int64)
    idx = np.concatenate(idx_parts)
    owner = np.repeat(np.arange(X.shape[0]), lengths)
    diff = X[owner] - mu.positions[idx]
    r2 = diff[:, 0] * diff[:, 0]
    for j in range(1, mu.m):
        r2 = r2 + diff[:, j] * diff[:, j]
    factor = kernel_factor(profile, r2, eps) * mu.weights[idx]
    terms = factor[:, None] * diff
    live = (r2 > 0) & (r2 < radius * radius)
    counts = np.bincount(owner[live], minlength=X.shape[0])
    return segmented_pairwise_sum(terms, lengths), counts


def smoothed_riesz_many(mu: DiscreteMeasure, X, eps: float, profile: SmoothingProfile,
                        threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """R_{phi,eps} at each row of ``X``; returns (values, contributing atom counts)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    X = np.asarray(X, dtype=float).reshape(-1, mu.m)
    chunks = [X[i:i + CHUNK] for i in range(0, X.shape[0], CHUNK)]
    parts = parallel_map(lambda c: _smoothed_chunk(mu, c, eps, profile), chunks, threads)
    if not parts:
        return np.zeros((0, mu.m)), np.zeros(0, dtype=np.int64)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def smoothed_riesz(mu: DiscreteMeasure, x, eps: float, profile: SmoothingProfile) -> RieszValue:
    """R_{phi,eps} mu(x) = sum of w k_{phi,eps}(x - y); atoms beyond the support are skipped."""
    vals, counts = smoothed_riesz_many(mu, _as_point(mu, x)[None], eps, profile, threads=1)
    return RieszValue(vals[0], int(counts[0]))


def _local_terms(mu: DiscreteMeasure, base: np.ndarray, eps: float, profile: SmoothingProfile):
    """Offsets y - base, |y - base|^2, phi and phi' at |y-base|^2/eps^2, and weights."""
    idx, r2 = mu.neighbors(base, eps * profile.support_radius_factor * _INFLATE)
    y = mu.positions[idx] - base
    t = r2 / (eps * eps)
    return y, r2, t, profile.evaluate(t, 0), profile.evaluate(t, 1), mu.weights[idx]


def taylor_main_term(mu: DiscreteMeasure, x, eps: float, profile: SmoothingProfile, base=None) -> np.ndarray:
    """Linear part of R_{phi,eps} around ``base`` applied to the offset ``x``.

    ``x`` is expressed in coordinates centred at ``base`` (the origin by
    default) and must satisfy |x| < eps/4.  An atom at the base point itself
    takes the continuous extension x / eps^(s+1) of the integrand.
    """
    base = np.zeros(mu.m) if base is None else _as_point(mu, base)
    x = _as_point(mu, x)
    if not float(np.linalg.norm(x)) < eps / 4:
        raise PreconditionError(f"|x| = {np.linalg.norm(x):.3g} is not below eps/4 = {eps / 4:.3g}")
    s = profile.s
    y, r2, t, phi, dphi, w = _local_terms(mu, base, eps, profile)
    terms = np.zeros_like(y)
    at_base = r2 == 0
    terms[at_base] = w[at_base][:, None] * (x / eps ** (s + 1))
    o = ~at_base
    if np.any(o):
        xy = y[o] @ x
        inv = w[o] / r2[o] ** ((s + 1) / 2)
        bracket = (phi[o][:, None] * (x[None, :] - ((s + 1) * xy / r2[o])[:, None] * y[o])
                   + (dphi[o] * 2 * xy / eps**2)[:, None] * y[o])
        terms[o] = inv[:, None] * bracket
    return np.asarray(pairwise_sum(terms)).reshape(mu.m)


@dataclass(frozen=True)
class TaylorSplit:
    delta: np.ndarray
    main_term: np.ndarray
    residual: np.ndarray
    bound: float
    theta_3eps: float
    vacuous: bool


def taylor_split(mu: DiscreteMeasure, base, x, eps: float, profile: SmoothingProfile) -> TaylorSplit:
    """R(x) - R(base) = T(x - base) + E with the residual E taken as the difference.

    ``bound`` is the empirical constant |E| eps^2 / (theta^s(base, 3 eps) |x - base|^2).
    """
    base = _as_point(mu, base)
    x = _as_point(mu, x)
    offset = x - base
    main = taylor_main_term(mu, offset, eps, profile, base=base)
    vals, _ = smoothed_riesz_many(mu, np.stack([x, base]), eps, profile, threads=1)
    delta = vals[0] - vals[1]
    residual = delta - main
    theta = ball_mass(mu, base, 3 * eps) / (3 * eps) ** profile.s
    h2 = float(offset @ offset)
    vacuous = theta == 0
    if h2 == 0 or vacuous:
        bound = 0.0
    else:
        bound = float(np.linalg.norm(residual)) * eps**2 / (theta * h2)
    return TaylorSplit(delta, main, residual, bound, theta, vacuous)


def u_terms(mu: DiscreteMeasure, y0, frame: AffineFrame, eps: float, profile: SmoothingProfile):
    """Per-atom integrand of U^eps(y0) with t = |z - y0|^2/eps^2 for each atom.

    The base atom takes the continuous extension (n+1)/eps^(s+1).
    """
    y0 = _as_point(mu, y0)
    s = profile.s
    k = frame.k
    z, r2, t, phi, dphi, w = _local_terms(mu, y0, eps, profile)
    proj2 = frame.projected_sq_norm(z)
    vals = np.empty(r2.shape)
    at_base = r2 == 0
    vals[at_base] = k / eps ** (s + 1)
    o = ~at_base
    vals[o] = (phi[o] * (k - (s + 1) * proj2[o] / r2[o]) + 2 * dphi[o] * proj2[o] / eps**2) / r2[o] ** ((s + 1) / 2)
    return t, vals * w


def u_functional(mu: DiscreteMeasure, y0, frame: AffineFrame, eps: float, profile: SmoothingProfile) -> float:
    """U^eps(y0): trace of the Taylor main term along the frame directions.

    ``frame.k`` plays the role of n+1 and the projection is onto the
    frame's linear span.
    """
    _, vals = u_terms(mu, y0, frame, eps, profile)
    return float(pairwise_sum(vals))


# ------------------------------------------------------------- PV scans


@dataclass(frozen=True)
class PVScan:
    eps: np.ndarray
    values: np.ndarray
    osc_tail: np.ndarray
    kind: str
    dropped: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        m = self.values.shape[1]
        writer.writerow(["eps"] + [f"comp_{i + 1}" for i in range(m)] + ["osc_tail"])
        for e, v, o in zip(self.eps, self.values, self.osc_tail):
            writer.writerow([repr(float(e))] + [repr(float(c)) for c in v] + [repr(float(o))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eps": self.eps.tolist(),
            "values": self.values.tolist(),
            "osc_tail": self.osc_tail.tolist(),
            "dropped_below_floor": self.dropped,
        }


def max_pair_diff(values: np.ndarray) -> float:
    """Largest Euclidean distance between two rows."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 2:
        return 0.0
    best = 0.0
    for i, j in itertools.combinations(range(v.shape[0]), 2):
        best = max(best, float(np.linalg.norm(v[i] - v[j])))
    return best


def tail_oscillation(values: np.ndarray) -> np.ndarray:
    """osc[i] = max pairwise distance among values[i:]."""
    v = np.asarray(values, dtype=float)
    g = v.shape[0]
    out = np.zeros(g)
    running = 0.0
    for i in range(g - 1, -1, -1):
        for j in range(i + 1, g):
            running = max(running, float(np.linalg.norm(v[i] - v[j])))
        out[i] = running
    return out


def pv_scan(mu: DiscreteMeasure, x, eps_grid, profile: SmoothingProfile, kind: str = "smoothed",
            threads: int | None = None) -> PVScan:
    """Transform values along a descending eps grid, with tail oscillation.

    Grid entries below the radius floor are dropped with a warning.
    """
    x = _as_point(mu, x)
    grid = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    keep = grid >= mu.radius_floor
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"pv_scan: dropped {dropped} eps values below the radius floor", stacklevel=2)
    grid = grid[keep]
    if kind == "smoothed":
        rows = parallel_map(lambda e: smoothed_riesz(mu, x, e, profile).value, list(grid), threads)
    elif kind == "truncated":
        rows = parallel_map(lambda e: truncated_riesz(mu, x, e, profile.s).value, list(grid), threads)
    else:
        raise ValueError(f"unknown scan kind {kind!r}")
    values = np.array(rows).reshape(-1, mu.m)
    return PVScan(grid, values, tail_oscillation(values), kind, dropped)
