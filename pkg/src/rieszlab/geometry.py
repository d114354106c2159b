"""Affine frames, hull distances and greedy spread-point selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10


class AffineDegeneracyError(ValueError):
    """Points do not span an affine subspace of the expected dimension."""

    def __init__(self, message: str, achieved_dim: int):
        super().__init__(message)
        self.achieved_dim = achieved_dim


class InsufficientCandidatesError(ValueError):
    """Fewer candidates in the ball than points requested."""


@dataclass(frozen=True)
class AffineFrame:
    """Base point plus orthonormal rows spanning the direction space."""

    base: np.ndarray
    basis: np.ndarray

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    @property
    def m(self) -> int:
        return self.base.shape[0]

    def coords(self, v: np.ndarray) -> np.ndarray:
        """Components of vectors ``v`` (base-relative) along the basis."""
        v = np.atleast_2d(v)
        return v @ self.basis.T

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of base-relative vectors onto the span."""
        v = np.asarray(v, dtype=float)
        return (np.atleast_2d(v) @ self.basis.T @ self.basis).reshape(v.shape)

    def projected_sq_norm(self, v: np.ndarray) -> np.ndarray:
        c = self.coords(np.asarray(v, dtype=float))
        return np.einsum("ij,ij->i", c, c)

    def to_dict(self) -> dict:
        return {"base": self.base.tolist(), "basis": self.basis.tolist(), "k": self.k}


def orthonormalize(points, tol: float = PIVOT_TOL, pivot: bool = False) -> AffineFrame:
    """Orthonormal frame for the affine hull of ``points`` (rows y_0..y_k).

    Without pivoting the basis is nested: e_1..e_j spans L_j - y_0 for every
    j, so the last vector is the unit direction from the projection of y_k
    onto L_{k-1} towards y_k.  With ``pivot=True`` the remaining vector of
    largest residual is taken at each step; only the final span is then
    guaranteed.  Modified Gram-Schmidt runs twice per vector.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    base = pts[0].copy()
    vecs = pts[1:] - base
    m = pts.shape[1]
    if vecs.shape[0] == 0:
        return AffineFrame(base, np.zeros((0, m)))
    if vecs.shape[0] > m:
        raise AffineDegeneracyError(f"{vecs.shape[0]} directions cannot be independent in R^{m}", m)
    diam = max(float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1))), np.finfo(float).tiny)
    basis: list[np.ndarray] = []
    remaining = [v.copy() for v in vecs]
    while remaining:
        for _ in range(2):
            for i, v in enumerate(remaining):
                for e in basis:
                    v = v - (v @ e) * e
                remaining[i] = v
        pick = int(np.argmax([np.linalg.norm(v) for v in remaining])) if pivot else 0
        v = remaining.pop(pick)
        norm = float(np.linalg.norm(v))
        if norm <= tol * diam:
            raise AffineDegeneracyError(
                f"points are affinely dependent: residual {norm:.3g} at step {len(basis) + 1}",
                len(basis),
            )
        basis.append(v / norm)
    return AffineFrame(base, np.array(basis))


def dist_to_affine(z, frame: AffineFrame) -> np.ndarray | float:
    """Distance from point(s) ``z`` to the affine subspace of ``frame``."""
    z = np.asarray(z, dtype=float)
    v = np.atleast_2d(z) - frame.base
    resid = v - v @ frame.basis.T @ frame.basis
    d = np.sqrt(np.einsum("ij,ij->i", resid, resid))
    return float(d[0]) if z.ndim == 1 else d


@dataclass(frozen=True)
class SpreadSelection:
    points: np.ndarray
    indices: np.ndarray
    hull_distances: np.ndarray
    spread_ratio: float
    x0: np.ndarray
    r: float

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "indices": self.indices.tolist(),
            "hull_distances": self.hull_distances.tolist(),
            "spread_ratio": self.spread_ratio,
            "x0": self.x0.tolist(),
            "r": self.r,
        }


def select_spread_points(candidates, x0, r: float, count: int, indices=None,
                         tol: float = PIVOT_TOL) -> SpreadSelection:
    """Greedy choice of ``count`` well-spread candidates inside B(x0, r).

    y_0 is the candidate nearest x0; each later pick maximizes the distance
    to the hull of the points chosen so far.  Ties go to the smallest index,
    and candidates are processed in index order, so the result does not
    depend on how the input is ordered.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(cand.shape[1])
    idx = np.arange(cand.shape[0]) if indices is None else np.asarray(indices, dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    cand, idx = cand[order], idx[order]
    diff = cand - x0
    d2 = np.einsum("ij,ij->i", diff, diff)
    inside = d2 < r * r
    cand, idx, d2 = cand[inside], idx[inside], d2[inside]
    if cand.shape[0] < count:
        raise InsufficientCandidatesError(f"need {count} candidates in the ball, found {cand.shape[0]}")

    chosen = [int(np.argmin(d2))]
    dists: list[float] = []
    for _ in range(1, count):
        frame = orthonormalize(cand[chosen])
        dd = dist_to_affine(cand, frame)
        j = int(np.argmax(dd))
        if not dd[j] > tol * r:
            raise AffineDegeneracyError(
                f"candidates span only a {len(chosen) - 1}-dimensional hull", len(chosen) - 1
            )
        chosen.append(j)
        dists.append(float(dd[j]))
    hull = np.array(dists)
    ratio = float(hull.min() / r) if hull.size else 0.0
    return SpreadSelection(cand[chosen], idx[chosen], hull, ratio, x0, float(r))
