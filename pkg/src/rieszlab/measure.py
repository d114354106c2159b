"""Discrete measures: weighted atoms with exact ball-mass queries.

A :class:`DiscreteMeasure` stands in for a finite Radon measure.  Balls are
open, ``B(x, r) = {y : |x - y| < r}``, and every mass is reduced with the
fixed pairwise tree of :mod:`rieszlab._summation`, so the kd-tree path and
the brute-force path agree bit for bit.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from rieszlab._summation import pairwise_sum

DEFAULT_ATOM_CAP = 2**20
DEFAULT_FLOOR_FACTOR = 4.0
PER_OCTAVE = 16

# kd-tree candidates are gathered in a slightly inflated closed ball and then
# filtered with the same strict test the brute-force path uses.
_QUERY_INFLATE = 1.0 + 1e-9


class MeasureError(ValueError):
    """Invalid measure construction request."""


class DensityGridError(ValueError):
    """A radius grid lies entirely below the radius floor."""


@dataclass(frozen=True)
class AmbientParams:
    """Ambient dimension ``m`` and exponent ``s``; ``n`` satisfies n < s <= n+1."""

    m: int
    s: float

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"ambient dimension must be an integer >= 1, got {self.m}")
        if not (0.0 < self.s <= self.m):
            raise ValueError(f"need 0 < s <= m, got s={self.s}, m={self.m}")

    @property
    def n(self) -> int:
        return int(math.ceil(self.s)) - 1

    @property
    def is_integer(self) -> bool:
        return float(self.s).is_integer()


def sq_dist(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Squared distances, accumulated coordinate by coordinate in fixed order."""
    d = points[:, 0] - x[0]
    out = d * d
    for j in range(1, points.shape[1]):
        d = points[:, j] - x[j]
        out = out + d * d
    return out


def _nn_spacing(positions: np.ndarray) -> float:
    if positions.shape[0] < 2:
        return 0.0
    dist, _ = cKDTree(positions).query(positions, k=2)
    return float(dist[:, 1].min())


class DiscreteMeasure:
    """Immutable weighted point cloud with a kd-tree index.

    ``resolution`` is the smallest inter-atom spacing; density queries below
    ``radius_floor = floor_factor * resolution`` do not approximate the
    underlying measure and are refused by the estimators.
    """

    def __init__(
        self,
        positions: np.ndarray,
        weights: np.ndarray,
        resolution: float | None = None,
        floor_factor: float = DEFAULT_FLOOR_FACTOR,
        generator: dict[str, Any] | None = None,
        warnings: Sequence[str] = (),
        _tree: cKDTree | None = None,
    ) -> None:
        pos = np.array(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        w = np.array(weights, dtype=float).reshape(-1)
        if pos.shape[0] != w.shape[0] or pos.shape[0] == 0:
            raise MeasureError("positions and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(w)):
            raise MeasureError("non-finite positions or weights")
        if np.any(w < 0):
            raise MeasureError("weights must be nonnegative")
        total = pairwise_sum(w)
        if not total > 0:
            raise MeasureError("total mass must be positive")
        if resolution is None:
            resolution = _nn_spacing(pos)
        if not resolution > 0:
            raise MeasureError("resolution must be positive; pass it explicitly for coincident or single atoms")
        pos.setflags(write=False)
        w.setflags(write=False)
        self.positions = pos
        self.weights = w
        self.total_mass = float(total)
        self.resolution = float(resolution)
        self.floor_factor = float(floor_factor)
        self.generator = dict(generator or {})
        self.warnings = tuple(warnings)
        self.tree = _tree if _tree is not None else cKDTree(pos, balanced_tree=True)

    @property
    def m(self) -> int:
        return self.positions.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def radius_floor(self) -> float:
        return self.floor_factor * self.resolution

    def __repr__(self) -> str:
        return (
            f"DiscreteMeasure(n_atoms={self.n_atoms}, m={self.m}, "
            f"total_mass={self.total_mass:.6g}, resolution={self.resolution:.3g})"
        )

    def scaled(self, factor: float) -> "DiscreteMeasure":
        """Same atoms with weights multiplied by ``factor`` (index reused)."""
        if not factor > 0:
            raise MeasureError("scale factor must be positive")
        return DiscreteMeasure(
            self.positions,
            self.weights * factor,
            self.resolution,
            self.floor_factor,
            {**self.generator, "scaled_by": float(factor)},
            self.warnings,
            _tree=self.tree,
        )

    def ball_indices(self, x: np.ndarray, r: float) -> np.ndarray:
        """Sorted indices of atoms in the open ball B(x, r)."""
        x = np.asarray(x, dtype=float).reshape(self.m)
        cand = self.tree.query_ball_point(x, r * _QUERY_INFLATE)
        if not cand:
            return np.zeros(0, dtype=np.int64)
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        keep = sq_dist(self.positions[cand], x) < r * r
        return cand[keep]

    def neighbors(self, x: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices and squared distances of atoms with |x - y| < r."""
        idx = self.ball_indices(x, r)
        x = np.asarray(x, dtype=float).reshape(self.m)
        return idx, sq_dist(self.positions[idx], x)


# ---------------------------------------------------------------- queries


def ball_mass(mu: DiscreteMeasure, x, r: float) -> float:
    """Mass of the open ball B(x, r), via the spatial index."""
    if not r > 0:
        raise ValueError("radius must be positive")
    idx = mu.ball_indices(x, r)
    return float(pairwise_sum(mu.weights[idx]))


def ball_mass_brute(mu: DiscreteMeasure, x, r: float) -> float:
    """Reference ball mass scanning every atom; same reduction as :func:`ball_mass`."""
    x = np.asarray(x, dtype=float).reshape(mu.m)
    mask = sq_dist(mu.positions, x) < r * r
    return float(pairwise_sum(mu.weights[mask]))


def density(mu: DiscreteMeasure, x, r: float, s: float) -> float:
    """Average density mu(B(x, r)) / r^s."""
    return ball_mass(mu, x, r) / r**s


def dyadic_radii(r_max: float, r_min: float, per_octave: int = PER_OCTAVE, include_min: bool = False) -> np.ndarray:
    """Descending grid r_max * 2^(-j/per_octave) down to r_min."""
    if not (r_max > 0 and r_min > 0):
        raise ValueError("radii must be positive")
    if r_min > r_max:
        return np.zeros(0)
    count = int(math.floor(per_octave * math.log2(r_max / r_min) + 1e-9)) + 1
    radii = r_max * 2.0 ** (-np.arange(count) / per_octave)
    if include_min and radii[-1] > r_min * (1 + 1e-12):
        radii = np.append(radii, r_min)
    return radii


@dataclass(frozen=True)
class DensityProfile:
    center: np.ndarray
    radii: np.ndarray
    thetas: np.ndarray
    s: float

    @property
    def upper(self) -> float:
        return float(self.thetas.max()) if self.thetas.size else 0.0


def _floored(mu: DiscreteMeasure, radii, floor: float | None) -> np.ndarray:
    floor = mu.radius_floor if floor is None else floor
    radii = np.sort(np.asarray(radii, dtype=float).reshape(-1))[::-1]
    kept = radii[radii >= floor * (1 - 1e-12)]
    if kept.size == 0:
        raise DensityGridError(f"all {radii.size} radii lie below the radius floor {floor:.3g}")
    return kept


def density_profile(mu: DiscreteMeasure, x, s: float, radii, floor: float | None = None) -> DensityProfile:
    """theta^s(x, r) for each grid radius at or above the floor (descending)."""
    x = np.asarray(x, dtype=float).reshape(mu.m)
    kept = _floored(mu, radii, floor)
    thetas = np.array([ball_mass(mu, x, r) / r**s for r in kept])
    return DensityProfile(x, kept, thetas, s)


class UpperDensity(NamedTuple):
    value: float
    radii: np.ndarray


def upper_density_estimate(mu: DiscreteMeasure, x, s: float, radii, floor: float | None = None) -> UpperDensity:
    """Grid proxy for the upper density: max of theta^s(x, r) over floored radii."""
    prof = density_profile(mu, x, s, radii, floor)
    return UpperDensity(prof.upper, prof.radii)


def radial_masses(mu: DiscreteMeasure, x, radii: np.ndarray) -> np.ndarray:
    """Open-ball masses at many radii around one center.

    Fast path used by batch filters: one neighbor query, then cumulative
    sums in distance order.  Agrees with :func:`ball_mass` to rounding (and
    exactly for dyadic weights).
    """
    radii = np.asarray(radii, dtype=float)
    idx, d2 = mu.neighbors(x, float(radii.max()))
    order = np.lexsort((idx, d2))
    d2s = d2[order]
    cum = np.concatenate([[0.0], np.cumsum(mu.weights[idx[order]])])
    pos = np.searchsorted(d2s, radii * radii, side="left")
    return cum[pos]


def growth_constant(mu: DiscreteMeasure, s: float, sample, r0: float, floor: float | None = None,
                    per_octave: int = PER_OCTAVE) -> float:
    """Empirical growth constant M with mu(B(x, r)) <= M r^s on the tested grid.

    Radii run from ``r0`` down to the floor (both included); larger balls are
    covered by the total-mass term ``mu(R^m) / r0^s``.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("empty sample")
    sample = sample.reshape(-1, mu.m)
    floor = mu.radius_floor if floor is None else floor
    radii = dyadic_radii(r0, floor, per_octave, include_min=True)
    if radii.size == 0:
        raise DensityGridError("r0 lies below the radius floor")
    best = mu.total_mass / r0**s
    for x in sample:
        masses = np.array([ball_mass(mu, x, r) for r in radii])
        best = max(best, float((masses / radii**s).max()))
    return best


# ------------------------------------------------------------ generators


@dataclass(frozen=True)
class SimilarityMap:
    """x -> ratio * rotation @ x + translation."""

    ratio: float
    translation: tuple[float, ...]
    rotation: tuple[tuple[float, ...], ...] | None = None

    def apply(self, pts: np.ndarray) -> np.ndarray:
        t = np.asarray(self.translation, dtype=float)
        if self.rotation is not None:
            pts = pts @ np.asarray(self.rotation, dtype=float).T
        return self.ratio * pts + t

    def fixed_point(self) -> np.ndarray:
        m = len(self.translation)
        rot = np.eye(m) if self.rotation is None else np.asarray(self.rotation, dtype=float)
        return np.linalg.solve(np.eye(m) - self.ratio * rot, np.asarray(self.translation, dtype=float))


@dataclass(frozen=True)
class IfsSpec:
    maps: tuple[SimilarityMap, ...]
    depth: int
    normalization: str = "equal"
    seed: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.maps:
            raise MeasureError("an IFS needs at least one map")
        if any(not (0.0 < f.ratio < 1.0) for f in self.maps):
            raise MeasureError("all contraction ratios must lie in (0, 1)")
        if self.depth < 1:
            raise MeasureError("depth must be >= 1")
        if self.normalization != "equal":
            raise MeasureError(f"unknown normalization {self.normalization!r}")
        dims = {len(f.translation) for f in self.maps}
        if len(dims) != 1:
            raise MeasureError("maps disagree on the ambient dimension")

    @property
    def m(self) -> int:
        return len(self.maps[0].translation)

    @property
    def atom_count(self) -> int:
        return len(self.maps) ** self.depth

    @property
    def similarity_dimension(self) -> float:
        """Root of sum(ratio_i^s) = 1 (zero for a single map)."""
        ratios = np.array([f.ratio for f in self.maps])
        if ratios.size == 1:
            return 0.0
        if np.all(ratios == ratios[0]):
            return math.log(ratios.size) / -math.log(ratios[0])
        return brentq(lambda t: float(np.sum(ratios**t)) - 1.0, 0.0, 64.0, xtol=1e-15)

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": "ifs",
            "maps": [
                {"ratio": f.ratio, "translation": list(f.translation),
                 "rotation": None if f.rotation is None else [list(r) for r in f.rotation]}
                for f in self.maps
            ],
            "depth": self.depth,
            "normalization": self.normalization,
            "seed": None if self.seed is None else list(self.seed),
        }


def cantor_spec(ratio: float = 1.0 / 3.0, depth: int = 10) -> IfsSpec:
    """Two-map symmetric Cantor set in [0, 1] with the given contraction ratio."""
    return IfsSpec((SimilarityMap(ratio, (0.0,)), SimilarityMap(ratio, (1.0 - ratio,))), depth)


def build_ifs_measure(spec: IfsSpec, ambient: AmbientParams | None = None,
                      cap: int = DEFAULT_ATOM_CAP) -> DiscreteMeasure:
    """Equal-split self-similar measure on the depth-fold images of a seed point.

    The seed defaults to the fixed point of the first map.  Atom order is
    word order with the outermost map varying slowest.
    """
    if ambient is not None and ambient.m != spec.m:
        raise MeasureError(f"IFS lives in R^{spec.m}, ambient says m={ambient.m}")
    if spec.atom_count > cap:
        raise MeasureError(f"{spec.atom_count} atoms exceeds the cap of {cap}")
    seed = spec.maps[0].fixed_point() if spec.seed is None else np.asarray(spec.seed, dtype=float)
    pts = seed.reshape(1, spec.m)
    for _ in range(spec.depth):
        pts = np.concatenate([f.apply(pts) for f in spec.maps], axis=0)
    k = len(spec.maps)
    weights = np.full(pts.shape[0], float(k) ** (-spec.depth))

    warnings: list[str] = []
    spacing = _nn_spacing(pts)
    nominal = min(f.ratio for f in spec.maps) ** spec.depth
    if k > 1:
        if spacing <= 1e-12 * nominal:
            warnings.append("coincident atoms: maps overlap")
        block = pts.shape[0] // k
        boxes = [(pts[i * block:(i + 1) * block].min(0), pts[i * block:(i + 1) * block].max(0)) for i in range(k)]
        tol = 1e-9 * nominal
        for i in range(k):
            for j in range(i + 1, k):
                lo = np.maximum(boxes[i][0], boxes[j][0])
                hi = np.minimum(boxes[i][1], boxes[j][1])
                if np.all(hi - lo > tol):
                    warnings.append(f"first-level pieces {i} and {j} overlap")
    resolution = spacing if spacing > 1e-12 * nominal else nominal
    gen = spec.to_dict()
    gen["similarity_dimension"] = spec.similarity_dimension
    return DiscreteMeasure(pts, weights, resolution, generator=gen, warnings=warnings)


def build_rectifiable_measure(kind: str, params: dict[str, Any], resolution_target: float) -> DiscreteMeasure:
    """Uniform quadrature atoms on a segment, circle or flat k-dimensional patch.

    Weights are arc length (or k-area) per atom, so the total mass is the
    Hausdorff measure of the set up to rounding.

    params by kind:
      segment        start, end
      circle         radius, center (default origin of R^2), plane (2 x m basis, optional)
      k_plane_patch  basis (k x m orthonormal rows), sides (length k), origin (optional)
    """
    h = float(resolution_target)
    if not h > 0:
        raise MeasureError("resolution target must be positive")
    if kind == "segment":
        a = np.asarray(params.get("start", [0.0]), dtype=float).reshape(-1)
        b = np.asarray(params["end"], dtype=float).reshape(-1)
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            raise MeasureError("zero-length segment")
        count = int(math.ceil(length / h - 1e-9))
        u = (np.arange(count) + 0.5) / count
        pts = a + u[:, None] * (b - a)
        weights = np.full(count, length / count)
    elif kind == "circle":
        radius = float(params.get("radius", 1.0))
        if radius <= 0:
            raise MeasureError("zero-radius circle")
        center = np.asarray(params.get("center", [0.0, 0.0]), dtype=float).reshape(-1)
        plane = np.asarray(params.get("plane", np.eye(2, center.size)), dtype=float)
        count = int(math.ceil(2 * math.pi * radius / h - 1e-9))
        ang = 2 * math.pi * np.arange(count) / count
        pts = center + radius * (np.cos(ang)[:, None] * plane[0] + np.sin(ang)[:, None] * plane[1])
        weights = np.full(count, 2 * math.pi * radius / count)
    elif kind == "k_plane_patch":
        basis = np.atleast_2d(np.asarray(params["basis"], dtype=float))
        sides = np.asarray(params.get("sides", np.ones(basis.shape[0])), dtype=float).reshape(-1)
        origin = np.asarray(params.get("origin", np.zeros(basis.shape[1])), dtype=float)
        if sides.size != basis.shape[0] or np.any(sides <= 0):
            raise MeasureError("patch sides must be positive, one per basis vector")
        if not np.allclose(basis @ basis.T, np.eye(basis.shape[0]), atol=1e-12):
            raise MeasureError("patch basis must be orthonormal")
        counts = [int(math.ceil(side / h - 1e-9)) for side in sides]
        axes = [(np.arange(c) + 0.5) / c * side for c, side in zip(counts, sides)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, basis.shape[0])
        pts = origin + grid @ basis
        weights = np.full(grid.shape[0], float(np.prod(sides / np.asarray(counts))))
    else:
        raise MeasureError(f"unknown rectifiable family {kind!r}")
    gen = {"family": kind, "params": _jsonable(params), "resolution_target": h}
    return DiscreteMeasure(pts, weights, generator=gen)


def embed_measure(mu: DiscreteMeasure, m: int) -> DiscreteMeasure:
    """The same measure in R^m, m >= mu.m, on the first coordinate axes."""
    if m < mu.m:
        raise MeasureError(f"cannot embed R^{mu.m} into R^{m}")
    if m == mu.m:
        return mu
    pts = np.zeros((mu.n_atoms, m))
    pts[:, : mu.m] = mu.positions
    gen = {**mu.generator, "embedded_in": m}
    return DiscreteMeasure(pts, mu.weights, mu.resolution, mu.floor_factor, gen, mu.warnings)


def radial_power_measure(center, exponent: float, r_min: float, r_max: float,
                         per_octave: int = 4, scale: float = 1.0) -> DiscreteMeasure:
    """Atoms on a ray from ``center`` with mu(B(center, t)) = scale * t^exponent at nodes.

    A center atom carries scale * r_min^exponent; node j sits just inside
    radius r_min * 2^(j/per_octave).  With exponent = s the density is
    constant on the node grid; with exponent = s + 1 it doubles every octave.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    count = int(math.floor(per_octave * math.log2(r_max / r_min) + 1e-9)) + 1
    nodes = r_min * 2.0 ** (np.arange(count) / per_octave)
    cum = scale * nodes**exponent
    weights = np.concatenate([[cum[0]], np.diff(cum)])
    radii = np.concatenate([[0.0], nodes[1:] * (1 - 1e-6)])
    direction = np.zeros(center.size)
    direction[0] = 1.0
    pts = center + radii[:, None] * direction
    return DiscreteMeasure(
        pts, weights, resolution=float(radii[1] - radii[0]) if count > 1 else r_min,
        generator={"family": "radial_power", "exponent": exponent, "r_min": r_min,
                   "r_max": r_max, "per_octave": per_octave, "scale": scale},
    )


# --------------------------------------------------------- serialization


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def save_measure(mu: DiscreteMeasure, stem: str | Path, s: float | None = None,
                 extra: dict[str, Any] | None = None) -> tuple[Path, Path]:
    """Write ``stem.csv`` (x1..xm,weight) and the ``stem.json`` sidecar.

    ``extra`` entries are added to the sidecar.
    """
    stem = Path(stem)
    csv_path, meta_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    csv_path.write_text(measure_csv(mu))
    meta = {**(extra or {}),
        "m": mu.m,
        "s": s,
        "n_atoms": mu.n_atoms,
        "total_mass": mu.total_mass,
        "resolution": mu.resolution,
        "floor_factor": mu.floor_factor,
        "generator": _jsonable(mu.generator),
        "warnings": list(mu.warnings),
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path


def measure_csv(mu: DiscreteMeasure, comment: str | None = None) -> str:
    """CSV text with header x1..xm,weight; an optional leading ``# comment`` line."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    header = ",".join([f"x{i + 1}" for i in range(mu.m)] + ["weight"])
    np.savetxt(buf, np.column_stack([mu.positions, mu.weights]), fmt="%.17g", delimiter=",",
               header=header, comments="")
    return buf.getvalue()


def load_measure(stem: str | Path) -> tuple[DiscreteMeasure, dict[str, Any]]:
    """Inverse of :func:`save_measure`; leading ``#`` lines in the CSV are skipped."""
    stem = Path(stem)
    try:
        meta = json.loads(stem.with_suffix(".json").read_text())
        lines = stem.with_suffix(".csv").read_text().splitlines()
    except (OSError, json.JSONDecodeError) as exc:
        raise MeasureError(f"cannot read measure {stem}: {exc}") from None
    lines = [ln for ln in lines if not ln.startswith("#")]
    header = lines[0].strip().split(",") if lines else []
    expected = [f"x{i + 1}" for i in range(meta["m"])] + ["weight"]
    if header != expected:
        raise MeasureError(f"unexpected CSV header {header}")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    mu = DiscreteMeasure(data[:, :-1], data[:, -1], meta["resolution"], meta["floor_factor"],
                         meta["generator"], meta.get("warnings", ()))
    return mu, meta
