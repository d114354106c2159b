"""F_delta filtering, scale selection and instrumentation of the lemma chain.

Every check measures and records; only structural problems (bad inputs,
empty candidate sets, failed pipeline stages) raise.  Suprema over
continuous ranges of radii or scales are taken on dyadic-refined grids,
16 points per octave unless a caller asks otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Any, Sequence

import numpy as np

from rieszlab._summation import pairwise_sum
from rieszlab.geometry import (AffineFrame, SpreadSelection, orthonormalize,
                               select_spread_points)
from rieszlab.measure import (PER_OCTAVE, DensityGridError, DiscreteMeasure, ball_mass,
                              dyadic_radii, radial_masses)
from rieszlab.riesz import (PVScan, PreconditionError, _local_terms, max_pair_diff, pv_scan,
                            smoothed_riesz_many, tail_oscillation, taylor_split, u_functional, u_terms)
from rieszlab.smoothing import SmoothingProfile

SCHEMA_VERSION = 1
DEFAULT_MAX_K = 8
LEMMA4_TOL = 0.1
TOL_CONV = 1e-2
TOL_OSC_REL = 5e-2
_NOISE_REL = 1e-11


class GrowthAnomalyError(RuntimeError):
    """No doubling scale exists below 4^maxK * eps1."""

    def __init__(self, message: str, delta_k: Sequence[float]):
        super().__init__(message)
        self.delta_k = list(delta_k)


class EmptyFDeltaError(RuntimeError):
    """Every candidate atom failed at least one F_delta condition."""

    def __init__(self, message: str, histogram: dict[str, Any]):
        super().__init__(message)
        self.histogram = histogram


class PipelineError(RuntimeError):
    """A stage of the contradiction pipeline could not run."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ------------------------------------------------------------------ F_delta


@dataclass(frozen=True)
class FDeltaParams:
    delta: float
    r0: float
    eps0: float
    C0: float
    eps_grid: tuple[float, ...]
    limsup_octaves: int = 4
    per_octave: int = PER_OCTAVE

    def __post_init__(self) -> None:
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (self.r0 > 0 and self.eps0 > 0):
            raise ValueError("r0 and eps0 must be positive")
        if self.C0 <= 0:
            raise ValueError("C0 must be positive")
        grid = tuple(sorted((float(e) for e in self.eps_grid), reverse=True))
        if not grid:
            raise ValueError("eps_grid is empty")
        if grid[-1] <= 0 or grid[0] > self.eps0 * (1 + 1e-12):
            raise ValueError("eps_grid must lie in (0, eps0]")
        if self.limsup_octaves < 1:
            raise ValueError("limsup_octaves must be >= 1")
        object.__setattr__(self, "eps_grid", grid)

    @classmethod
    def with_dyadic_grid(cls, delta: float, r0: float, eps0: float, C0: float, eps_min: float,
                         per_octave: int = PER_OCTAVE, **kw) -> "FDeltaParams":
        return cls(delta, r0, eps0, C0, tuple(dyadic_radii(eps0, eps_min, per_octave)), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps_grid"] = list(self.eps_grid)
        return d


@dataclass(frozen=True)
class FDeltaResult:
    params: FDeltaParams
    candidates: np.ndarray
    theta_star: np.ndarray
    growth_ratio: np.ndarray
    oscillation: np.ndarray
    radii_used: int
    limsup_band: tuple[float, float]

    def mask(self, delta: float | None = None, C0: float | None = None) -> np.ndarray:
        delta = self.params.delta if delta is None else delta
        C0 = self.params.C0 if C0 is None else C0
        return (self.growth_ratio <= 2.0) & (self.oscillation <= delta) & (self.theta_star <= C0)

    def retained(self, delta: float | None = None, C0: float | None = None) -> np.ndarray:
        return self.candidates[self.mask(delta, C0)]

    @property
    def indices(self) -> np.ndarray:
        return self.retained()

    def retention(self, delta: float | None = None) -> float:
        return float(self.mask(delta).mean()) if self.candidates.size else 0.0

    def histogram(self) -> dict[str, Any]:
        fails = {
            "growth": int((self.growth_ratio > 2.0).sum()),
            "oscillation": int((self.oscillation > self.params.delta).sum()),
            "density_cap": int((self.theta_star > self.params.C0).sum()),
        }
        dominant = max(fails, key=lambda k: (fails[k], k)) if any(fails.values()) else None
        return {**fails, "candidates": int(self.candidates.size), "dominant": dominant}

    def stats(self, index: int) -> dict[str, float]:
        pos = int(np.searchsorted(self.candidates, index))
        if pos >= self.candidates.size or self.candidates[pos] != index:
            raise KeyError(index)
        return {"theta_star": float(self.theta_star[pos]), "growth_ratio": float(self.growth_ratio[pos]),
                "oscillation": float(self.oscillation[pos])}

    def merged(self, other: "FDeltaResult") -> "FDeltaResult":
        if other.params != self.params:
            raise ValueError("cannot merge filters run with different parameters")
        cand = np.concatenate([self.candidates, other.candidates])
        order = np.argsort(cand, kind="stable")
        cand = cand[order]
        keep = np.concatenate([[True], cand[1:] != cand[:-1]])
        pick = lambda a, b: np.concatenate([a, b])[order][keep]
        return FDeltaResult(self.params, cand[keep], pick(self.theta_star, other.theta_star),
                            pick(self.growth_ratio, other.growth_ratio),
                            pick(self.oscillation, other.oscillation), self.radii_used, self.limsup_band)

    def summary(self) -> dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "candidates": int(self.candidates.size),
            "retained": int(self.mask().sum()),
            "retention": self.retention(),
            "rejections": self.histogram(),
            "limsup_band": list(self.limsup_band),
            "radii_per_atom": self.radii_used,
        }


def _batch_max_pair_diff(values: np.ndarray) -> np.ndarray:
    """values has shape (atoms, grid, m); max over grid pairs of the distance."""
    if values.shape[1] < 2:
        return np.zeros(values.shape[0])
    if values.shape[2] == 1:
        v = values[:, :, 0]
        return v.max(axis=1) - v.min(axis=1)
    out = np.zeros(values.shape[0])
    for i in range(values.shape[1] - 1):
        d = values[:, i + 1:, :] - values[:, i:i + 1, :]
        out = np.maximum(out, np.sqrt(np.einsum("agm,agm->ag", d, d)).max(axis=1))
    return out


def f_delta_filter(mu: DiscreteMeasure, params: FDeltaParams, profile: SmoothingProfile, s: float,
                   subset=None, allow_empty: bool = False, threads: int | None = None) -> FDeltaResult:
    """Grid version of the F_delta membership test for each candidate atom.

    theta_hat* is the largest density over the finest ``limsup_octaves``
    octaves of the radius grid above the floor.  An atom is retained when
    (a) theta(x, r) <= 2 theta_hat* on the whole grid up to r0, (b) the
    smoothed transform varies by at most delta over ``eps_grid`` and (c)
    theta_hat* <= C0.
    """
    floor = mu.radius_floor
    if params.r0 < floor:
        raise DensityGridError(f"r0={params.r0:.3g} lies below the radius floor {floor:.3g}")
    if params.eps_grid[-1] < floor:
        raise DensityGridError(f"eps grid reaches {params.eps_grid[-1]:.3g}, below the floor {floor:.3g}")
    cand = np.arange(mu.n_atoms) if subset is None else np.unique(np.asarray(subset, dtype=np.int64))
    radii = dyadic_radii(params.r0, floor, params.per_octave, include_min=True)
    band_top = floor * 2.0 ** params.limsup_octaves
    in_band = radii <= band_top * (1 + 1e-12)

    theta_star = np.empty(cand.size)
    growth = np.empty(cand.size)
    for a, i in enumerate(cand):
        thetas = radial_masses(mu, mu.positions[i], radii) / radii**s
        theta_star[a] = thetas[in_band].max()
        growth[a] = thetas.max() / theta_star[a] if theta_star[a] > 0 else math.inf

    X = mu.positions[cand]
    vals = np.empty((cand.size, len(params.eps_grid), mu.m))
    for g, eps in enumerate(params.eps_grid):
        vals[:, g, :] = smoothed_riesz_many(mu, X, eps, profile, threads)[0]
    osc = _batch_max_pair_diff(vals)

    result = FDeltaResult(params, cand, theta_star, growth, osc, int(radii.size),
                          (float(radii[in_band].min()), float(radii[in_band].max())))
    if not allow_empty and cand.size and not result.mask().any():
        hist = result.histogram()
        raise EmptyFDeltaError(f"F_delta is empty; dominant rejection: {hist['dominant']}", hist)
    return result


# --------------------------------------------------------- scale selection


@dataclass(frozen=True)
class ScaleSelection:
    eps1: float
    omega0: float
    chosen_eps: float
    k: int
    delta_k: tuple[float, ...]
    theta_at_eps: float
    postcondition_ratio: float
    rho: float
    per_octave: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta_k"] = list(self.delta_k)
        return d


def select_scale(mu: DiscreteMeasure, y0, eps1: float, rho: float, s: float,
                 max_k: int = DEFAULT_MAX_K, per_octave: int = PER_OCTAVE) -> ScaleSelection:
    """Pigeonhole choice of a doubling scale in [eps1, 4^k eps1].

    delta_k is the largest density on the grid eps1 * 2^(j/per_octave) up to
    4^k eps1.  The smallest k <= max_k with delta_k >= delta_{k+1}/(1+rho^2/4)
    is used, and the returned scale is the first grid point t with
    delta_k <= theta(t)(1 + rho^2/4).  The bound theta(t) <= (1+rho^2)
    theta(eps) on [eps, 4 eps] is then re-checked on the grid.
    """
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    if eps1 < mu.radius_floor:
        raise DensityGridError(f"eps1={eps1:.3g} lies below the radius floor {mu.radius_floor:.3g}")
    y0 = np.asarray(y0, dtype=float).reshape(mu.m)
    steps = 2 * per_octave
    grid = eps1 * 2.0 ** (np.arange(steps * (max_k + 1) + 1) / per_octave)
    thetas = radial_masses(mu, y0, grid) / grid**s
    running = np.maximum.accumulate(thetas)
    delta_k = tuple(float(running[steps * k]) for k in range(1, max_k + 2))
    slack = 1.0 + rho * rho / 4
    k = next((k for k in range(1, max_k + 1) if delta_k[k - 1] * slack >= delta_k[k]), None)
    if k is None:
        raise GrowthAnomalyError(
            f"no doubling scale up to 4^{max_k} eps1: densities keep growing "
            f"(delta_k ratios {[round(b / a, 3) for a, b in zip(delta_k, delta_k[1:])]})", delta_k)
    target = delta_k[k - 1]
    j = int(np.flatnonzero(thetas[: steps * k + 1] * slack >= target)[0])
    eps = float(grid[j])
    window = thetas[j: j + steps + 1]
    ratio = float(window.max() / thetas[j])
    if ratio > 1.0 + rho * rho:
        raise AssertionError(f"scale postcondition violated: ratio {ratio}")
    return ScaleSelection(float(eps1), float(4.0**max_k), eps, k, delta_k, float(thetas[j]), ratio,
                          float(rho), per_octave)


# ------------------------------------------------------------ annuli / U


@dataclass(frozen=True)
class Annuli:
    I1: float
    I2: float
    I3: float
    I4: float
    masses: tuple[float, float, float, float]

    @property
    def total(self) -> float:
        return self.I1 + self.I2 + self.I3 + self.I4

    def to_dict(self) -> dict:
        return {"I1": self.I1, "I2": self.I2, "I3": self.I3, "I4": self.I4,
                "masses": list(self.masses), "total": self.total}


def u_annuli_decomposition(mu: DiscreteMeasure, y0, frame: AffineFrame, eps: float,
                           profile: SmoothingProfile) -> Annuli:
    """Split U^eps(y0) over A1 (|z| < eps), A2 (up to eps sqrt(1+rho^2)), A3 and A4.

    The sphere |z| = eps sqrt(1+rho+rho^2), which the open annuli A3 and
    A4 both leave out, is counted in A4, as is everything out to the
    kernel support.
    """
    t, vals = u_terms(mu, y0, frame, eps, profile)
    w = _local_terms(mu, np.asarray(y0, dtype=float).reshape(mu.m), eps, profile)[5]
    j0, j1, j2, _ = profile.junctions
    groups = [t < j0, (t >= j0) & (t <= j1), (t > j1) & (t < j2), t >= j2]
    parts = [float(pairwise_sum(vals[g])) for g in groups]
    masses = tuple(float(pairwise_sum(w[g])) for g in groups)
    return Annuli(*parts, masses=masses)


def _theta(mu: DiscreteMeasure, x, r: float, s: float) -> float:
    return ball_mass(mu, x, r) / r**s


# ------------------------------------------------------------ lemma checks


@dataclass(frozen=True)
class Lemma1Result:
    eps: float
    fractions: tuple[float, ...]
    directions: np.ndarray
    pooled: np.ndarray
    fitted_order: float | None
    order_by_direction: tuple[float | None, ...]
    residual_ratio: float
    c1_direction_spread: float | None
    exact_linear: int
    configurations: int

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "fractions": list(self.fractions),
            "directions": self.directions.tolist(),
            "pooled_mean_residual": self.pooled.tolist(),
            "fittedOrder": self.fitted_order,
            "order_by_direction": list(self.order_by_direction),
            "residualRatio": self.residual_ratio,
            "c1_direction_spread": self.c1_direction_spread,
            "exactly_linear_configurations": self.exact_linear,
            "configurations": self.configurations,
        }


def default_fractions(count: int = 9) -> tuple[float, ...]:
    """|x|/eps from just below 1/4 down to 1/64, log-spaced."""
    return tuple(float(f) for f in (1 - 2.0**-20) * 2.0 ** -np.linspace(2, 6, count))


def normal_directions(frame: AffineFrame) -> np.ndarray:
    """Orthonormal directions complementary to the frame span (empty if it is full)."""
    m = frame.m
    if frame.k >= m:
        return np.zeros((0, m))
    q, _ = np.linalg.qr(np.concatenate([frame.basis, np.eye(m)]).T)
    return q[:, frame.k:m].T * np.sign(q[:, frame.k:m].T.sum(axis=1, keepdims=True) + 0.5)


def _slope(x: np.ndarray, y: np.ndarray) -> float | None:
    if np.any(y <= 0):
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def lemma1_check(mu: DiscreteMeasure, bases, eps: float, profile: SmoothingProfile, directions,
                 fractions: Sequence[float] | None = None) -> Lemma1Result:
    """Order of the Taylor residual E(x) = R(x) - R(0) - T(x) as |x| shrinks.

    For every base point, direction and |x| = f eps the residual is taken
    as a difference.  Residuals at rounding level (below 1e-11 of the local
    mass scale theta(3 eps) 3^s) are set to zero: the kernel is exactly
    linear for atoms that stay inside B(x, eps) or outside the support, so E
    can vanish identically.  ``fitted_order`` is the log-log slope of the
    base-averaged |E| against |x|.
    """
    fractions = default_fractions() if fractions is None else tuple(float(f) for f in fractions)
    bases = np.atleast_2d(np.asarray(bases, dtype=float))
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    s = profile.s
    nb, nd, nf = bases.shape[0], dirs.shape[0], len(fractions)
    E = np.zeros((nb, nd, nf))
    C1 = np.zeros((nb, nd, nf))
    for b, base in enumerate(bases):
        for d, u in enumerate(dirs):
            for f, frac in enumerate(fractions):
                ts = taylor_split(mu, base, base + frac * eps * u, eps, profile)
                e = float(np.linalg.norm(ts.residual))
                if e <= _NOISE_REL * ts.theta_3eps * 3.0**s:
                    e = 0.0
                E[b, d, f] = e
                C1[b, d, f] = 0.0 if ts.vacuous else e / (ts.theta_3eps * frac**2)
    pooled = E.mean(axis=0)
    xs = np.asarray(fractions) * eps
    by_dir = tuple(_slope(xs, pooled[d]) for d in range(nd))
    fitted = _slope(xs, pooled.mean(axis=0))
    spread = None
    per_dir = C1.mean(axis=0)[:, 0]
    if nd > 1 and np.all(per_dir > 0):
        spread = float(per_dir.max() / per_dir.min())
    exact = int(np.all(E == 0, axis=2).sum())
    return Lemma1Result(float(eps), fractions, dirs, pooled, fitted, by_dir, float(C1.max()),
                        spread, exact, nb * nd)


@dataclass(frozen=True)
class Lemma3Result:
    lhs: float
    rhs: float
    empirical_c4: float | None
    eps: float
    r: float
    anomaly: bool

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "empiricalC4": self.empirical_c4, "eps": self.eps,
                "r": self.r, "anomaly": self.anomaly}


def lemma3_check(mu: DiscreteMeasure, selection: SpreadSelection, eps: float, profile: SmoothingProfile,
                 s: float | None = None) -> Lemma3Result:
    """d(y_{n+1}, L_n) |U(y_0)| against the transform differences plus theta(3 eps) r^2/eps^2."""
    s = profile.s if s is None else s
    r = selection.r
    if eps < 20 * r:
        raise PreconditionError(f"needs r <= eps/20, got r={r:.3g}, eps={eps:.3g}")
    pts = selection.points
    y0 = pts[0]
    frame = orthonormalize(pts)
    U = u_functional(mu, y0, frame, eps, profile)
    lhs = float(selection.hull_distances[-1]) * abs(U)
    vals, _ = smoothed_riesz_many(mu, pts, eps, profile, threads=1)
    diffs = [float(np.linalg.norm(vals[j] - vals[0])) for j in range(1, pts.shape[0])]
    rhs = float(pairwise_sum(np.array(diffs))) + _theta(mu, y0, 3 * eps, s) * r * r / eps**2
    if rhs == 0:
        return Lemma3Result(lhs, rhs, None if lhs == 0 else math.inf, float(eps), float(r), lhs != 0)
    return Lemma3Result(lhs, rhs, lhs / rhs, float(eps), float(r), False)


@dataclass(frozen=True)
class Lemma4Result:
    U: float
    lower_bound: float
    passed: bool
    theta_eps: float
    eps: float
    annuli: Annuli
    tol: float

    def to_dict(self) -> dict:
        return {"U": self.U, "lowerBound": self.lower_bound, "pass": self.passed,
                "theta_eps": self.theta_eps, "eps": self.eps, "tol": self.tol,
                "annuli": self.annuli.to_dict()}


def lemma4_check(mu: DiscreteMeasure, y0, frame: AffineFrame, scale: ScaleSelection | float,
                 profile: SmoothingProfile, s: float | None = None, n: int | None = None,
                 tol: float = LEMMA4_TOL) -> Lemma4Result:
    """|U^eps(y0)| >= 0.7 (n+1-s) theta(eps)/eps, up to a relative tolerance.

    At integer s the bound is exactly zero and the check passes trivially.
    """
    s = profile.s if s is None else s
    n = frame.k - 1 if n is None else n
    eps = scale.chosen_eps if isinstance(scale, ScaleSelection) else float(scale)
    y0 = np.asarray(y0, dtype=float).reshape(mu.m)
    theta = _theta(mu, y0, eps, s)
    annuli = u_annuli_decomposition(mu, y0, frame, eps, profile)
    U = u_functional(mu, y0, frame, eps, profile)
    bound = 0.7 * (n + 1 - s) * theta / eps
    return Lemma4Result(U, bound, abs(U) >= bound * (1 - tol), theta, eps, annuli, tol)


@dataclass(frozen=True)
class Lemma5Result:
    max_pair_osc: float
    delta: float
    ratio: float
    points: int
    eps: float
    preconditions: dict[str, bool]

    def to_dict(self) -> dict:
        return {"maxPairOsc": self.max_pair_osc, "c6Delta": self.delta, "ratio": self.ratio,
                "points": self.points, "eps": self.eps, "preconditions": dict(self.preconditions)}


def lemma5_check(mu: DiscreteMeasure, subset, x0, r: float, eps: float, delta: float, eps0: float,
                 profile: SmoothingProfile, max_points: int = 64) -> Lemma5Result:
    """Largest |R(x) - R(z)| over retained atoms x, z in B(x0, r), relative to delta.

    At most ``max_points`` atoms are used, evenly spaced in index order.
    """
    x0 = np.asarray(x0, dtype=float).reshape(mu.m)
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    inside = np.intersect1d(mu.ball_indices(x0, r), subset)
    if inside.size < 2:
        raise ValueError(f"need at least 2 retained atoms in the ball, found {inside.size}")
    if inside.size > max_points:
        inside = inside[np.linspace(0, inside.size - 1, max_points).round().astype(int)]
    vals, _ = smoothed_riesz_many(mu, mu.positions[inside], eps, profile, threads=1)
    osc = max_pair_diff(vals)
    pre = {"eps_below_eps0": bool(eps < eps0), "r_over_delta_below_eps0": bool(r / delta < eps0)}
    return Lemma5Result(osc, float(delta), osc / delta, int(inside.size), float(eps), pre)


# ------------------------------------------------------------ PV verdicts


@dataclass(frozen=True)
class PVClass:
    verdict: str
    reason: str
    local_osc: np.ndarray
    osc_tail: np.ndarray
    tol_conv: float
    tol_osc: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reason": self.reason, "oscillationCurve": self.osc_tail.tolist(),
                "local_oscillation": self.local_osc.tolist(), "tolConv": self.tol_conv,
                "tolOsc": self.tol_osc}


def local_oscillation(values: np.ndarray, window: int = 3) -> np.ndarray:
    """Max pairwise distance inside each run of ``window`` consecutive scan entries."""
    v = np.asarray(values, dtype=float).reshape(len(values), -1)
    return np.array([max_pair_diff(v[i:i + window]) for i in range(max(v.shape[0] - window + 1, 0))])


def default_tolerances(theta_hat: float) -> tuple[float, float]:
    """(tolConv, tolOsc) calibrated on the depth-14 Cantor and 2^16-atom segment scans."""
    return TOL_CONV, TOL_OSC_REL * theta_hat


def pv_classify(scan: PVScan | np.ndarray, tol_conv: float = TOL_CONV, tol_osc: float = TOL_OSC_REL) -> PVClass:
    """converging / oscillating / inconclusive verdict on a descending scan.

    converging: the oscillation over the finer half of the scan is below
    ``tol_conv`` and the newest increment is at most half of the spread of
    the last three entries (or that spread is at rounding level).
    oscillating: the three finest disjoint windows of three consecutive
    entries (neighbours share an endpoint) all oscillate by at least
    ``tol_osc`` and do not decay strictly.  Overlapping windows would make
    the decay test depend on where a periodic pattern is cut off.
    """
    values = scan.values if isinstance(scan, PVScan) else np.asarray(scan, dtype=float)
    values = values.reshape(len(values), -1)
    g = values.shape[0]
    tail = tail_oscillation(values)
    local = local_oscillation(values)
    if g < 4:
        return PVClass("inconclusive", f"only {g} scan entries", local, tail, tol_conv, tol_osc)
    noise = 1e-12 * max(1.0, float(np.abs(values).max()))
    if tail[g // 2] < tol_conv and (tail[-2] <= 0.5 * tail[-3] or tail[-3] <= noise):
        return PVClass("converging", f"tail oscillation {tail[g // 2]:.3g} < {tol_conv:.3g}", local, tail,
                       tol_conv, tol_osc)
    last = local[::-2][:3][::-1]
    if last.size == 3 and np.all(last >= tol_osc) and not (last[0] > last[1] > last[2]):
        return PVClass("oscillating", f"last windows {np.round(last, 4).tolist()} >= {tol_osc:.3g}", local,
                       tail, tol_conv, tol_osc)
    return PVClass("inconclusive", "neither rule applies", local, tail, tol_conv, tol_osc)


# ------------------------------------------------------------ contradiction ratio


@dataclass(frozen=True)
class BaseBall:
    x0_index: int
    x0: np.ndarray
    radii: tuple[float, ...]
    retained_mass: tuple[float, ...]
    theta_star: float
    tried: int

    def to_dict(self) -> dict:
        return {"x0_index": self.x0_index, "x0": self.x0.tolist(), "radii": list(self.radii),
                "retained_mass_normalized": list(self.retained_mass), "theta_star": self.theta_star,
                "candidates_tried": self.tried}


def find_base_ball(mu: DiscreteMeasure, fdelta: FDeltaResult, s: float, radii: Sequence[float],
                   profile: SmoothingProfile, candidates: Sequence[int] | None = None,
                   threads: int | None = None) -> tuple[BaseBall, FDeltaResult]:
    """First retained x0 (index order) with mu(B(x0, r) & F)/theta*(x0) >= r^s/2 at every radius.

    Atoms of each trial ball that have not been classified yet are run
    through the filter on demand; the enlarged filter result is returned.
    """
    radii = tuple(sorted((float(r) for r in radii), reverse=True))
    if not radii:
        raise ValueError("no radii given")
    pool = fdelta.retained() if candidates is None else np.intersect1d(candidates, fdelta.retained())
    tried = 0
    for i in pool:
        tried += 1
        x0 = mu.positions[i]
        ts = fdelta.stats(int(i))["theta_star"]
        masses = []
        for r in radii:
            inside = mu.ball_indices(x0, r)
            missing = np.setdiff1d(inside, fdelta.candidates)
            if missing.size:
                fdelta = fdelta.merged(f_delta_filter(mu, fdelta.params, profile, s, subset=missing,
                                                      allow_empty=True, threads=threads))
            kept = np.intersect1d(inside, fdelta.retained())
            mass = float(pairwise_sum(mu.weights[kept])) / ts
            if mass < r**s / 2:
                break
            masses.append(mass)
        else:
            return BaseBall(int(i), x0.copy(), radii, tuple(masses), ts, tried), fdelta
    raise PipelineError("base_ball", f"no retained x0 with mu(B(x0, r) & F) >= r^s/2 at r in "
                        f"{[f'{r:.3g}' for r in radii]} ({tried} centers tried)")


@dataclass(frozen=True)
class Section3:
    tau: float
    delta_theory: float
    lhs: float
    rhs: float
    ratio: float
    rhs_measured: float | None
    ratio_measured: float | None
    chain_middle: float
    eps: float
    r: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DiagnosticsReport:
    s: float
    rho: float
    measure: dict[str, Any]
    fdelta: dict[str, Any] | None = None
    base_ball: dict[str, Any] | None = None
    selection: dict[str, Any] | None = None
    scale: dict[str, Any] | None = None
    lemma1: dict[str, Any] | None = None
    lemma3: dict[str, Any] | None = None
    lemma4: dict[str, Any] | None = None
    lemma5: dict[str, Any] | None = None
    section3: dict[str, Any] | None = None
    pvClass: dict[str, Any] | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **_clean(asdict(self))}

    def flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {}

        def walk(prefix: str, obj: Any) -> None:
            if isinstance(obj, dict):
                for k in sorted(obj):
                    walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
            elif isinstance(obj, list) and obj and isinstance(obj[0], (list, dict)):
                return
            elif isinstance(obj, list):
                out[prefix] = ";".join(repr(v) for v in obj)
            else:
                out[prefix] = obj

        walk("", self.to_dict())
        return out


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def theory_delta(tau: float, s: float, omega0: float) -> float:
    return tau ** (s + 2) / omega0


def contradiction_ratio(mu: DiscreteMeasure, ball: BaseBall, fdelta: FDeltaResult, tau: float,
                        r: float, profile: SmoothingProfile, s: float | None = None,
                        max_k: int = DEFAULT_MAX_K, report: DiagnosticsReport | None = None,
                        lemma1_bases: int = 16) -> DiagnosticsReport:
    """Run the contradiction chain for one tau and radius r around a prepared x0.

    The measure is normalized so theta_hat*(x0) = 1.  Points are chosen
    in B(x0, r) & F, eps1 = r/tau, the doubling scale is selected, and U,
    the lemma checks and the final inequality are evaluated.  ``rhs`` uses
    delta = tau^(s+2)/omega0; ``rhs_measured`` swaps in the measured Lemma 5
    oscillation.  Lemma 3 needs r <= eps/20, so it is evaluated at
    max(eps, 20 r).
    """
    s = profile.s if s is None else s
    n = int(math.ceil(s)) - 1
    rep = report or DiagnosticsReport(s, profile.rho, mu.generator or {})
    rep.fdelta = fdelta.summary()
    rep.base_ball = {**ball.to_dict(), "r": float(r)}
    mu_n = mu.scaled(1.0 / ball.theta_star)
    retained = fdelta.retained()
    inside = np.intersect1d(mu_n.ball_indices(ball.x0, r), retained)
    try:
        sel = select_spread_points(mu_n.positions[inside], ball.x0, r, n + 2, indices=inside)
    except ValueError as exc:
        raise PipelineError("select_spread_points", str(exc)) from exc
    rep.selection = sel.to_dict()
    y0 = sel.points[0]
    frame = orthonormalize(sel.points)
    eps1 = r / tau
    try:
        scale = select_scale(mu_n, y0, eps1, profile.rho, s, max_k)
    except (GrowthAnomalyError, DensityGridError) as exc:
        raise PipelineError("select_scale", str(exc)) from exc
    rep.scale = scale.to_dict()
    eps = scale.chosen_eps

    l4 = lemma4_check(mu_n, y0, frame, scale, profile, s, n)
    rep.lemma4 = l4.to_dict()

    rep.lemma3 = lemma3_check(mu_n, sel, max(eps, 20 * r), profile, s).to_dict()

    measured = None
    try:
        l5 = lemma5_check(mu_n, retained, ball.x0, r, eps, fdelta.params.delta, fdelta.params.eps0,
                          profile)
        rep.lemma5 = l5.to_dict()
        measured = l5.max_pair_osc
    except ValueError as exc:
        rep.lemma5 = {"skipped": str(exc)}

    bases = mu_n.positions[inside[np.linspace(0, inside.size - 1, min(lemma1_bases, inside.size))
                                  .round().astype(int)]]
    normals = normal_directions(frame)
    dirs = normals if normals.shape[0] else frame.basis
    rep.lemma1 = lemma1_check(mu_n, bases, eps, profile, dirs).to_dict()

    delta = theory_delta(tau, s, scale.omega0)
    lhs = _theta(mu_n, y0, eps, s) * r
    tail = _theta(mu_n, y0, 3 * eps, s) * r * r / eps
    rhs = eps * delta + tail
    rhs_m = None if measured is None else eps * measured + tail
    sec = Section3(
        tau=float(tau), delta_theory=delta, lhs=lhs, rhs=rhs, ratio=lhs / rhs if rhs > 0 else math.inf,
        rhs_measured=rhs_m, ratio_measured=None if rhs_m is None else lhs / rhs_m,
        chain_middle=eps * abs(l4.U) * float(sel.hull_distances[-1]), eps=eps, r=r,
    )
    rep.section3 = sec.to_dict()
    rep.section3["retention_at_theory_delta"] = fdelta.retention(delta)
    return rep


@dataclass(frozen=True)
class PipelineSettings:
    fdelta: FDeltaParams
    taus: tuple[float, ...] = (0.125,)
    eps1: float = 2.0**-10
    max_k: int = DEFAULT_MAX_K
    sample: int = 64
    seed: int = 0
    lemma1_bases: int = 16
    pv_eps: tuple[float, ...] = ()
    tol_conv: float = TOL_CONV
    tol_osc_rel: float = TOL_OSC_REL


def sample_atoms(mu: DiscreteMeasure, count: int, seed: int) -> np.ndarray:
    """Sorted seeded sample of atom indices without replacement."""
    count = min(count, mu.n_atoms)
    return np.sort(np.random.default_rng(seed).choice(mu.n_atoms, count, replace=False))


def run_pipeline(mu: DiscreteMeasure, profile: SmoothingProfile, settings: PipelineSettings,
                 threads: int | None = None, timings: dict[str, float] | None = None) -> list[DiagnosticsReport]:
    """Filter, base-ball search and the contradiction chain for every tau.

    One x0 serves all tau values: it must satisfy the retained-mass
    condition at each r = tau * eps1, so eps1 (and hence the selected
    scale) is shared and only r varies across the sweep.
    """
    import time

    s = profile.s
    clock = time.perf_counter()

    def lap(name: str) -> None:
        nonlocal clock
        if timings is not None:
            now = time.perf_counter()
            timings[name] = timings.get(name, 0.0) + now - clock
            clock = now

    try:
        fd = f_delta_filter(mu, settings.fdelta, profile, s, subset=sample_atoms(mu, settings.sample, settings.seed),
                            threads=threads)
    except (EmptyFDeltaError, DensityGridError) as exc:
        raise PipelineError("f_delta_filter", str(exc)) from exc
    lap("f_delta_filter")
    radii = [t * settings.eps1 for t in settings.taus]
    ball, fd = find_base_ball(mu, fd, s, radii, profile, threads=threads)
    lap("base_ball")
    reports = []
    for tau, r in zip(settings.taus, radii):
        rep = contradiction_ratio(mu, ball, fd, tau, r, profile, s, settings.max_k,
                                  lemma1_bases=settings.lemma1_bases)
        rep.notes.append("sups over radii and scales taken on dyadic grids: "
                         f"{len(settings.fdelta.eps_grid)} F_delta oscillation scales, "
                         f"{settings.fdelta.per_octave} radii per octave for densities, "
                         f"{PER_OCTAVE} per octave for scale selection")
        if settings.pv_eps:
            scan = pv_scan(mu.scaled(1.0 / ball.theta_star), ball.x0, settings.pv_eps, profile, threads=threads)
            cls = pv_classify(scan, settings.tol_conv, settings.tol_osc_rel)
            rep.pvClass = {**cls.to_dict(), "eps": scan.eps.tolist()}
        reports.append(rep)
        lap(f"tau={tau:g}")
    return reports
