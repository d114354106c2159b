"""The C^2 cutoff profile phi and the smoothed Riesz kernel.

phi is assembled from five pieces on [0, inf):

    [0, 1]                    r^((s+1)/2)
    [1, 1+rho^2]              quintic connector A
    [1+rho^2, 1+rho+rho^2]    linear, -r/rho + 1 + rho + 1/rho
    [1+rho+rho^2, 1+rho+2rho^2]  quintic connector B
    [1+rho+2rho^2, inf)       0

Each connector is the unique quintic matching value, slope and curvature
of its neighbours at both ends.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_RHO = 0.05
DEFAULT_SLACK = 0.05
VALIDATION_POINTS = 10_000

# forward six-point stencil, exact for polynomials of degree <= 5
_FD6 = np.array([-137.0, 300.0, -300.0, 200.0, -75.0, 12.0]) / 60.0


class ProfileError(ValueError):
    """The cutoff cannot be built within the derivative budget."""


def _quintic(h: float, left: tuple[float, float, float], right: tuple[float, float, float]) -> np.ndarray:
    """Coefficients c0..c5 in powers of (r - r_left) for a quintic Hermite match."""
    rows, rhs = [], []
    for x, (v, d1, d2) in ((0.0, left), (h, right)):
        rows.append([x**k for k in range(6)])
        rows.append([k * x ** (k - 1) if k >= 1 else 0.0 for k in range(6)])
        rows.append([k * (k - 1) * x ** (k - 2) if k >= 2 else 0.0 for k in range(6)])
        rhs += [v, d1, d2]
    return np.linalg.solve(np.array(rows), np.array(rhs))


def _poly(coef: np.ndarray, x0: float, deriv: int) -> Callable[[np.ndarray], np.ndarray]:
    c = np.polynomial.polynomial.polyder(coef, deriv) if deriv else coef
    return lambda r: np.polynomial.polynomial.polyval(np.asarray(r, dtype=float) - x0, c)


@dataclass(frozen=True)
class SmoothingProfile:
    s: float
    rho: float
    connector_a: np.ndarray
    connector_b: np.ndarray
    bounds: dict[str, float] = field(default_factory=dict)

    @property
    def junctions(self) -> tuple[float, float, float, float]:
        rho = self.rho
        return (1.0, 1.0 + rho**2, 1.0 + rho + rho**2, 1.0 + rho + 2 * rho**2)

    @property
    def support_end(self) -> float:
        return self.junctions[3]

    @property
    def support_radius_factor(self) -> float:
        """Kernel support is B(0, eps * this factor)."""
        return math.sqrt(self.support_end)

    def pieces(self, deriv: int = 0) -> list[tuple[float, float, Callable[[np.ndarray], np.ndarray]]]:
        """(lo, hi, f) for each piece of the ``deriv``-th derivative."""
        a = (self.s + 1) / 2
        rho = self.rho
        j0, j1, j2, j3 = self.junctions
        coef_pow = [1.0, a, a * (a - 1)][deriv]
        expo = a - deriv

        def power(r):
            r = np.asarray(r, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return coef_pow * r**expo

        lin = [lambda r: -np.asarray(r, dtype=float) / rho + 1 + rho + 1 / rho,
               lambda r: np.full(np.shape(r), -1 / rho),
               lambda r: np.zeros(np.shape(r))][deriv]
        return [
            (0.0, j0, power),
            (j0, j1, _poly(self.connector_a, j0, deriv)),
            (j1, j2, lin),
            (j2, j3, _poly(self.connector_b, j2, deriv)),
            (j3, math.inf, lambda r: np.zeros(np.shape(r))),
        ]

    def evaluate(self, r, deriv: int = 0) -> np.ndarray:
        # pieces: [0, 1], (1, j1), [j1, j2), [j2, j3), [j3, inf)
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        for k, (lo, hi, f) in enumerate(self.pieces(deriv)):
            if k == 0:
                mask = r <= hi
            elif k == 1:
                mask = (r > lo) & (r < hi)
            else:
                mask = (r >= lo) & (r < hi)
            if np.any(mask):
                out[mask] = f(r[mask])
        return out

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "rho": self.rho,
            "junctions": list(self.junctions),
            "connector_a": {"origin": self.junctions[0], "coefficients": self.connector_a.tolist()},
            "connector_b": {"origin": self.junctions[2], "coefficients": self.connector_b.tolist()},
            "bounds": dict(self.bounds),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_profile(s: float, rho: float = DEFAULT_RHO, slack: float = DEFAULT_SLACK,
                  grid_points: int = VALIDATION_POINTS) -> SmoothingProfile:
    """Build phi for exponent ``s`` and width ``rho`` and validate its bounds.

    ``|phi'| <= (1 + slack) / rho`` is checked on a uniform grid over the
    support.  For s < 1 the power piece has an integrable singularity in
    phi' at 0, so the check then covers [1, support end] only.
    """
    if not (0 < rho < 0.5):
        raise ProfileError(f"rho must lie in (0, 1/2), got {rho}")
    if not s > 0:
        raise ProfileError(f"s must be positive, got {s}")
    a = (s + 1) / 2
    j0, j1, j2, j3 = 1.0, 1.0 + rho**2, 1.0 + rho + rho**2, 1.0 + rho + 2 * rho**2
    conn_a = _quintic(j1 - j0, (1.0, a, a * (a - 1)), (1.0, -1 / rho, 0.0))
    conn_b = _quintic(j3 - j2, (0.0, -1 / rho, 0.0), (0.0, 0.0, 0.0))
    prof = SmoothingProfile(s, rho, conn_a, conn_b)

    lo = 0.0 if s >= 1 else 1.0
    grid = np.linspace(lo, j3, grid_points)
    grid = np.union1d(grid, [j0, j1, j2, j3])
    d1 = np.abs(prof.evaluate(grid, 1))
    budget = (1 + slack) / rho
    if np.max(d1) > budget:
        worst = float(grid[np.argmax(d1)])
        names = ["power piece", "connector A", "linear piece", "connector B", "zero piece"]
        piece = names[int(np.searchsorted(prof.junctions, worst, side="left"))]
        raise ProfileError(
            f"|phi'| = {np.max(d1):.4g} exceeds (1+{slack})/rho = {budget:.4g} near r={worst:.6g} "
            f"({piece}); rho={rho} is too large for s={s}"
        )
    bounds = {
        "sup_phi": float(np.max(np.abs(prof.evaluate(grid, 0)))),
        "sup_phi_prime": float(np.max(d1)),
        "sup_phi_second": float(np.max(np.abs(prof.evaluate(grid, 2)))),
        "grid_lo": lo,
        "grid_points": int(grid.size),
    }
    return SmoothingProfile(s, rho, conn_a, conn_b, bounds)


def eval_phi(profile: SmoothingProfile, r):
    return profile.evaluate(r, 0)


def eval_phi_prime(profile: SmoothingProfile, r):
    return profile.evaluate(r, 1)


def eval_phi_second(profile: SmoothingProfile, r):
    return profile.evaluate(r, 2)


def junction_table(profile: SmoothingProfile) -> list[dict[str, float]]:
    """One-sided finite-difference continuity check at the four junctions.

    For each junction the values of phi are compared from the two adjacent
    pieces, and phi' and phi'' are estimated from each side with a six-point
    one-sided stencil that never crosses the junction.
    """
    rows = []
    p0, p1 = profile.pieces(0), profile.pieces(1)
    for k, j in enumerate(profile.junctions):
        left0, right0 = p0[k][2], p0[k + 1][2]
        left1, right1 = p1[k][2], p1[k + 1][2]
        width = min(p0[k + 1][1] - j, j - p0[k][0])
        h = width / 10
        fwd = j + h * np.arange(6)
        bwd = j - h * np.arange(6)
        d1_right = float(_FD6 @ right0(fwd)) / h
        d1_left = -float(_FD6 @ left0(bwd)) / h
        d2_right = float(_FD6 @ right1(fwd)) / h
        d2_left = -float(_FD6 @ left1(bwd)) / h
        rows.append({
            "junction": j,
            "phi_left": float(left0(np.array(j))),
            "phi_right": float(right0(np.array(j))),
            "jump_phi": abs(float(left0(np.array(j))) - float(right0(np.array(j)))),
            "dphi_left": d1_left,
            "dphi_right": d1_right,
            "jump_dphi": abs(d1_left - d1_right),
            "d2phi_left": d2_left,
            "d2phi_right": d2_right,
            "jump_d2phi": abs(d2_left - d2_right),
            "step": h,
        })
    return rows


# ---------------------------------------------------------------- kernel


def kernel_factor(profile: SmoothingProfile, r2: np.ndarray, eps: float) -> np.ndarray:
    """Scalar f with k(d) = f * d, given squared lengths ``r2``.

    Inside B(0, eps) phi(t) = t^((s+1)/2) collapses the kernel to the
    linear map d / eps^(s+1), which also gives k(0) = 0.
    """
    r2 = np.asarray(r2, dtype=float)
    t = r2 / (eps * eps)
    out = np.full(r2.shape, eps ** -(profile.s + 1))
    outer = t > 1.0
    if np.any(outer):
        phi = profile.evaluate(t[outer], 0)
        out[outer] = phi / r2[outer] ** ((profile.s + 1) / 2)
    return out


def kernel(profile: SmoothingProfile, d, eps: float) -> np.ndarray:
    """k(d) = phi(|d|^2/eps^2) d / |d|^(s+1) for one vector or a stack of them."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = np.asarray(d, dtype=float)
    flat = d.reshape(-1, d.shape[-1])
    r2 = np.einsum("ij,ij->i", flat, flat)
    return (kernel_factor(profile, r2, eps)[:, None] * flat).reshape(d.shape)


def kernel_radial_sup(profile: SmoothingProfile, eps: float, samples: int = 20_000) -> tuple[float, float]:
    """Grid estimates of sup |k| and sup |grad k| over the support.

    k(d) = g(|d|) d/|d| with g(u) = phi(u^2/eps^2) u^(-s); the Jacobian has
    eigenvalues g'(u) (radial) and g(u)/u (tangential).
    """
    s = profile.s
    u = np.linspace(0.0, eps * profile.support_radius_factor, samples)[1:]
    t = (u / eps) ** 2
    phi = profile.evaluate(t, 0)
    dphi = profile.evaluate(t, 1)
    g = phi * u**-s
    dg = dphi * 2 * u / eps**2 * u**-s - s * phi * u ** (-s - 1)
    # inside the unit ball g = u / eps^(s+1) exactly
    inner = t <= 1
    g[inner] = u[inner] / eps ** (s + 1)
    dg[inner] = eps ** -(s + 1)
    return float(np.max(np.abs(g))), float(max(np.max(np.abs(dg)), np.max(np.abs(g / u))))
