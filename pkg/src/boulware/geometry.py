"""Schwarzschild exterior geometry.

Tortoise coordinate, its exact inverse, and the effective potential of the
reduced radial wave equation  u''(r*) + (omega^2 - V_l(r)) u = 0  obtained
from the standard substitution u = r phi:

    V_l(r) = (1 - 2M/r) * (l(l+1)/r^2 + 2M/r^3 + m^2).

Geometric units G = c = hbar = 1; the field mass m = 1 sets the scale by
default and M is quoted in units of 1/m.

The inverse map is computed with Newton iteration on

    F(s) = e^s + s - theta,     s = ln(r/(2M) - 1),  theta = (r* - 2M)/(2M),

which is strictly increasing and convex, so Newton converges globally from
any start; working in s keeps full relative accuracy in the horizon gap
x = r - 2M arbitrarily close to the horizon and at large radii.

Representability: for r* deep enough that x/2M < eps the gap is no longer
visible in the double r itself (r rounds to 2M).  horizon_gap() returns x
at full relative precision for any r* down to gap underflow (~ -1480 M);
inverse_tortoise() refuses inputs whose r would round onto the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, DomainError

__all__ = [
    "SpacetimeParams",
    "RadialGrid",
    "tortoise",
    "inverse_tortoise",
    "horizon_gap",
    "effective_potential",
    "potential_derivatives",
]


@dataclass(frozen=True)
class SpacetimeParams:
    """Black-hole mass M and scalar field mass m.

    M = 0 denotes the flat-limit configuration; it is valid for cross-check
    paths but horizon-seeded solutions require M > 0.
    """

    M: float
    m: float = 1.0

    def __post_init__(self):
        if not (self.M >= 0.0) or not math.isfinite(self.M):
            raise DomainError(f"M must be >= 0 and finite, got {self.M}")
        if not (self.m > 0.0) or not math.isfinite(self.m):
            raise DomainError(f"m must be > 0 and finite, got {self.m}")

    @property
    def horizon(self) -> float:
        return 2.0 * self.M


@njit(cache=True, nogil=True)
def _theta_root(theta):
    # Solve e^s + s = theta by Newton; F is convex increasing so any start
    # converges, the branches below just make it fast at the extremes.
    if theta > 40.0:
        s = math.log(theta - math.log(theta))
    elif theta < -33.0:
        # e^s negligible at double precision after one correction
        return theta - math.exp(theta)
    elif theta > 1.0:
        s = math.log(theta)
    else:
        s = theta - math.exp(min(theta, 0.5))
    for _ in range(60):
        es = math.exp(s)
        delta = (es + s - theta) / (es + 1.0)
        s -= delta
        if abs(delta) <= 1e-15 * (1.0 + abs(s)):
            break
    if abs(math.exp(s) + s - theta) <= 1e-12 * max(1.0, abs(theta)):
        return s
    return math.nan


@njit(cache=True, nogil=True)
def _gap_from_rstar(rstar, M):
    """Horizon gap x = r - 2M at full relative precision."""
    theta = (rstar - 2.0 * M) / (2.0 * M)
    return 2.0 * M * math.exp(_theta_root(theta))


@njit(cache=True, nogil=True)
def _geom_from_rstar(rstar, M):
    """(r, f) with f = 1 - 2M/r = e^s/(1+e^s), exact in the gap variable."""
    theta = (rstar - 2.0 * M) / (2.0 * M)
    es = math.exp(_theta_root(theta))
    f = es / (1.0 + es)
    r = 2.0 * M * (1.0 + es)
    return r, f


@njit(cache=True, nogil=True)
def _r_to_rstar(r, M):
    return r + 2.0 * M * math.log(r / (2.0 * M) - 1.0)


def tortoise(r, params: SpacetimeParams):
    """r* = r + 2M ln(r/(2M) - 1); accepts scalars or arrays."""
    M = params.M
    r_arr = np.asarray(r, dtype=float)
    if M == 0.0:
        return r_arr.item() if r_arr.ndim == 0 else r_arr.copy()
    if np.any(r_arr <= 2.0 * M):
        raise DomainError("tortoise requires r > 2M")
    out = r_arr + 2.0 * M * np.log(r_arr / (2.0 * M) - 1.0)
    return out.item() if out.ndim == 0 else out


def horizon_gap(rstar, params: SpacetimeParams):
    """Gap x = r - 2M solving tortoise(2M + x) = rstar, full relative precision.

    Valid for any rstar above gap underflow (x/2M > ~1e-322); this is the
    quantity to use near the horizon where r itself saturates at 2M.
    """
    M = params.M
    if M == 0.0:
        raise DomainError("horizon_gap needs M > 0")
    rs_arr = np.asarray(rstar, dtype=float)
    flat = np.atleast_1d(rs_arr).astype(float)
    out = np.empty_like(flat)
    for i, rs in enumerate(flat):
        x = _gap_from_rstar(rs, M)
        if not math.isfinite(x):
            raise ConvergenceError(f"horizon_gap root find failed at rstar={rs}")
        if not x > 0.0:
            raise DomainError(f"gap underflows double precision at rstar={rs}")
        out[i] = x
    out = out.reshape(rs_arr.shape)
    return out.item() if rs_arr.ndim == 0 else out


def inverse_tortoise(rstar, params: SpacetimeParams):
    """Radius r > 2M with tortoise(r) = rstar.

    Meets the 1e-12 mixed tolerance wherever the gap is representable in
    the returned double (x/2M >~ 1e-11 * |rstar|); raises DomainError once
    r would round onto the horizon.  Use horizon_gap for deeper points.
    """
    M = params.M
    rs_arr = np.asarray(rstar, dtype=float)
    if M == 0.0:
        return rs_arr.item() if rs_arr.ndim == 0 else rs_arr.copy()
    flat = np.atleast_1d(rs_arr).astype(float)
    out = np.empty_like(flat)
    for i, rs in enumerate(flat):
        x = _gap_from_rstar(rs, M)
        if not math.isfinite(x):
            raise ConvergenceError(f"inverse_tortoise failed at rstar={rs}")
        r = 2.0 * M + x
        if not r > 2.0 * M:
            raise DomainError(
                f"rstar={rs} puts r within rounding of the horizon; "
                "use horizon_gap for the gap itself")
        out[i] = r
    out = out.reshape(rs_arr.shape)
    return out.item() if rs_arr.ndim == 0 else out


def effective_potential(r, l, params: SpacetimeParams):
    """V_l(r) = (1 - 2M/r)(l(l+1)/r^2 + 2M/r^3 + m^2)."""
    if l < 0 or int(l) != l:
        raise DomainError(f"l must be a nonnegative integer, got {l}")
    M, m = params.M, params.m
    r_arr = np.asarray(r, dtype=float)
    if M > 0.0 and np.any(r_arr <= 2.0 * M):
        raise DomainError("effective_potential requires r > 2M")
    if np.any(r_arr <= 0.0):
        raise DomainError("effective_potential requires r > 0")
    ll = l * (l + 1.0)
    f = 1.0 - 2.0 * M / r_arr
    out = f * (ll / r_arr**2 + 2.0 * M / r_arr**3 + m * m)
    return out.item() if out.ndim == 0 else out


def potential_derivatives(r, l, params: SpacetimeParams):
    """(V, dV/dr, d2V/dr2) analytically; used by the WKB seeds."""
    M, m = params.M, params.m
    r_arr = np.asarray(r, dtype=float)
    ll = l * (l + 1.0)
    f = 1.0 - 2.0 * M / r_arr
    fp = 2.0 * M / r_arr**2
    fpp = -4.0 * M / r_arr**3
    U = ll / r_arr**2 + 2.0 * M / r_arr**3 + m * m
    Up = -2.0 * ll / r_arr**3 - 6.0 * M / r_arr**4
    Upp = 6.0 * ll / r_arr**4 + 24.0 * M / r_arr**5
    V = f * U
    Vp = fp * U + f * Up
    Vpp = fpp * U + 2.0 * fp * Up + f * Upp
    return V, Vp, Vpp


@dataclass(frozen=True)
class RadialGrid:
    """Paired, strictly increasing tortoise and Schwarzschild samples.

    The horizon gap x = r - 2M is kept separately at full relative
    precision; `radii` saturates to 2M for very deep points (x below the
    rounding of 2M), so monotonicity and the pairing are enforced on
    (points, gap) rather than on the saturating radii.
    """

    points: np.ndarray   # r* values
    gap: np.ndarray      # x = r - 2M > 0 (equals r when M = 0)
    params: SpacetimeParams

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        gap = np.asarray(self.gap, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "gap", gap)
        if pts.ndim != 1 or gap.shape != pts.shape or pts.size < 1:
            raise DomainError("RadialGrid needs matching 1-d arrays")
        if np.any(np.diff(pts) <= 0.0) or np.any(np.diff(gap) <= 0.0):
            raise DomainError("RadialGrid must be strictly increasing")
        if np.any(gap <= 0.0):
            raise DomainError("RadialGrid gap must be positive")
        M = self.params.M
        if M > 0.0:
            # pairing check in the exact gap variable
            expect = np.array([_gap_from_rstar(rs, M) for rs in pts])
            ok = np.abs(gap - expect) <= 4e-16 * 2 * M + 1e-9 * expect
            if not np.all(ok):
                raise DomainError("RadialGrid pairing violates tortoise(r) = r*")
        else:
            if np.any(np.abs(gap - pts) > 1e-12 * np.maximum(1.0, np.abs(pts))):
                raise DomainError("flat RadialGrid needs r = r*")

    @property
    def radii(self) -> np.ndarray:
        """Schwarzschild r; saturates to 2M for unrepresentably deep points."""
        return 2.0 * self.params.M + self.gap

    @classmethod
    def from_radii(cls, radii, params: SpacetimeParams) -> "RadialGrid":
        rad = np.sort(np.asarray(radii, dtype=float))
        if params.M > 0.0 and np.any(rad <= 2.0 * params.M):
            raise DomainError("radii must exceed 2M")
        return cls(points=np.atleast_1d(tortoise(rad, params)),
                   gap=rad - 2.0 * params.M, params=params)

    @classmethod
    def from_rstar(cls, rstar, params: SpacetimeParams) -> "RadialGrid":
        pts = np.sort(np.asarray(rstar, dtype=float))
        if params.M == 0.0:
            return cls(points=pts, gap=pts.copy(), params=params)
        gap = np.array([_gap_from_rstar(rs, params.M) for rs in pts])
        return cls(points=pts, gap=gap, params=params)

    def __len__(self):
        return self.points.size
