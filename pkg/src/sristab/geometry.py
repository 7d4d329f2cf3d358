"""Compact convex feasible sets with exact Euclidean projection, normal- and
tangent-cone projections, and the norm-truncated normal cone.

Supported set families (box, ball, simplex) all admit closed-form or
sort-based projections, so the cone projections below are exact up to
floating point, which is what makes the orthogonal-decomposition identities
testable at 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError

__all__ = ["ConvexSet", "TruncatedNormalCone", "project", "normal_cone_project",
           "tangent_cone_project", "truncated_normal_membership"]

# boundary/active-constraint detection tolerance
ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class ConvexSet:
    """One of: box(lo, hi), ball(center, radius), simplex(scale)."""

    variant: str
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    scale: float | None = None
    dim: int = 0

    @staticmethod
    def box(lo, hi) -> "ConvexSet":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise DomainError("box requires lo < hi coordinate-wise")
        return ConvexSet("box", lo=lo, hi=hi, dim=lo.size)

    @staticmethod
    def ball(center, radius: float) -> "ConvexSet":
        center = np.asarray(center, dtype=float)
        if not (radius > 0):
            raise DomainError("ball radius must be positive")
        return ConvexSet("ball", center=center, radius=float(radius), dim=center.size)

    @staticmethod
    def simplex(dim: int, scale: float = 1.0) -> "ConvexSet":
        if not (scale > 0):
            raise DomainError("simplex scale must be positive")
        if dim < 1:
            raise DomainError("simplex dimension must be >= 1")
        return ConvexSet("simplex", scale=float(scale), dim=dim)

    def contains(self, x, tol: float = ACTIVE_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        if self.variant == "box":
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        if self.variant == "ball":
            return bool(np.linalg.norm(x - self.center) <= self.radius + tol)
        return bool(np.all(x >= -tol) and abs(float(np.sum(x)) - self.scale) <= tol)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n points uniformly from the set (Dirichlet for the simplex)."""
        if self.variant == "box":
            return rng.uniform(self.lo, self.hi, size=(n, self.dim))
        if self.variant == "ball":
            g = rng.standard_normal((n, self.dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.radius * rng.uniform(0.0, 1.0, n) ** (1.0 / self.dim)
            return self.center + g * r[:, None]
        return self.scale * rng.dirichlet(np.ones(self.dim), size=n)


def _check_dim(S: ConvexSet, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (S.dim,):
        raise DomainError(f"expected a vector of length {S.dim}, got shape {v.shape}")
    return v


def _project_simplex(v: np.ndarray, z: float) -> np.ndarray:
    # sort-based exact projection onto {x >= 0, sum x = z}
    a = np.sort(v)[::-1]
    cssv = (np.cumsum(a) - z) / np.arange(1, v.size + 1)
    k = np.nonzero(a > cssv)[0][-1]
    return np.maximum(v - cssv[k], 0.0)


def project(S: ConvexSet, v) -> np.ndarray:
    """argmin_{y in S} ||y - v||; idempotent and nonexpansive."""
    v = _check_dim(S, v)
    if S.variant == "box":
        return np.clip(v, S.lo, S.hi)
    if S.variant == "ball":
        w = v - S.center
        r = np.linalg.norm(w)
        if r <= S.radius:
            return v.copy()
        return S.center + w * (S.radius / r)
    return _project_simplex(v, S.scale)


def _simplex_normal_project(active_zero: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exact projection onto {nu : nu_i = mu on the support, nu_i <= mu on the
    active zero set, mu free}; solved by scanning the breakpoints of the
    piecewise-linear optimality condition in mu."""
    pos = ~active_zero
    n_pos = int(pos.sum())
    s_pos = float(v[pos].sum())
    vz = np.sort(v[active_zero])[::-1]

    def solve(k: int) -> float:
        # k = number of zero-coordinates whose nu exceeds mu before clamping
        return (s_pos + vz[:k].sum()) / (n_pos + k)

    mu = solve(0)
    for k in range(vz.size + 1):
        mu = solve(k)
        upper_ok = k == 0 or vz[k - 1] >= mu
        lower_ok = k == vz.size or vz[k] <= mu
        if upper_ok and lower_ok:
            break
    out = np.where(active_zero, np.minimum(v, mu), mu)
    return out


def normal_cone_project(S: ConvexSet, x, v) -> np.ndarray:
    """Projection of v onto the normal cone of S at x (zero at interior x)."""
    x = _check_dim(S, x)
    v = _check_dim(S, v)
    if not S.contains(x):
        raise DomainError("base point is not in the set")
    if S.variant == "box":
        out = np.zeros_like(v)
        at_hi = x >= S.hi - ACTIVE_TOL
        at_lo = x <= S.lo + ACTIVE_TOL
        out[at_hi] = np.maximum(v[at_hi], 0.0)
        out[at_lo] = np.minimum(v[at_lo], 0.0)
        return out
    if S.variant == "ball":
        w = x - S.center
        if np.linalg.norm(w) < S.radius - ACTIVE_TOL:
            return np.zeros_like(v)
        n = w / np.linalg.norm(w)
        return max(float(v @ n), 0.0) * n
    active_zero = x <= ACTIVE_TOL
    if not np.any(active_zero):
        # interior of the face: cone is the line spanned by the all-ones vector
        return np.full_like(v, v.mean())
    return _simplex_normal_project(active_zero, v)


def tangent_cone_project(S: ConvexSet, x, v) -> np.ndarray:
    """Moreau complement: v minus its normal-cone projection."""
    v = _check_dim(S, v)
    return v - normal_cone_project(S, x, v)


def truncated_normal_membership(S: ConvexSet, x, nu, G: float,
                                tol: float = ACTIVE_TOL) -> bool:
    """Whether nu lies in the normal cone at x (within tol) with ||nu|| <= G."""
    nu = _check_dim(S, nu)
    if np.linalg.norm(nu) > G + tol:
        return False
    resid = nu - normal_cone_project(S, x, nu)
    return bool(np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(nu)))


@dataclass(frozen=True)
class TruncatedNormalCone:
    """The normal cone at a base point intersected with the ball of radius
    ``bound``; always contains the zero vector."""

    feasible_set: ConvexSet
    base: np.ndarray
    bound: float

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        object.__setattr__(self, "base", base)
        if not self.feasible_set.contains(base):
            raise DomainError("base point is not in the set")
        if self.bound < 0:
            raise DomainError("norm bound must be nonnegative")

    def contains(self, nu, tol: float = ACTIVE_TOL) -> bool:
        return truncated_normal_membership(self.feasible_set, self.base, nu,
                                           self.bound, tol)

    def element(self, v) -> np.ndarray:
        """Normal-cone projection of v, norm-capped at the bound."""
        nu = normal_cone_project(self.feasible_set, self.base, v)
        norm = float(np.linalg.norm(nu))
        if norm > self.bound > 0:
            nu = nu * (self.bound / norm)
        elif self.bound == 0.0:
            nu = np.zeros_like(nu)
        return nu
