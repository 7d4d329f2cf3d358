"""Sampling-based verification of the stability assumptions: dissipation
inequalities, quadratic sandwiches, Lipschitz/growth/monotonicity constants,
noise moments, and the constrained strong-monotonicity argument.

Verdicts are evidence, not proofs: a pass means "numerically consistent on
the sampled points".  Every fail carries a witness at which re-evaluating the
inequality reproduces the violation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .core import DomainError
from .geometry import ConvexSet, normal_cone_project, project
from .problems import Problem

__all__ = ["LyapunovSpec", "AssumptionReport", "sample_region",
           "check_iss_dissipation", "check_quadratic_sandwich",
           "estimate_lipschitz", "check_pl", "check_quadratic_growth",
           "check_strong_monotonicity", "check_marchaud_growth",
           "check_noise_moment", "check_iss_constrained",
           "fit_pl_constant", "fit_quadratic_growth", "fit_sandwich_constants",
           "constrained_minimizer"]

MARGIN_ATOL = 1e-10


@dataclass(frozen=True)
class LyapunovSpec:
    """Candidate certificate: V with its gradient, the decay and gain
    comparison functions, and quadratic sandwich constants."""

    V: Callable[[np.ndarray], np.ndarray]
    gradV: Callable[[np.ndarray], np.ndarray]
    a_fn: Callable[[np.ndarray], np.ndarray]
    b_fn: Callable[[np.ndarray], np.ndarray]
    a_low: float = 0.0
    a_high: float = np.inf

    def sanity(self, dim: int, radius: float = 1.0, n: int = 64) -> bool:
        """V(0)=0, V >= 0, and both comparison functions vanish at 0 and
        increase on a grid."""
        r = np.linspace(0.0, radius, n)
        origin = np.zeros((1, dim))
        if abs(float(self.V(origin)[0])) > 1e-12:
            return False
        a, b = self.a_fn(r), self.b_fn(r)
        return bool(abs(a[0]) < 1e-12 and abs(b[0]) < 1e-12
                    and np.all(np.diff(a) > 0) and np.all(np.diff(b) > 0))


@dataclass
class AssumptionReport:
    assumption_id: str
    verdict: str
    samples_checked: int
    worst_margin: float
    witness: np.ndarray | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "assumption_id": self.assumption_id,
            "verdict": self.verdict,
            "samples_checked": self.samples_checked,
            "worst_margin": clean(self.worst_margin),
            "witness": clean(self.witness),
            "details": {k: clean(v) for k, v in self.details.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _report(assumption_id: str, margins: np.ndarray, samples: np.ndarray,
            atol: float = MARGIN_ATOL, details: dict | None = None,
            force_fail: bool = False) -> AssumptionReport:
    worst = int(np.argmin(margins))
    failed = force_fail or margins[worst] < -atol
    return AssumptionReport(
        assumption_id=assumption_id,
        verdict="fail" if failed else "pass",
        samples_checked=int(margins.size),
        worst_margin=float(margins[worst]),
        witness=samples[worst].copy() if failed else None,
        details=details or {},
    )


def sample_region(dim: int, radius: float, rng: np.random.Generator,
                  n_shells: int = 8, n_dirs: int = 24,
                  n_random: int = 256) -> np.ndarray:
    """Deterministic radial shells (log-spaced radii, low-discrepancy
    directions) plus uniform random points in the ball of the given radius."""
    radii = np.geomspace(radius * 1e-3, radius, n_shells)
    sob = qmc.Sobol(d=dim, scramble=False, seed=0)
    n_pow2 = 1 << int(np.ceil(np.log2(n_dirs + 1)))
    raw = sob.random(n_pow2)[1: n_dirs + 1]  # drop the all-zeros first point
    dirs = _to_directions(raw)
    shells = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    g = rng.standard_normal((n_random, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, n_random) ** (1.0 / dim)
    randoms = g * r[:, None]
    return np.vstack([np.zeros((1, dim)), shells, randoms])


def _uniform_ball(dim: int, radius: float, rng: np.random.Generator,
                  n: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, n) ** (1.0 / dim)
    return g * r[:, None]


def _to_directions(unit_cube_pts: np.ndarray) -> np.ndarray:
    from scipy.stats import norm

    z = norm.ppf(np.clip(unit_cube_pts, 1e-9, 1 - 1e-9))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return z / norms


def _adversarial_ball_element(gv: np.ndarray, eps: float) -> np.ndarray:
    norms = np.linalg.norm(gv, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, eps * gv / safe, 0.0)


def check_iss_dissipation(lyap: LyapunovSpec, drift: Callable, epsilon: float,
                          dim: int, radius: float, rng: np.random.Generator,
                          n_random: int = 512,
                          extra_fields: Sequence[Callable] = ()) -> AssumptionReport:
    """<gradV(x), drift(x) + b> <= -a(||x||) + b_fn(epsilon) at every sample,
    with b the adversarial ball element epsilon * gradV/||gradV||.

    Linearity in b makes the adversarial selection sufficient; extra_fields
    supplies additional selections of a set-valued right-hand side (e.g.
    subdifferential vertices), each checked at every sample.
    """
    xs = sample_region(dim, radius, rng, n_random=n_random)
    gv = lyap.gradV(xs)
    b = _adversarial_ball_element(gv, epsilon)
    rhs = -lyap.a_fn(np.linalg.norm(xs, axis=1)) + float(lyap.b_fn(np.asarray([epsilon]))[0])
    margins = None
    for fld in (drift, *extra_fields):
        lhs = np.sum(gv * (fld(xs) + b), axis=1)
        m = rhs - lhs
        margins = m if margins is None else np.minimum(margins, m)
    return _report("iss_dissipation", margins, xs,
                   details={"epsilon": epsilon, "radius": radius,
                            "n_fields": 1 + len(extra_fields)})


def check_quadratic_sandwich(lyap: LyapunovSpec, dim: int, radius: float,
                             rng: np.random.Generator,
                             n_random: int = 512) -> AssumptionReport:
    """a_low ||x||^2 <= V(x) <= a_high ||x||^2 on the sampled region."""
    xs = sample_region(dim, radius, rng, n_random=n_random)
    v = lyap.V(xs)
    sq = np.sum(xs * xs, axis=1)
    margins = np.minimum(v - lyap.a_low * sq, lyap.a_high * sq - v)
    return _report("quadratic_sandwich", margins, xs,
                   details={"a_low": lyap.a_low, "a_high": lyap.a_high})


def fit_sandwich_constants(V: Callable, dim: int, radius: float,
                           rng: np.random.Generator, n_random: int = 512,
                           safety: float = 0.05) -> tuple[float, float]:
    """Sampled min/max of V(x)/||x||^2, widened by the relative safety factor
    so the constants survive re-verification on fresh samples."""
    xs = sample_region(dim, radius, rng, n_random=n_random)
    sq = np.sum(xs * xs, axis=1)
    keep = sq > 1e-18
    ratio = V(xs[keep]) / sq[keep]
    return float(ratio.min()) * (1 - safety), float(ratio.max()) * (1 + safety)


def estimate_lipschitz(field: Callable, dim: int, radius: float,
                       rng: np.random.Generator, n_pairs: int = 2000) -> float:
    """Lower estimate of the Lipschitz constant from sampled pairs."""
    x = sample_region(dim, radius, rng, n_random=n_pairs)
    y = x + rng.standard_normal(x.shape) * (radius * 0.1)
    num = np.linalg.norm(field(x) - field(y), axis=1)
    den = np.linalg.norm(x - y, axis=1)
    keep = den > 1e-12
    if not np.any(keep):
        return 0.0
    return float((num[keep] / den[keep]).max())


def check_pl(p: Problem, mu: float, radius: float, rng: np.random.Generator,
             n_random: int = 512, center=None) -> AssumptionReport:
    """(1/2)||grad f||^2 >= mu (f - f*) on the sampled region."""
    grad = p.require_grad()
    if p.fstar is None:
        raise DomainError("gradient-domination check needs a reference optimum")
    xs = sample_region(p.dim, radius, rng, n_random=n_random)
    if center is not None:
        xs = xs + np.asarray(center, dtype=float)
    margins = 0.5 * np.sum(grad(xs) ** 2, axis=1) - mu * (p.f(xs) - p.fstar)
    return _report("gradient_domination", margins, xs, details={"mu": mu})


def fit_pl_constant(p: Problem, radius: float, rng: np.random.Generator,
                    n_random: int = 512, center=None,
                    safety: float = 0.05) -> float:
    """Sampled min of (1/2)||grad f||^2 / (f - f*), shrunk by the relative
    safety factor."""
    grad = p.require_grad()
    xs = sample_region(p.dim, radius, rng, n_random=n_random)
    if center is not None:
        xs = xs + np.asarray(center, dtype=float)
    gap = p.f(xs) - p.fstar
    keep = gap > 1e-9
    ratio = 0.5 * np.sum(grad(xs[keep]) ** 2, axis=1) / gap[keep]
    return float(ratio.min()) * (1 - safety)


def check_quadratic_growth(p: Problem, r1: float, r2: float, radius: float,
                           rng: np.random.Generator,
                           n_random: int = 512) -> AssumptionReport:
    """r1 d^2 <= f - f* <= r2 d^2 with d the distance to the minimizer."""
    if p.xstar is None or p.fstar is None:
        raise DomainError("growth check needs the reference minimizer")
    xs = sample_region(p.dim, radius, rng, n_random=n_random) + p.xstar
    gap = p.f(xs) - p.fstar
    sq = np.sum((xs - p.xstar) ** 2, axis=1)
    margins = np.minimum(gap - r1 * sq, r2 * sq - gap)
    return _report("quadratic_growth", margins, xs, details={"r1": r1, "r2": r2})


def fit_quadratic_growth(p: Problem, radius: float, rng: np.random.Generator,
                         n_random: int = 512, safety: float = 0.05
                         ) -> tuple[float, float]:
    xs = sample_region(p.dim, radius, rng, n_random=n_random)[1:] + p.xstar
    gap = p.f(xs) - p.fstar
    sq = np.sum((xs - p.xstar) ** 2, axis=1)
    keep = sq > 1e-18
    ratio = gap[keep] / sq[keep]
    return float(ratio.min()) * (1 - safety), float(ratio.max()) * (1 + safety)


def check_strong_monotonicity(p: Problem, M: float, radius: float,
                              rng: np.random.Generator, n_pairs: int = 2000,
                              feasible: ConvexSet | None = None) -> AssumptionReport:
    """<g(x) - g(y), x - y> >= M ||x - y||^2 on sampled pairs, minimum-norm
    subgradient selections."""
    g = p.require_subgrad()
    if feasible is not None:
        x = feasible.sample(rng, n_pairs)
        y = feasible.sample(rng, n_pairs)
    else:
        x = _uniform_ball(p.dim, radius, rng, n_pairs)
        y = _uniform_ball(p.dim, radius, rng, n_pairs)
    diff = x - y
    margins = np.sum((g(x) - g(y)) * diff, axis=1) - M * np.sum(diff * diff, axis=1)
    return _report("strong_monotonicity", margins, x, details={"M": M})


def check_marchaud_growth(fields: Sequence[Callable], kappa: float, dim: int,
                          radius: float, rng: np.random.Generator,
                          n_random: int = 512) -> AssumptionReport:
    """sup over the sampled selections of ||element|| <= kappa (1 + ||x||)."""
    xs = sample_region(dim, radius, rng, n_random=n_random)
    cap = kappa * (1.0 + np.linalg.norm(xs, axis=1))
    margins = None
    for fld in fields:
        m = cap - np.linalg.norm(fld(xs), axis=1)
        margins = m if margins is None else np.minimum(margins, m)
    return _report("marchaud_growth", margins, xs, details={"kappa": kappa})


def check_noise_moment(sampler: Callable, K: float, xs: np.ndarray,
                       rng: np.random.Generator, draws: int = 4096) -> AssumptionReport:
    """Monte-Carlo conditional second moment at each base point:
    E||M||^2 <= K plus three standard errors.

    The estimate is recomputed at half the sample size; a relative swing
    above 50% flags a non-convergent (heavy-tailed) moment and fails the
    check regardless of the level.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    margins = np.empty(xs.shape[0])
    unstable = False
    moments = []
    for i, x in enumerate(xs):
        m = sampler(x, rng, draws)
        sq = np.sum(np.atleast_2d(m) ** 2, axis=1)
        est = float(sq.mean())
        half = float(sq[: draws // 2].mean())
        swing = abs(est - half) / max(est, half) if max(est, half) > 0 else 0.0
        top_share = float(sq.max() / sq.sum()) if sq.sum() > 0 else 0.0
        if swing > 0.5 or top_share > 0.2:
            unstable = True
        se = float(sq.std() / np.sqrt(sq.size))
        margins[i] = K + 3.0 * se - est
        moments.append(est)
    return _report("noise_moment", margins, xs, force_fail=unstable,
                   details={"K": K, "draws": draws, "moments": moments,
                            "unstable": unstable})


def constrained_minimizer(p: Problem, S: ConvexSet, step: float | None = None,
                          iters: int = 200_000, tol: float = 1e-14) -> np.ndarray:
    """High-accuracy projected (sub)gradient solve of the noiseless problem."""
    g = p.require_subgrad()
    rng = np.random.default_rng(0)
    x = project(S, S.sample(rng, 1)[0])
    if step is None:
        lip = estimate_lipschitz(g, S.dim, 2.0, rng, n_pairs=500)
        step = 1.0 / max(lip, 1.0)
    for k in range(iters):
        x_new = project(S, x - step * g(x))
        if np.linalg.norm(x_new - x) < tol * max(1.0, np.linalg.norm(x)):
            return x_new
        x = x_new
    return x


def check_iss_constrained(p: Problem, S: ConvexSet, M: float, eps: float,
                          rng: np.random.Generator, n_samples: int = 512,
                          xstar: np.ndarray | None = None,
                          atol: float = 1e-8) -> AssumptionReport:
    """<x - x*, -g - eta + b> <= -(M/2)||x - x*||^2 + eps^2/(2M) on sampled
    feasible points, with the Young parameter fixed at 1/M, the minimum-norm
    subgradient g, the realized normal-cone element eta, and the worst-case
    ball element b."""
    if not (M > 0):
        raise DomainError("monotonicity constant must be positive")
    g_fn = p.require_subgrad()
    xs_star = constrained_minimizer(p, S) if xstar is None else np.asarray(xstar, float)
    interior = S.sample(rng, n_samples)
    boundary = np.array([project(S, z) for z in
                         S.sample(rng, n_samples) * 2.5 - _set_center(S) * 1.5])
    xs = np.vstack([interior, boundary, xs_star[None, :]])
    d = xs - xs_star
    dn = np.linalg.norm(d, axis=1, keepdims=True)
    b = np.where(dn > 0, eps * d / np.where(dn > 0, dn, 1.0), 0.0)
    g = g_fn(xs)
    lhs = np.empty(xs.shape[0])
    for i, x in enumerate(xs):
        eta = normal_cone_project(S, x, -(g[i] + b[i]))
        lhs[i] = float(d[i] @ (-g[i] - eta + b[i]))
    rhs = -(M / 2.0) * (dn[:, 0] ** 2) + eps * eps / (2.0 * M)
    return _report("iss_constrained", rhs - lhs, xs, atol=atol,
                   details={"M": M, "epsilon": eps, "xstar": xs_star})


def _set_center(S: ConvexSet) -> np.ndarray:
    if S.variant == "box":
        return (S.lo + S.hi) / 2.0
    if S.variant == "ball":
        return S.center
    return np.full(S.dim, S.scale / S.dim)
