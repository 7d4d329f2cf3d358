"""Noisy value oracles, the symmetric two-point gradient estimator, biased
subgradient oracles, and Monte-Carlo bias/variance measurement.

Two models of the systematic value-noise means are supported:

* ``per_side``: the plus/minus queries of one estimator call receive noise
  with means ``mean_plus`` / ``mean_minus`` regardless of the direction
  drawn.  Because both direction laws are symmetric, the mean gap cancels in
  expectation and only inflates the estimator variance (by
  ``(gap^2 + 2 sigma^2) E||u||^2 / (4 lam^2)``).
* ``half_space``: the noise mean is a field over query positions:
  ``mean_plus`` on the half-space ``<y - x, e1> >= 0`` and ``mean_minus``
  opposite.  The mean gap then produces a genuine systematic gradient error
  of magnitude ``(gap/2) E|u_1| / lam`` along ``e1``, the worst-case
  mechanism behind the ``b1/lam`` bias term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .core import DomainError
from .problems import CapabilityError, Problem

__all__ = ["NoiseSpec", "ZoEstimatorConfig", "BiasModel", "ZoOracle",
           "query_value", "zo_gradient", "measure_bias",
           "measure_second_moment", "fit_bias_model", "biased_subgradient",
           "BiasedSubgradOracle"]

DIRECTION_LAWS = ("gaussian_isotropic", "unit_sphere_scaled")
NOISE_MODELS = ("per_side", "half_space")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive gaussian value noise with side-dependent means."""

    mean_plus: float = 0.0
    mean_minus: float = 0.0
    sigma: float = 0.0
    law: str = "gaussian"
    model: str = "per_side"

    def __post_init__(self):
        if self.law != "gaussian":
            raise DomainError(f"unsupported noise law {self.law!r}")
        if self.model not in NOISE_MODELS:
            raise DomainError(f"noise model must be one of {NOISE_MODELS}")
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")


@dataclass(frozen=True)
class ZoEstimatorConfig:
    """Smoothing radius, direction law and value-noise model of the two-point
    estimator.  Both direction laws satisfy E[u u^T] = I."""

    lam: float
    direction_law: str = "gaussian_isotropic"
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if not (self.lam > 0):
            raise DomainError(f"smoothing parameter must be positive, got {self.lam}")
        if self.direction_law not in DIRECTION_LAWS:
            raise DomainError(f"direction law must be one of {DIRECTION_LAWS}")


@dataclass(frozen=True)
class BiasModel:
    """Constants of the oracle error model: systematic error bounded by
    b1/lam + b2*lam, squared stochastic error by b3/lam^2."""

    b1: float
    b2: float
    b3: float = 1.0

    def __post_init__(self):
        if min(self.b1, self.b2, self.b3) <= 0:
            raise DomainError("bias model constants must be positive")

    def epsilon(self, lam: float) -> float:
        return self.b1 / lam + self.b2 * lam

    @property
    def lambda_star(self) -> float:
        return float(np.sqrt(self.b1 / self.b2))

    @property
    def epsilon_min(self) -> float:
        return 2.0 * float(np.sqrt(self.b1 * self.b2))

    def second_moment_bound(self, lam: float) -> float:
        return self.b3 / lam**2


def query_value(p: Problem, noise: NoiseSpec, side: str, x,
                rng: np.random.Generator) -> float:
    """One noisy value f(x) + e with e ~ N(mean_side, sigma^2)."""
    if side not in ("plus", "minus"):
        raise DomainError("side must be 'plus' or 'minus'")
    mean = noise.mean_plus if side == "plus" else noise.mean_minus
    x = np.asarray(x, dtype=float)
    return float(p.f(x)) + mean + noise.sigma * float(rng.standard_normal())


class ZoOracle:
    """Symmetric two-point estimator bound to a problem and a configuration.

    ``sample`` serves sequential runs (one draw block per call so replays are
    bit-exact); ``batch`` serves Monte-Carlo measurement.
    """

    def __init__(self, problem: Problem, cfg: ZoEstimatorConfig):
        self.problem = problem
        self.cfg = cfg

    def _directions(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = self.problem.dim
        g = rng.standard_normal((n, d))
        if self.cfg.direction_law == "unit_sphere_scaled":
            g *= np.sqrt(d) / np.linalg.norm(g, axis=1, keepdims=True)
        return g

    def _noise_means(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ns = self.cfg.noise
        if ns.model == "per_side":
            n = u.shape[0]
            return np.full(n, ns.mean_plus), np.full(n, ns.mean_minus)
        ahead = u[:, 0] >= 0.0
        mp = np.where(ahead, ns.mean_plus, ns.mean_minus)
        mm = np.where(~ahead, ns.mean_plus, ns.mean_minus)
        return mp, mm

    def batch(self, x, rng: np.random.Generator, n: int) -> tuple[np.ndarray, dict]:
        """n independent estimates at a fixed point, plus the raw logs."""
        x = np.asarray(x, dtype=float)
        lam = self.cfg.lam
        u = self._directions(rng, n)
        mp, mm = self._noise_means(u)
        z = rng.standard_normal((n, 2))
        fplus = self.problem.f(x + lam * u) + mp + self.cfg.noise.sigma * z[:, 0]
        fminus = self.problem.f(x - lam * u) + mm + self.cfg.noise.sigma * z[:, 1]
        est = ((fplus - fminus) / (2.0 * lam))[:, None] * u
        return est, {"u": u, "fplus": fplus, "fminus": fminus}

    def sample(self, x, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
        """One estimate; consumes the stream exactly like ``batch(x, rng, 1)``."""
        lam = self.cfg.lam
        ns = self.cfg.noise
        d = self.problem.dim
        z = rng.standard_normal(d + 2)
        u = z[:d]
        if self.cfg.direction_law == "unit_sphere_scaled":
            u = u * (np.sqrt(d) / np.linalg.norm(u))
        if ns.model == "per_side" or u[0] >= 0.0:
            mp, mm = ns.mean_plus, ns.mean_minus
        else:
            mp, mm = ns.mean_minus, ns.mean_plus
        fplus = float(self.problem.f(x + lam * u)) + mp + ns.sigma * z[d]
        fminus = float(self.problem.f(x - lam * u)) + mm + ns.sigma * z[d + 1]
        est = ((fplus - fminus) / (2.0 * lam)) * u
        return est, {"u": u, "fplus": fplus, "fminus": fminus}

    def conditional_mean(self, x) -> np.ndarray:
        """Exact E[estimate | x] when available (gaussian directions and a
        problem with a closed-form smoothed gradient); the noise means never
        enter under per_side, and contribute a fixed e1 shift under
        half_space."""
        if self.problem.zo_mean is None or self.cfg.direction_law != "gaussian_isotropic":
            raise CapabilityError("estimator is not decomposable for this setup")
        x = np.asarray(x, dtype=float)
        mean = self.problem.zo_mean(x, self.cfg.lam)
        ns = self.cfg.noise
        if ns.model == "half_space":
            gap = ns.mean_plus - ns.mean_minus
            shift = np.zeros_like(mean)
            # E[(e+ - e-) u] = gap E[sign(u1) u] = gap sqrt(2/pi) e1
            shift[..., 0] = gap * np.sqrt(2.0 / np.pi) / (2.0 * self.cfg.lam)
            mean = mean + shift
        return mean

    @property
    def decomposable(self) -> bool:
        return (self.problem.zo_mean is not None
                and self.cfg.direction_law == "gaussian_isotropic")


def zo_gradient(p: Problem, cfg: ZoEstimatorConfig, x,
                rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """One estimate ((f+(x+lam u) - f-(x-lam u)) / 2 lam) u with its log."""
    return ZoOracle(p, cfg).sample(x, rng)


def measure_bias(p: Problem, cfg: ZoEstimatorConfig, x, samples: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Monte-Carlo estimate of E[estimate] - grad f(x) with a CLT radius."""
    if p.grad is None:
        raise CapabilityError("bias measurement needs the true gradient")
    if samples < 1000:
        raise DomainError("bias measurement needs at least 1000 samples")
    est, _ = ZoOracle(p, cfg).batch(x, rng, samples)
    g = p.grad(np.asarray(x, dtype=float))
    bias = est.mean(axis=0) - g
    se = float(np.sqrt(est.var(axis=0).sum() / samples))
    return bias, se


def measure_second_moment(p: Problem, cfg: ZoEstimatorConfig, x, samples: int,
                          rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of E||estimate - grad f(x)||^2."""
    if p.grad is None:
        raise CapabilityError("second-moment measurement needs the true gradient")
    if samples < 1000:
        raise DomainError("second-moment measurement needs at least 1000 samples")
    est, _ = ZoOracle(p, cfg).batch(x, rng, samples)
    g = p.grad(np.asarray(x, dtype=float))
    return float(np.mean(np.sum((est - g) ** 2, axis=1)))


def fit_bias_model(lams, bias_norms, second_moments=None) -> BiasModel:
    """Least-squares fit of (b1, b2) to measured bias norms on a lam grid
    (nonnegative, floored away from zero), and of b3 to second moments."""
    lams = np.asarray(lams, dtype=float)
    bias_norms = np.asarray(bias_norms, dtype=float)
    if lams.size < 2:
        raise DomainError("bias-model fit needs at least two lambda values")
    design = np.column_stack([1.0 / lams, lams])
    coef, _ = nnls(design, bias_norms)
    b1 = max(float(coef[0]), 1e-12)
    b2 = max(float(coef[1]), 1e-12)
    if second_moments is None:
        b3 = 1.0
    else:
        sm = np.asarray(second_moments, dtype=float)
        w = 1.0 / lams**2
        b3 = max(float((sm * w).sum() / (w * w).sum()), 1e-12)
    return BiasModel(b1=b1, b2=b2, b3=b3)


class BiasedSubgradOracle:
    """Subgradient oracle returning g + B + M with a deterministic bias B
    realized at the model bound and zero-mean noise M.

    The default noise law draws M uniformly from a ball whose radius is set
    so that E||M||^2 equals b3/lam^2 exactly; realizations then stay bounded,
    which keeps a uniform bound on the returned vectors realizable.
    """

    def __init__(self, problem: Problem, model: BiasModel, lam: float,
                 bias_direction: str = "fixed", noise_law: str = "ball"):
        if not (lam > 0):
            raise DomainError("smoothing parameter must be positive")
        if bias_direction not in ("fixed", "adversarial"):
            raise DomainError("bias_direction must be 'fixed' or 'adversarial'")
        if noise_law not in ("ball", "gaussian"):
            raise DomainError("noise_law must be 'ball' or 'gaussian'")
        self.problem = problem
        self.model = model
        self.lam = lam
        self.bias_direction = bias_direction
        self.noise_law = noise_law
        problem.require_subgrad()

    def bias_vector(self, g: np.ndarray) -> np.ndarray:
        eps = self.model.epsilon(self.lam)
        d = self.problem.dim
        if self.bias_direction == "fixed":
            b = np.zeros(d)
            b[0] = eps
            return b
        norm = np.linalg.norm(g)
        if norm == 0.0:
            return np.zeros(d)
        return -eps * g / norm

    def noise_vector(self, rng: np.random.Generator) -> np.ndarray:
        d = self.problem.dim
        target = self.model.second_moment_bound(self.lam)
        if self.noise_law == "gaussian":
            return rng.standard_normal(d) * np.sqrt(target / d)
        g = rng.standard_normal(d)
        g /= np.linalg.norm(g)
        radius = np.sqrt(target * (d + 2.0) / d)
        return g * radius * rng.uniform() ** (1.0 / d)

    def sample(self, x, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
        x = np.asarray(x, dtype=float)
        g = self.problem.require_subgrad()(x)
        B = self.bias_vector(g)
        M = self.noise_vector(rng)
        return g + B + M, {"g": g, "B": B, "M": M}


def biased_subgradient(p: Problem, bm: BiasModel, lam: float, x,
                       rng: np.random.Generator,
                       bias_direction: str = "fixed",
                       noise_law: str = "ball") -> tuple[np.ndarray, dict]:
    """One draw from the biased subgradient oracle; the realized (g, B, M)
    decomposition is returned alongside."""
    oracle = BiasedSubgradOracle(p, bm, lam, bias_direction, noise_law)
    return oracle.sample(x, rng)
