"""Benchmark objectives and the Problem container.

All callables are vectorized over leading axes: they accept arrays of shape
``(..., d)`` and return ``(...)`` for values or ``(..., d)`` for gradients.

``zo_mean(x, lam)``, when present, is the exact conditional mean of the
symmetric two-point estimator under isotropic gaussian directions; it is what
makes a run "decomposable" (the martingale part of each estimate can be
reconstructed exactly).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import DomainError

__all__ = ["Problem", "f1_problem", "f2_problem", "quadratic_problem",
           "linear_problem", "l1_problem", "sphere_problem", "get_problem",
           "PROBLEM_IDS"]


class CapabilityError(RuntimeError):
    """The problem lacks an ingredient (gradient, subgradient, ...) an
    operation needs."""


@dataclass
class Problem:
    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    subgrad: Callable[[np.ndarray], np.ndarray] | None = None
    fstar: float | None = None
    xstar: np.ndarray | None = None
    zo_mean: Callable[[np.ndarray, float], np.ndarray] | None = None
    constants: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        if self.xstar is not None:
            self.xstar = np.asarray(self.xstar, dtype=float)
            if self.fstar is not None:
                if abs(float(self.f(self.xstar)) - self.fstar) > 1e-9:
                    raise DomainError("f(xstar) does not match fstar")

    def require_grad(self) -> Callable:
        if self.grad is None:
            raise CapabilityError(f"problem {self.name!r} has no gradient")
        return self.grad

    def require_subgrad(self) -> Callable:
        g = self.subgrad if self.subgrad is not None else self.grad
        if g is None:
            raise CapabilityError(f"problem {self.name!r} has no subgradient")
        return g

    def gap(self, x) -> float:
        if self.fstar is None:
            raise CapabilityError(f"problem {self.name!r} has no reference optimum")
        return abs(float(self.f(np.asarray(x, dtype=float))) - self.fstar)


def _argmin_quadratic_plus_sine() -> float:
    # root of 2x + cos(x) on (-1, 0), to machine precision
    x = -0.45
    for _ in range(60):
        g = 2.0 * x + np.cos(x)
        if g == 0.0:
            break
        x -= g / (2.0 - np.sin(x))
    return x


_X2_STAR = _argmin_quadratic_plus_sine()
_F1_STAR = _X2_STAR**2 + np.sin(_X2_STAR)
_F2_STAR = -0.25 + _F1_STAR


def f1_problem() -> Problem:
    """x1^2 + x2^2 + sin(x2): smooth, gradient-dominated, unique minimizer."""

    def f(x):
        return x[..., 0] ** 2 + x[..., 1] ** 2 + np.sin(x[..., 1])

    def grad(x):
        out = np.empty_like(x)
        out[..., 0] = 2 * x[..., 0]
        out[..., 1] = 2 * x[..., 1] + np.cos(x[..., 1])
        return out

    def zo_mean(x, lam):
        # symmetric differencing is exact on the quadratic part; the sine
        # contributes cos(x2) * E[sin(lam u) u] = cos(x2) * lam exp(-lam^2/2)
        out = np.empty_like(x)
        out[..., 0] = 2 * x[..., 0]
        out[..., 1] = 2 * x[..., 1] + np.cos(x[..., 1]) * np.exp(-0.5 * lam * lam)
        return out

    return Problem(
        dim=2, f=f, grad=grad, fstar=float(_F1_STAR),
        xstar=np.array([0.0, _X2_STAR]), zo_mean=zo_mean,
        constants={"L": 3.0},  # Hessian diag(2, 2 - sin x2), norm <= 3
        name="f1",
    )


def f2_problem() -> Problem:
    """x1^4 - x1^2 + x2^2 + sin(x2): two global minimizers at x1 = ±1/sqrt(2),
    a ridge of stationary points at x1 = 0."""

    def f(x):
        return x[..., 0] ** 4 - x[..., 0] ** 2 + x[..., 1] ** 2 + np.sin(x[..., 1])

    def grad(x):
        out = np.empty_like(x)
        out[..., 0] = 4 * x[..., 0] ** 3 - 2 * x[..., 0]
        out[..., 1] = 2 * x[..., 1] + np.cos(x[..., 1])
        return out

    def zo_mean(x, lam):
        # gaussian directions: E[u^4] = 3, so the quartic adds 12 lam^2 x1
        out = np.empty_like(x)
        out[..., 0] = (4 * x[..., 0] ** 3 - 2 * x[..., 0]
                       + 12.0 * lam * lam * x[..., 0])
        out[..., 1] = 2 * x[..., 1] + np.cos(x[..., 1]) * np.exp(-0.5 * lam * lam)
        return out

    return Problem(
        dim=2, f=f, grad=grad, fstar=float(_F2_STAR),
        xstar=np.array([1.0 / np.sqrt(2.0), _X2_STAR]), zo_mean=zo_mean,
        name="f2",
    )


def sphere_problem(dim: int = 2) -> Problem:
    """||x||^2 with minimizer at the origin."""

    def f(x):
        return np.sum(x * x, axis=-1)

    def grad(x):
        return 2.0 * x

    def zo_mean(x, lam):
        return 2.0 * x  # symmetric differencing exact for quadratics

    return Problem(dim=dim, f=f, grad=grad, fstar=0.0,
                   xstar=np.zeros(dim), zo_mean=zo_mean,
                   constants={"L": 2.0, "mu": 2.0}, name="sphere")


def quadratic_problem(A: np.ndarray, b: np.ndarray | None = None) -> Problem:
    """0.5 x^T A x + b^T x for symmetric positive semidefinite A."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    if not np.allclose(A, A.T):
        raise DomainError("A must be symmetric")

    def f(x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, A, x) + x @ b

    def grad(x):
        return x @ A + b

    eigs = np.linalg.eigvalsh(A)
    prob = Problem(dim=d, f=f, grad=grad,
                   constants={"L": float(eigs[-1]), "M": float(eigs[0])},
                   name="quadratic")
    if eigs[0] > 0:
        xs = np.linalg.solve(A, -b)
        prob.xstar = xs
        prob.fstar = float(f(xs))
    return prob


def linear_problem(c: np.ndarray) -> Problem:
    """<c, x>: monotone but not strongly monotone subdifferential."""
    c = np.asarray(c, dtype=float)

    def f(x):
        return x @ c

    def grad(x):
        return np.broadcast_to(c, x.shape).copy()

    return Problem(dim=c.size, f=f, grad=grad, name="linear")


def l1_problem(dim: int = 2) -> Problem:
    """||x||_1 with the minimum-norm subgradient selection (0 at kinks)."""

    def f(x):
        return np.sum(np.abs(x), axis=-1)

    def subgrad(x):
        return np.sign(x)

    return Problem(dim=dim, f=f, subgrad=subgrad, fstar=0.0,
                   xstar=np.zeros(dim), name="l1")


_REGISTRY: dict[str, Callable[[], Problem]] = {
    "f1": f1_problem,
    "f2": f2_problem,
    "sphere": sphere_problem,
}

PROBLEM_IDS = tuple(_REGISTRY)


def get_problem(problem_id: str) -> Problem:
    try:
        return _REGISTRY[problem_id]()
    except KeyError:
        raise DomainError(
            f"unknown problem id {problem_id!r}; known: {sorted(_REGISTRY)}"
        ) from None
