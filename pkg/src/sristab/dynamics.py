"""Continuous-time side: Euler integration of a perturbed field (or of the
projected constrained field), deviation of an interpolated trace from the
flow over finite horizons, the explicit finite-horizon deviation certificate,
and weighted noise-sum tails.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DomainError, RangeError, Trace, interpolate, interpolate_many
from .geometry import ConvexSet, project
from .problems import CapabilityError

__all__ = ["DivergenceError", "InclusionSpec", "ContinuousTrajectory",
           "FiniteHorizonCertificate", "integrate", "solution_growth_bound",
           "apt_deviation", "finite_horizon_certificate", "martingale_tail",
           "trace_selection"]

DIVERGENCE_NORM = 1e12


class DivergenceError(RuntimeError):
    """The state norm exceeded the divergence guard."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass
class InclusionSpec:
    """Right-hand side of the perturbed dynamics.

    Either a single-valued ``drift`` (state derivative field), or a
    constrained triple (``subgrad``, ``feasible_set``, ``cone_bound``) whose
    trajectories follow the projected negative subgradient field.  The
    perturbation is a measurable selection from the ball of radius
    ``epsilon``; ``bias_selection`` picks it:

    * ``"zero"``: no perturbation;
    * ``("constant", direction)``: the fixed vector of norm epsilon along
      ``direction``;
    * ``("adversarial", gradV)``: epsilon * gradV(x)/||gradV(x)||, the
      selection maximizing the dissipation inequality's left side.
    """

    drift: Callable[[np.ndarray], np.ndarray] | None = None
    subgrad: Callable[[np.ndarray], np.ndarray] | None = None
    feasible_set: ConvexSet | None = None
    cone_bound: float | None = None
    epsilon: float = 0.0
    bias_selection: object = "zero"
    lipschitz: float | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        if (self.drift is None) == (self.subgrad is None):
            raise DomainError("specify exactly one of drift or subgrad")
        if self.subgrad is not None and self.feasible_set is None:
            raise DomainError("constrained dynamics need a feasible set")

    @property
    def constrained(self) -> bool:
        return self.subgrad is not None

    def selection(self) -> Callable[[float, np.ndarray], np.ndarray]:
        eps = self.epsilon
        sel = self.bias_selection
        if sel == "zero" or eps == 0.0:
            return lambda t, x: np.zeros_like(x)
        kind = sel[0]
        if kind == "constant":
            direction = np.asarray(sel[1], dtype=float)
            b = eps * direction / np.linalg.norm(direction)
            return lambda t, x: b
        if kind == "adversarial":
            grad_v = sel[1]

            def worst(t, x):
                g = np.asarray(grad_v(x), dtype=float)
                norm = np.linalg.norm(g)
                if norm == 0.0:
                    return np.zeros_like(x)
                return eps * g / norm

            return worst
        raise DomainError(f"unknown bias selection {sel!r}")


class _TraceSelection:
    """Piecewise-constant selection replaying the trace's logged per-step
    perturbation: b(t) = bias_n on [t(n), t(n+1)).  Time-only, so integrators
    may evaluate it on a whole grid at once."""

    time_only = True

    def __init__(self, tr: Trace):
        if tr.bias is None:
            raise CapabilityError("trace has no logged bias")
        self._grid = tr.times()
        self._bias = tr.bias

    def _segments(self, ts) -> np.ndarray:
        idx = np.searchsorted(self._grid, ts, side="right") - 1
        return np.clip(idx, 0, self._bias.shape[0] - 1)

    def __call__(self, t, x):
        return self._bias[int(self._segments(t))]

    def batch(self, ts: np.ndarray) -> np.ndarray:
        return self._bias[self._segments(np.asarray(ts, dtype=float))]


def trace_selection(tr: Trace) -> _TraceSelection:
    return _TraceSelection(tr)


@dataclass
class ContinuousTrajectory:
    times: np.ndarray
    states: np.ndarray
    dt: float

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation on the integrator grid."""
        if t < self.times[0] or t > self.times[-1]:
            raise RangeError("time outside the integrated horizon")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(i, self.times.size - 2)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return self.states[i] + (self.states[i + 1] - self.states[i]) * w


def integrate(spec: InclusionSpec, x0, horizon: float, dt: float, *,
              t0: float = 0.0,
              selection: Callable[[float, np.ndarray], np.ndarray] | None = None,
              checkpoints=None) -> ContinuousTrajectory:
    """Explicit Euler (projected Euler for constrained specs) over
    [t0, t0 + horizon], recording every substep.

    ``checkpoints`` are absolute times that the grid must hit exactly.  The
    state norm is guarded at 1e12; crossing it raises ``DivergenceError``
    carrying the blow-up time (detection is amortized over a few substeps).
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    x = np.array(x0, dtype=float)
    if spec.constrained and not spec.feasible_set.contains(x):
        raise DomainError("initial condition outside the feasible set")
    sel = selection if selection is not None else spec.selection()

    end = t0 + horizon
    if checkpoints is not None:
        # absorb checkpoints that overshoot the horizon by float rounding
        pts = np.asarray(checkpoints, dtype=float)
        pts = pts[(pts >= t0) & (pts <= end + 1e-9 * max(1.0, abs(end)))]
        if pts.size:
            end = max(end, float(pts.max()))
    else:
        pts = np.empty(0)
    times = t0 + dt * np.arange(int(np.ceil((end - t0) / dt)) + 1)
    times[-1] = end
    if pts.size:
        times = np.union1d(times, pts)

    steps = np.diff(times)
    # time-only selections are evaluated on the whole grid up front
    if getattr(sel, "time_only", False):
        b_arr = sel.batch(times[:-1])
        b_of = b_arr.__getitem__
    else:
        b_of = lambda i: sel(times[i], x)  # noqa: E731

    states = np.empty((times.size, x.size))
    states[0] = x
    if spec.constrained:
        g_fn, S = spec.subgrad, spec.feasible_set
        for i in range(times.size - 1):
            step = -(g_fn(x) + b_of(i))
            x = project(S, x + steps[i] * step)
            states[i + 1] = x
    else:
        drift = spec.drift
        # the guard is amortized; overflow between checks is expected and
        # converted into the structured error below
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(times.size - 1):
                step = drift(x) + b_of(i)
                step *= steps[i]
                x = x + step
                states[i + 1] = x
                if i % 64 == 0 and not float(np.abs(x).max()) < DIVERGENCE_NORM:
                    raise DivergenceError(
                        f"state norm exceeded {DIVERGENCE_NORM:g} at "
                        f"t={times[i + 1]:g}", time=float(times[i + 1]))
        if not float(np.abs(x).max()) < DIVERGENCE_NORM:
            raise DivergenceError(
                f"state norm exceeded {DIVERGENCE_NORM:g} at t={times[-1]:g}",
                time=float(times[-1]))
    return ContinuousTrajectory(times=times, states=states, dt=dt)


def solution_growth_bound(x0_norm: float, T: float, eps: float, L: float) -> float:
    """Worst-case norm of any solution over [0, T+1]:
    (||x0|| + (T+1) eps) * exp(L (T+1))."""
    if L < 0 or T < 0 or eps < 0:
        raise DomainError("arguments must be nonnegative")
    return (x0_norm + (T + 1.0) * eps) * float(np.exp(L * (T + 1.0)))


def _window_dt(tr: Trace, n: int, divisor: float) -> float:
    # the window-start step size is the relevant discrete scale; resolving
    # much below it buys nothing against the certificate's exp(L(T+1)) slack
    return min(float(tr.schedule.alpha(n)), 1e-3) / divisor


def apt_deviation(tr: Trace, spec: InclusionSpec, t_start: float, T: float,
                  dt: float | None = None) -> float:
    """sup over [0, T] of the distance between the interpolated trace started
    at clock time t_start and the flow from the same initial condition.

    The flow replays the trace's logged perturbation when present; the sup is
    taken over the union of the trace grid and the integrator grid, which is
    exact for two piecewise-linear curves.
    """
    grid = tr.times()
    if t_start < grid[0] or t_start + T > grid[-1]:
        raise RangeError("horizon exceeds the trace clock range")
    n0 = int(np.searchsorted(grid, t_start, side="right")) - 1
    n1 = int(np.searchsorted(grid, t_start + T, side="left"))
    if dt is None:
        dt = _window_dt(tr, n0, divisor=5.0)
    sel = trace_selection(tr) if tr.bias is not None else None
    x0 = interpolate(tr, t_start)
    inner = grid[(grid > t_start) & (grid < t_start + T)]
    flow = integrate(spec, x0, T, dt, t0=t_start, selection=sel,
                     checkpoints=inner)
    on_trace = interpolate_many(tr, flow.times)
    return float(np.linalg.norm(on_trace - flow.states, axis=1).max())


@dataclass
class FiniteHorizonCertificate:
    """Explicit deviation bound for the window [n, n+m] covering horizon T.

    ``bound`` dominates the measured interpolation-vs-flow deviation whenever
    the drift is globally Lipschitz with the stated constant.  The noise-sum
    term uses the m-1 upper summation limit; the source statement also shows
    an m variant, recorded in ``psi_convention``.
    """

    n: int
    T: float
    m: int
    D: float
    L: float
    epsilon: float
    C_T: float
    sum_sq_steps: float
    psi_norm: float
    K_nT: float
    bound: float
    measured: float
    psi_convention: str = ("psi sums alpha_{n+k} M_{n+k+1} for k in [0, m-1]; "
                           "an m-inclusive variant of the same display exists")

    def dominated(self) -> bool:
        return self.measured <= self.bound


def finite_horizon_certificate(tr: Trace, spec: InclusionSpec, n: int, T: float,
                               D: float | None = None,
                               dt: float | None = None) -> FiniteHorizonCertificate:
    """Computes the closed-form deviation bound and the measured deviation.

    Needs logged noise on the trace and a single-valued drift with a known
    Lipschitz constant on the spec.
    """
    if tr.noise is None:
        raise CapabilityError("certificate needs the trace's logged noise")
    if spec.constrained:
        raise DomainError("certificate applies to single-valued drifts")
    if spec.lipschitz is None:
        raise DomainError("certificate needs the drift's Lipschitz constant")
    L, eps = spec.lipschitz, spec.epsilon
    sched = tr.schedule
    m = sched.steps_to_cover(n, T)
    if n + m > tr.n_steps:
        raise RangeError("certificate window extends past the trace end")
    window = tr.points[n: n + m + 1]
    if D is None:
        D = float(np.linalg.norm(window, axis=1).max())

    alphas = sched.alphas(n, n + m)
    sum_sq = float(np.sum(alphas**2))
    psi = (alphas[:, None] * tr.noise[n: n + m]).sum(axis=0)
    psi_norm = float(np.linalg.norm(psi))

    growth = float(np.exp(L * (T + 1.0)))
    C_T = L * (D + (T + 1.0) * eps) * growth + eps
    K = L * C_T * sum_sq + 2.0 * eps * (T + 1.0) + psi_norm
    bound = K * growth

    if dt is None:
        dt = _window_dt(tr, n, divisor=10.0)
    grid = sched.clock_grid(n + m)
    sel = trace_selection(tr) if tr.bias is not None else None
    flow = integrate(spec, tr.points[n], grid[n + m] - grid[n], dt,
                     t0=grid[n], selection=sel, checkpoints=grid[n: n + m + 1])
    idx = np.searchsorted(flow.times, grid[n: n + m + 1])
    measured = float(np.linalg.norm(window - flow.states[idx], axis=1).max())

    return FiniteHorizonCertificate(
        n=n, T=T, m=m, D=D, L=L, epsilon=eps, C_T=C_T, sum_sq_steps=sum_sq,
        psi_norm=psi_norm, K_nT=K, bound=bound, measured=measured)


def martingale_tail(tr: Trace, n: int) -> float:
    """sup over n <= k < N of the norm of the alpha-weighted noise sum from
    step n through k."""
    if tr.noise is None:
        raise CapabilityError("trace has no logged noise")
    N = tr.n_steps
    if not (0 <= n < N):
        raise DomainError(f"start index must be in [0, {N})")
    alphas = tr.schedule.alphas(n, N)
    partial = np.cumsum(alphas[:, None] * tr.noise[n:], axis=0)
    return float(np.linalg.norm(partial, axis=1).max())
