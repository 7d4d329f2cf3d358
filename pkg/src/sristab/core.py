"""Fundamental types: step-size schedules, the algorithmic clock, iterate
traces, the piecewise-linear interpolation of a trace, and seeded random
streams.

Conventions used throughout the package:

* points are 1-d float64 numpy arrays of length ``d >= 1``;
* the step applied between iterate ``n`` and ``n+1`` is ``alpha(n) =
  c / (n+1)**p`` for ``n >= 0``, so the first applied step equals the
  1-indexed law ``c / n**p`` at ``n = 1``;
* the clock is ``t(0) = 0`` and ``t(n) = sum_{k<n} alpha(k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "RangeError",
    "StepSchedule",
    "RandomSource",
    "Trace",
    "TraceBuilder",
    "schedule_value",
    "robbins_monro_verdict",
    "clock",
    "interpolate",
    "as_point",
]


class DomainError(ValueError):
    """An argument lies outside an operation's domain."""


class RangeError(ValueError):
    """A query time lies outside the range covered by a trace."""


def as_point(x) -> np.ndarray:
    """Coerce to a finite float64 vector; reject NaN/Inf and empty vectors."""
    p = np.asarray(x, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.ndim != 1 or p.size < 1:
        raise DomainError(f"point must be a vector of length >= 1, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError("point has non-finite coordinates")
    return p


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step sizes ``alpha(n) = c / (n+1)**p``.

    ``p`` may exceed 1 so that summable schedules can be constructed and
    classified; only ``1/2 < p <= 1`` is admissible in the Robbins-Monro
    sense.
    """

    c: float
    p: float
    _prefix: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (self.c > 0):
            raise DomainError(f"scale c must be positive, got {self.c}")
        if not (self.p > 0):
            raise DomainError(f"exponent p must be positive, got {self.p}")
        object.__setattr__(self, "_prefix", np.zeros(1))

    def alpha(self, n: int) -> float:
        """Step applied between iterates n and n+1 (zero-based)."""
        if n < 0:
            raise DomainError("step index must be >= 0")
        return self.c / (n + 1.0) ** self.p

    def alphas(self, start: int, stop: int) -> np.ndarray:
        """Vector of alpha(n) for n in [start, stop)."""
        n = np.arange(start, stop, dtype=float)
        return self.c / (n + 1.0) ** self.p

    def _extend(self, n: int) -> None:
        have = self._prefix.size - 1
        if n <= have:
            return
        # grow geometrically so repeated queries stay O(1) amortized
        grow = max(n, 2 * have, 1024)
        tail = np.cumsum(self.alphas(have, grow)) + self._prefix[-1]
        object.__setattr__(self, "_prefix", np.concatenate([self._prefix, tail]))

    def clock(self, n: int) -> float:
        """t(n) = sum of the first n steps; t(0) = 0."""
        if n < 0:
            raise DomainError("clock index must be >= 0")
        self._extend(n)
        return float(self._prefix[n])

    def clock_grid(self, n: int) -> np.ndarray:
        """Array [t(0), ..., t(n)]."""
        self._extend(n)
        return self._prefix[: n + 1].copy()

    def steps_to_cover(self, n: int, horizon: float) -> int:
        """Smallest m with t(n+m) >= t(n) + horizon."""
        if horizon <= 0:
            return 0
        target = self.clock(n) + horizon
        m = 1
        while self.clock(n + m) < target:
            m = m * 2
        lo, hi = m // 2, m
        while lo < hi:
            mid = (lo + hi) // 2
            if self.clock(n + mid) >= target:
                hi = mid
            else:
                lo = mid + 1
        return lo


def schedule_value(s: StepSchedule, n: int) -> float:
    """The law in its conventional 1-indexed form, c / n**p for n >= 1."""
    if n < 1:
        raise DomainError("schedule is indexed from 1")
    return s.c / float(n) ** s.p


def robbins_monro_verdict(s: StepSchedule) -> str:
    """Classify a power schedule analytically.

    Returns ``"admissible"`` (divergent sum, summable squares) for
    1/2 < p <= 1, ``"summable"`` for p > 1, and
    ``"divergent-sum-of-squares"`` for p <= 1/2.
    """
    if s.p > 1:
        return "summable"
    if s.p > 0.5:
        return "admissible"
    return "divergent-sum-of-squares"


def clock(s: StepSchedule, n: int) -> float:
    """t(n) with t(0) = 0; prefix sums are cached on the schedule."""
    return s.clock(n)


class RandomSource:
    """Deterministic, splittable randomness keyed by (seed, path).

    Sub-streams are derived through ``numpy.random.SeedSequence`` so any two
    distinct (seed, path) pairs yield independent, non-overlapping streams;
    safe under parallel execution.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)

    @staticmethod
    def _key(value) -> int:
        if isinstance(value, (int, np.integer)):
            return int(value) & 0xFFFFFFFFFFFFFFFF
        if isinstance(value, float):
            return int(np.float64(value).view(np.uint64))
        raise DomainError(f"stream key must be int or float, got {type(value)!r}")

    def split(self, *keys) -> "RandomSource":
        """Child source whose stream is independent of the parent's."""
        return RandomSource(self.seed, self.path + tuple(self._key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence((self.seed,) + self.path)
        return np.random.Generator(np.random.PCG64(seq))


@dataclass
class Trace:
    """A realized run: iterates x_0..x_N plus per-step logs.

    ``points`` has one more row than the per-step arrays.  ``noise`` holds the
    reconstructed martingale differences M_{n+1} when the estimator is
    decomposable, otherwise the raw estimates; ``estimates`` holds the raw
    oracle outputs; ``bias`` the realized per-step drift perturbation (the
    measurable selection actually taken, when known).  ``meta`` may carry the
    raw estimator logs (directions and the two noisy values per step).
    """

    points: np.ndarray
    schedule: StepSchedule
    seed: int
    noise: np.ndarray | None = None
    estimates: np.ndarray | None = None
    bias: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise DomainError("points must be a (N+1, d) array")
        for name in ("noise", "estimates", "bias"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (self.n_steps, self.dim):
                    raise DomainError(
                        f"{name} must have shape ({self.n_steps}, {self.dim}), got {arr.shape}"
                    )
                setattr(self, name, arr)

    @property
    def n_steps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def times(self) -> np.ndarray:
        return self.schedule.clock_grid(self.n_steps)


class TraceBuilder:
    """Append-only accumulator for a single run (one writer per trace)."""

    def __init__(self, x0, schedule: StepSchedule, seed: int, n_steps_hint: int = 0):
        x0 = as_point(x0)
        n = max(n_steps_hint, 0)
        self._d = x0.size
        self._points = np.empty((n + 1, self._d))
        self._points[0] = x0
        self._noise = np.empty((n, self._d))
        self._estimates = np.empty((n, self._d))
        self._bias = np.empty((n, self._d))
        self._k = 0
        self.schedule = schedule
        self.seed = seed
        self.meta: dict = {}

    def _grow(self):
        n = max(2 * (self._points.shape[0] - 1), 256)
        for name in ("_points", "_noise", "_estimates", "_bias"):
            old = getattr(self, name)
            rows = n + 1 if name == "_points" else n
            new = np.empty((rows, self._d))
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def append(self, x_next, *, noise, estimate, bias) -> None:
        if self._k >= self._noise.shape[0]:
            self._grow()
        k = self._k
        self._points[k + 1] = x_next
        self._noise[k] = noise
        self._estimates[k] = estimate
        self._bias[k] = bias
        self._k = k + 1

    def build(self) -> Trace:
        k = self._k
        return Trace(
            points=self._points[: k + 1].copy(),
            schedule=self.schedule,
            seed=self.seed,
            noise=self._noise[:k].copy(),
            estimates=self._estimates[:k].copy(),
            bias=self._bias[:k].copy(),
            meta=self.meta,
        )


def interpolate(tr: Trace, t: float) -> np.ndarray:
    """Piecewise-linear interpolation of the trace at clock time t.

    On the segment [t(n), t(n+1)) the value is
    ``x_n + (x_{n+1} - x_n) * (t - t(n)) / (t(n+1) - t(n))``.
    """
    grid = tr.times()
    if t < grid[0] or t > grid[-1]:
        raise RangeError(f"time {t} outside trace range [{grid[0]}, {grid[-1]}]")
    n = int(np.searchsorted(grid, t, side="right")) - 1
    if n >= tr.n_steps:  # t == t(N) exactly
        return tr.points[-1].copy()
    w = (t - grid[n]) / (grid[n + 1] - grid[n])
    return tr.points[n] + (tr.points[n + 1] - tr.points[n]) * w


def interpolate_many(tr: Trace, ts: np.ndarray) -> np.ndarray:
    """Vectorized interpolation at an array of clock times."""
    grid = tr.times()
    ts = np.asarray(ts, dtype=float)
    if ts.size and (ts.min() < grid[0] or ts.max() > grid[-1]):
        raise RangeError("some times lie outside the trace range")
    idx = np.clip(np.searchsorted(grid, ts, side="right") - 1, 0, tr.n_steps - 1)
    w = (ts - grid[idx]) / (grid[idx + 1] - grid[idx])
    return tr.points[idx] + (tr.points[idx + 1] - tr.points[idx]) * w[:, None]
