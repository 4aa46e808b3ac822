"""Integration grids over the hull and their size schedules across iterations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid
from .hull import Hull, axis_grid_inside, sample_uniform
from .rng import RngStream

DEFAULT_STAGE_C1 = 8
DEFAULT_STAGE_RHO1 = 2


@dataclass(frozen=True)
class GridSchedule:
    """How the grid size m_t grows with the iteration index t.

    kinds:
      fixed        m_t = C
      polynomial   m_t = C * t^beta        (t = 0 counts as t = 1)
      exponential  m_t = C * rho^t
      multi_stage  m_t = C * rho^a, with stage a covering
                   t in [1 + C1*rho1^(a-1) * 1{a >= 2}, C1*rho1^a];
                   explicit stage_lengths override the C1/rho1 rule
    """

    kind: str
    C: float = 1.0
    rho: float = 2.0
    beta: float = 2.0
    C1: int = DEFAULT_STAGE_C1
    rho1: int = DEFAULT_STAGE_RHO1
    stage_lengths: tuple = None

    def __post_init__(self):
        if self.kind not in ("fixed", "polynomial", "exponential", "multi_stage"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")


def _stage_of(schedule: GridSchedule, t: int) -> int:
    if schedule.stage_lengths is not None:
        upper = np.cumsum(schedule.stage_lengths)
        a = int(np.searchsorted(upper, max(t, 1), side="left")) + 1
        return min(a, len(upper))
    # stage a covers t in (C1*rho1^(a-1), C1*rho1^a], with stage 1 from t=1
    a = 1
    while t > schedule.C1 * schedule.rho1 ** a:
        a += 1
    return a


def stage_lengths(schedule: GridSchedule, T: int) -> list:
    """Realized lengths of the multi-stage blocks among iterations 1..T."""
    if schedule.stage_lengths is not None:
        lens = list(schedule.stage_lengths)
    else:
        lens, covered, a = [], 0, 1
        while covered < T:
            upper = schedule.C1 * schedule.rho1 ** a
            lens.append(upper - covered)
            covered = upper
            a += 1
    out, covered = [], 0
    for length in lens:
        if covered >= T:
            break
        out.append(min(length, T - covered))
        covered += length
    return out


def schedule_size(schedule: GridSchedule, t: int) -> int:
    """Grid size m_t at iteration t (nondecreasing in t)."""
    if t < 0:
        raise ValueError("iteration index must be nonnegative")
    if schedule.kind == "fixed":
        m = schedule.C
    elif schedule.kind == "polynomial":
        m = schedule.C * max(t, 1) ** schedule.beta
    elif schedule.kind == "exponential":
        m = schedule.C * schedule.rho ** t
    else:
        m = schedule.C * schedule.rho ** _stage_of(schedule, t)
    return max(1, int(round(m)))


def schedule_diagnostics(schedule: GridSchedule, T: int) -> dict:
    """The grid-sum quantities governing the convergence-rate constants."""
    ms = np.array([schedule_size(schedule, t) for t in range(T)], dtype=float)
    return {
        "M1": float(np.sqrt(np.sum(1.0 / ms))),
        "M_half": float(np.sum(ms ** -0.5)),
        "M2": float(np.sqrt(np.sum(ms ** -2.0))),
        "total_queries": int(ms.sum()),
    }


@dataclass
class Grid:
    """A weighted integration point set inside C_n."""

    points: np.ndarray
    weight: float                # Delta / m, uniform across points
    origin: str                  # "deterministic" or "random"
    iteration: int
    points_per_axis: int = None

    @property
    def size(self) -> int:
        return len(self.points)


class GridFactory:
    """Builds per-iteration grids for one hull, caching axis-grid searches."""

    def __init__(self, hull: Hull, schedule: GridSchedule, origin: str,
                 stream: RngStream = None, pinned_axis_counts: dict = None):
        if origin not in ("deterministic", "random"):
            raise ValueError(f"unknown grid origin {origin!r}")
        if origin == "random" and stream is None:
            raise ValueError("random grids need an RngStream")
        self.hull = hull
        self.schedule = schedule
        self.origin = origin
        self.stream = stream
        self.pinned_axis_counts = pinned_axis_counts or {}
        self._axis_cache = {}        # points_per_axis -> inside count

    def _inside_count(self, p: int) -> int:
        if p not in self._axis_cache:
            try:
                self._axis_cache[p] = len(axis_grid_inside(self.hull, p))
            except EmptyGrid:
                self._axis_cache[p] = 0
        return self._axis_cache[p]

    def _axis_count_for(self, target: int, t: int) -> int:
        if t in self.pinned_axis_counts:
            return self.pinned_axis_counts[t]
        p = 2
        while self._inside_count(p) < target:
            p += 1
            if p > 10_000_000:
                raise EmptyGrid("no axis grid reaches the target size")
        return p

    def make(self, t: int) -> Grid:
        m_target = schedule_size(self.schedule, t)
        if self.origin == "random":
            pts = sample_uniform(self.hull, m_target, self.stream.child("grid", t))
            ppa = None
        else:
            ppa = self._axis_count_for(m_target, t)
            pts = axis_grid_inside(self.hull, ppa)
        m = len(pts)
        if m == 0:
            raise EmptyGrid("grid construction produced no points")
        return Grid(points=pts, weight=self.hull.total_volume / m,
                    origin=self.origin, iteration=t, points_per_axis=ppa)


def make_grid(hull: Hull, schedule: GridSchedule, t: int, origin: str,
              stream: RngStream = None) -> Grid:
    """One-shot grid construction (see :class:`GridFactory` for sweeps)."""
    return GridFactory(hull, schedule, origin, stream).make(t)
