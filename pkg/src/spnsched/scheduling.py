"""Scheduling sets and their capacity regions.

A scheduling set D is either a finite list of schedules or a polytope given by
its vertices (conv of the list). The capacity region is
Pi = {gamma >= 0 : gamma <= d componentwise for some d in conv(D)}: the set of
arrival-rate vectors some mixture of schedules can dominate.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from spnsched.errors import ConfigurationError, NumericError

__all__ = [
    "SchedulingSet",
    "CapacityRegion",
    "max_total_departure",
    "capacity_param",
    "contains",
    "boundary_sample",
    "sample_integer_set",
]

FINITE = "finite"
POLYTOPE = "polytope"


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2:
        raise ConfigurationError(
            f"scheduling set needs a 2-d element array, got shape {arr.shape}")
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class SchedulingSet:
    """Immutable scheduling set.

    ``points`` holds one schedule (finite kind) or one vertex (polytope kind)
    per row; the represented set for the polytope kind is the convex hull of
    the rows.
    """

    n: int
    kind: str
    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        if self.kind not in (FINITE, POLYTOPE):
            raise ConfigurationError(f"unknown set kind {self.kind!r}")
        if pts.shape[0] < 1:
            raise ConfigurationError("scheduling set must have at least one element")
        if pts.shape[1] != self.n:
            raise ConfigurationError(
                f"set dimension mismatch: n={self.n} but rows have length {pts.shape[1]}")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("scheduling set entries must be finite")
        if np.any(pts < 0):
            raise ConfigurationError("scheduling set entries must be nonnegative")
        if self.kind == FINITE:
            seen = set(map(tuple, pts.tolist()))
            if len(seen) != pts.shape[0]:
                raise ConfigurationError("finite scheduling set has duplicate elements")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def to_json(self) -> dict:
        key = "elements" if self.kind == FINITE else "vertices"
        return {"n": self.n, "kind": self.kind, key: self.points.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "SchedulingSet":
        kind = obj.get("kind")
        if kind == FINITE:
            pts = obj.get("elements")
        elif kind == POLYTOPE:
            pts = obj.get("vertices")
        else:
            raise ConfigurationError(f"unknown set kind {kind!r} in JSON")
        if pts is None:
            raise ConfigurationError("set JSON missing its element list")
        arr = _as_points(pts)
        n = int(obj.get("n", arr.shape[1]))
        return SchedulingSet(n=n, kind=kind, points=arr)


def finite_set(points) -> SchedulingSet:
    arr = _as_points(points)
    return SchedulingSet(n=arr.shape[1], kind=FINITE, points=arr)


def polytope_set(vertices) -> SchedulingSet:
    arr = _as_points(vertices)
    return SchedulingSet(n=arr.shape[1], kind=POLYTOPE, points=arr)


@dataclasses.dataclass(frozen=True, eq=False)
class CapacityRegion:
    """The downward-closed region generated by a scheduling set."""

    generating_set: SchedulingSet


def max_total_departure(dset: SchedulingSet) -> float:
    """M = max over elements/vertices of the schedule's coordinate sum.

    A linear objective over a polytope attains its max at a vertex, so rows
    suffice for both kinds.
    """
    return float(dset.points.sum(axis=1).max())


def capacity_param(dset: SchedulingSet) -> float:
    """Smallest B with (1/n) sum_i d_i^2 <= B^2 for every schedule in the set.

    The maximized function is convex, so for the polytope kind the max over
    conv(D) is again attained at a vertex.
    """
    return float(np.sqrt((dset.points ** 2).sum(axis=1).max() / dset.n))


def contains(region: CapacityRegion, gamma, tol: float = 1e-9) -> bool:
    """Membership test for the capacity region.

    True iff some convex combination w of the rows satisfies
    P^T w >= gamma componentwise, decided by the min-slack LP

        minimize s  s.t.  P^T w >= gamma - s,  sum w = 1,  w >= 0

    and comparing the optimal slack to ``tol``.
    """
    P = region.generating_set.points
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (region.generating_set.n,):
        raise ConfigurationError(
            f"rate vector has shape {gamma.shape}, expected ({region.generating_set.n},)")
    if np.any(gamma < 0):
        raise ConfigurationError("rate vector must be nonnegative")
    if not gamma.any():
        return True
    m = P.shape[0]
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-P.T, -np.ones((P.shape[1], 1))])
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=-gamma, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if not res.success:
        raise NumericError(f"capacity-region LP failed: {res.message}",
                           iterations=getattr(res, "nit", None))
    return float(res.fun) <= tol


def _scale_to_boundary(region: CapacityRegion, direction: np.ndarray,
                       rel_tol: float = 1e-9) -> np.ndarray:
    """Scale a nonnegative direction to the region boundary by bisection.

    The scale theta* = max{theta : theta * u in Pi} is bracketed between a
    contained lo and a non-contained hi; hi starts above M / sum(u) + 1, which
    always violates the total-departure cap M.
    """
    u = direction
    M = max_total_departure(region.generating_set)
    lo = 0.0
    hi = M / float(u.sum()) + 1.0
    while hi - lo > rel_tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if contains(region, mid * u):
            lo = mid
        else:
            hi = mid
    return lo * u


def boundary_sample(region: CapacityRegion, rng: np.random.Generator) -> np.ndarray:
    """Draw a rate vector on the boundary of the capacity region.

    Direction: |standard normal| normalized (uniform over the positive orthant
    of the sphere); radius: bisection on membership. The result is contained,
    while any 1e-4 radial inflation is not.
    """
    if max_total_departure(region.generating_set) <= 0:
        raise ConfigurationError("degenerate region: max total departure is 0")
    n = region.generating_set.n
    while True:
        u = np.abs(rng.standard_normal(n))
        norm = float(np.linalg.norm(u))
        if norm > 0:
            break
    return _scale_to_boundary(region, u / norm)


def sample_integer_set(n: int, rng: np.random.Generator, *, count: int | None = None,
                       low: int = 1, high: int = 10) -> SchedulingSet:
    """Sample a finite set of ``count`` (default 10n) distinct integer
    schedules with entries in [low, high]; duplicates are resampled."""
    if count is None:
        count = 10 * n
    seen: set[tuple] = set()
    rows: list[np.ndarray] = []
    while len(rows) < count:
        cand = rng.integers(low, high + 1, size=n)
        key = tuple(int(v) for v in cand)
        if key in seen:
            continue
        seen.add(key)
        rows.append(cand.astype(float))
    return SchedulingSet(n=n, kind=FINITE, points=np.array(rows))
