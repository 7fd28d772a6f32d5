"""Scheduling policies and drift diagnostics.

Two contenders plus two baselines:

* MaxWeight: argmax <q, d> over the elements/vertices (a linear objective, so
  restricting a polytope to its vertices loses nothing).
* LyapOpt: argmin g(d) = sum_i max(q_i - d_i, 0)^2, the one-step lookahead of
  the quadratic Lyapunov function. Finite sets are enumerated exactly;
  polytopes are solved by away-step Frank-Wolfe with an exact line search.
* RandomVertex / FixedSchedule: baselines for pathwise-bound tests.

Exact ties are broken toward the lowest index and counted by the policy
engines, except at q = 0 where every schedule acts identically on the empty
system and no tie is recorded.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from spnsched.errors import ConfigurationError, NumericError
from spnsched.scheduling import FINITE, POLYTOPE, SchedulingSet

__all__ = [
    "PolicySpec",
    "DriftTerms",
    "maxweight_index",
    "maxweight_select",
    "lyapopt_index",
    "lyapopt_select",
    "drift_terms",
    "drift_series",
    "PolicyEngine",
    "make_engine",
    "POLICY_VARIANTS",
]

POLICY_VARIANTS = ("maxweight", "lyapopt", "random_vertex", "fixed_schedule")


@dataclasses.dataclass(frozen=True)
class PolicySpec:
    """Which policy to run, plus solver options for LyapOpt over polytopes."""

    variant: str
    index: int | None = None
    max_iterations: int = 10000
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.variant not in POLICY_VARIANTS:
            raise ConfigurationError(f"unknown policy variant {self.variant!r}")
        if self.variant == "fixed_schedule" and self.index is None:
            raise ConfigurationError("fixed_schedule needs an element index")
        if not (self.tolerance > 0):
            raise ConfigurationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be at least 1")

    def to_json(self) -> dict:
        obj: dict = {"variant": self.variant}
        if self.variant == "fixed_schedule":
            obj["index"] = self.index
        if self.variant == "lyapopt":
            obj["max_iterations"] = self.max_iterations
            obj["tolerance"] = self.tolerance
        return obj

    @staticmethod
    def from_json(obj: dict) -> "PolicySpec":
        return PolicySpec(variant=obj.get("variant", ""),
                          index=obj.get("index"),
                          max_iterations=obj.get("max_iterations", 10000),
                          tolerance=obj.get("tolerance", 1e-10))


@dataclasses.dataclass(frozen=True)
class DriftTerms:
    """The two pieces of the one-step drift f(q, d) = first + second with
    first = 2 sum q_i (lam_i - d_i) and second = sum (d_i^2 - lam_i^2)."""

    first_order: float
    second_order: float

    @property
    def f_value(self) -> float:
        return self.first_order + self.second_order


def maxweight_index(q: np.ndarray, dset: SchedulingSet) -> tuple[int, bool]:
    """Lowest argmax index of <q, d> over the rows, plus an exact-tie flag.

    At exactly-zero q the first row is returned untied: all schedules are
    equivalent on an empty system.
    """
    if not q.any():
        return 0, False
    scores = dset.points @ q
    i = int(np.argmax(scores))
    tied = bool(np.count_nonzero(scores == scores[i]) > 1)
    return i, tied


def maxweight_select(q, dset: SchedulingSet) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (dset.n,):
        raise ConfigurationError(f"queue vector shape {q.shape} != ({dset.n},)")
    i, _ = maxweight_index(q, dset)
    return dset.points[i].copy()


def _residual_objectives(q: np.ndarray, points: np.ndarray) -> np.ndarray:
    r = np.maximum(q - points, 0.0)
    return np.einsum("ij,ij->i", r, r)


def lyapopt_index(q: np.ndarray, dset: SchedulingSet) -> tuple[int, bool]:
    """Lowest argmin index of the residual objective over a finite set, plus
    an exact-tie flag (untied at q = 0, same convention as MaxWeight)."""
    if not q.any():
        return 0, False
    g = _residual_objectives(q, dset.points)
    i = int(np.argmin(g))
    tied = bool(np.count_nonzero(g == g[i]) > 1)
    return i, tied


def _linesearch(a: np.ndarray, b: np.ndarray, eta_max: float) -> float:
    """Exact minimizer of h(eta) = sum_i max(a_i - eta b_i, 0)^2 on [0, eta_max].

    h is convex piecewise quadratic with breakpoints at a_i/b_i, so h' is
    piecewise linear and nondecreasing; walk the pieces and solve the one with
    the sign change in closed form. Working on h' instead of comparing h values
    avoids the float resolution floor of h near the optimum.
    """
    bps = [0.0]
    for ai, bi in zip(a, b):
        if bi != 0.0:
            e = ai / bi
            if 0.0 < e < eta_max:
                bps.append(e)
    bps.append(eta_max)
    bps = sorted(set(bps))
    for lo, hi in zip(bps[:-1], bps[1:]):
        mid = 0.5 * (lo + hi)
        act = (a - mid * b) > 0.0
        bb = float(b[act] @ b[act])
        ab = float(a[act] @ b[act])
        if bb > 0.0:
            eta = ab / bb  # root of h' on this piece
            if eta <= lo:
                return lo
            if eta < hi:
                return eta
        elif ab <= 0.0:
            # h' = -2*ab >= 0 on the whole piece: already past the minimum
            return lo
    return eta_max


def _afw_minimize(q: np.ndarray, V: np.ndarray, tolerance: float,
                  max_iterations: int) -> tuple[np.ndarray, int, float]:
    """Minimize the residual objective over conv(V) by away-step Frank-Wolfe.

    Starts at the best vertex, so by monotone descent the result always
    satisfies g(x) <= min_vertex g + tolerance. Away steps give the linear
    convergence plain Frank-Wolfe lacks when the optimum sits on a face.
    Returns (point, iterations, final gap).
    """
    m = V.shape[0]
    start = int(np.argmin(_residual_objectives(q, V)))
    alpha = np.zeros(m)
    alpha[start] = 1.0
    x = V[start].astype(float).copy()
    gap = np.inf
    for it in range(max_iterations):
        residual = np.maximum(q - x, 0.0)
        grad = -2.0 * residual
        scores = V @ grad
        s = int(np.argmin(scores))
        gap = float(grad @ x - scores[s])
        if gap <= tolerance:
            return x, it, gap
        active = np.flatnonzero(alpha > 0.0)
        v = int(active[np.argmax(scores[active])])
        away_gap = float(scores[v] - grad @ x)
        a_vec = q - x
        if gap >= away_gap or alpha[v] >= 1.0:
            d = V[s] - x
            eta = _linesearch(a_vec, d, 1.0)
            if eta <= 0.0:
                break
            if eta >= 1.0:
                alpha[:] = 0.0
                alpha[s] = 1.0
            else:
                alpha *= 1.0 - eta
                alpha[s] += eta
            x = x + eta * d
        else:
            d = x - V[v]
            eta_cap = alpha[v] / (1.0 - alpha[v])
            eta = _linesearch(a_vec, d, eta_cap)
            if eta <= 0.0:
                break
            alpha *= 1.0 + eta
            alpha[v] -= eta
            if alpha[v] < 1e-15:
                alpha[v] = 0.0
            x = x + eta * d
    else:
        raise NumericError(
            f"schedule solver hit {max_iterations} iterations with gap {gap:.3e} "
            f"> tolerance {tolerance:.1e}", iterations=max_iterations, gap=gap)
    # line search refused to move: either at the optimum within float
    # resolution or genuinely stuck; accept only if the gap is small
    if gap <= tolerance:
        return x, it, gap
    raise NumericError(
        f"schedule solver stalled at iteration {it} with gap {gap:.3e}",
        iterations=it, gap=gap)


def lyapopt_select(q, dset: SchedulingSet, opts: PolicySpec | None = None) -> np.ndarray:
    """Minimize sum_i max(q_i - d_i, 0)^2 over the scheduling set.

    Finite sets: exact enumeration, lowest index on ties. Polytopes: away-step
    Frank-Wolfe to the configured gap tolerance; non-convergence raises
    NumericError carrying the iteration count and final gap.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (dset.n,):
        raise ConfigurationError(f"queue vector shape {q.shape} != ({dset.n},)")
    if dset.kind == FINITE:
        i, _ = lyapopt_index(q, dset)
        return dset.points[i].copy()
    if not q.any():
        return dset.points[0].copy()
    if opts is None:
        opts = PolicySpec(variant="lyapopt")
    x, _, _ = _afw_minimize(q, dset.points, opts.tolerance, opts.max_iterations)
    return x


def drift_terms(q, d, lam) -> DriftTerms:
    """Evaluate the drift decomposition at state q, schedule d, prior-slot
    mean lam."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if not (q.shape == d.shape == lam.shape):
        raise ConfigurationError(
            f"drift inputs disagree: {q.shape}, {d.shape}, {lam.shape}")
    first = float(2.0 * (q @ (lam - d)))
    second = float((d @ d) - (lam @ lam))
    return DriftTerms(first_order=first, second_order=second)


def drift_series(q_records: np.ndarray, d_records: np.ndarray,
                 mean_fn) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot (first_order, second_order) along a trace.

    ``mean_fn(t)`` supplies the arrival mean of slot t; slot t's drift uses the
    previous slot's mean, with slot 0 falling back to its own (the usual
    convention for time-invariant rates).
    """
    T = d_records.shape[0]
    first = np.empty(T)
    second = np.empty(T)
    for t in range(T):
        lam = mean_fn(t - 1) if t > 0 else mean_fn(0)
        dt = drift_terms(q_records[t], d_records[t], lam)
        first[t] = dt.first_order
        second[t] = dt.second_order
    return first, second


class PolicyEngine:
    """A policy bound to one scheduling set, with a visible tie counter.

    ``select(q, t, rng)`` returns the slot-t schedule. Built-in policies are
    Markov in q; the optional ``history`` argument exists for experimental
    policies that want the recorded past and is ignored here.
    """

    wants_history = False

    def __init__(self, spec: PolicySpec, dset: SchedulingSet):
        self.spec = spec
        self.dset = dset
        self.tie_count = 0

    def select(self, q: np.ndarray, t: int, rng: np.random.Generator,
               history=None) -> np.ndarray:
        raise NotImplementedError

    def reset(self) -> None:
        self.tie_count = 0


class _MaxWeightEngine(PolicyEngine):
    def select(self, q, t, rng, history=None):
        i, tied = maxweight_index(q, self.dset)
        if tied:
            self.tie_count += 1
        return self.dset.points[i]


class _LyapOptFiniteEngine(PolicyEngine):
    def select(self, q, t, rng, history=None):
        i, tied = lyapopt_index(q, self.dset)
        if tied:
            self.tie_count += 1
        return self.dset.points[i]


class _LyapOptPolytopeEngine(PolicyEngine):
    def select(self, q, t, rng, history=None):
        if not q.any():
            return self.dset.points[0]
        x, _, _ = _afw_minimize(q, self.dset.points, self.spec.tolerance,
                                self.spec.max_iterations)
        return x


class _RandomVertexEngine(PolicyEngine):
    def select(self, q, t, rng, history=None):
        return self.dset.points[int(rng.integers(self.dset.size))]


class _FixedScheduleEngine(PolicyEngine):
    def __init__(self, spec, dset):
        super().__init__(spec, dset)
        if not (0 <= spec.index < dset.size):
            raise ConfigurationError(
                f"fixed_schedule index {spec.index} out of range [0, {dset.size})")

    def select(self, q, t, rng, history=None):
        return self.dset.points[self.spec.index]


def make_engine(spec: PolicySpec, dset: SchedulingSet) -> PolicyEngine:
    if spec.variant == "maxweight":
        return _MaxWeightEngine(spec, dset)
    if spec.variant == "lyapopt":
        if dset.kind == POLYTOPE:
            return _LyapOptPolytopeEngine(spec, dset)
        return _LyapOptFiniteEngine(spec, dset)
    if spec.variant == "random_vertex":
        return _RandomVertexEngine(spec, dset)
    if spec.variant == "fixed_schedule":
        return _FixedScheduleEngine(spec, dset)
    raise ConfigurationError(f"unknown policy variant {spec.variant!r}")
