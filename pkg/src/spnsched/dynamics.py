"""Queue state and the one-slot recursion Q(t+1) = max{Q(t) - D(t), 0} + A(t).

A simulation starts from Q(0) = 0 and, each slot, lets the policy observe Q(t)
before the schedule D(t) is applied and the arrivals A(t) are added. The trace
records the pre-decision Q(t) together with the slot-t schedule and arrivals,
so the recursion can be re-checked locally between consecutive records; the
final record at t = T carries Q(T) with zero schedule/arrival columns.

Arrival and policy randomness come from two independent streams spawned from
the run seed, so two runs with the same seed but different (deterministic)
policies see identical arrival paths.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from spnsched import ioutil
from spnsched.errors import AssumptionViolationError, ConfigurationError
from spnsched.policies import PolicySpec, make_engine
from spnsched.scheduling import CapacityRegion, SchedulingSet, contains

__all__ = [
    "step",
    "TraceRecord",
    "SimTrace",
    "simulate",
    "metrics",
    "write_trace_csv",
    "simulate_config",
]


def step(q, d, a) -> np.ndarray:
    """One slot of the recursion: componentwise max{q - d, 0} + a."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    a = np.asarray(a, dtype=float)
    if not (q.shape == d.shape == a.shape):
        raise ConfigurationError(
            f"step inputs disagree: {q.shape}, {d.shape}, {a.shape}")
    if np.any(d < 0) or np.any(a < 0):
        raise ConfigurationError("schedules and arrivals must be nonnegative")
    return np.maximum(q - d, 0.0) + a


@dataclasses.dataclass(frozen=True)
class TraceRecord:
    t: int
    q: np.ndarray
    schedule: np.ndarray
    arrival: np.ndarray
    total: float
    sum_squares: float


@dataclasses.dataclass(frozen=True, eq=False)
class SimTrace:
    """Recorded run: column arrays per recorded slot plus run metadata.

    ``slots`` lists the recorded slot indices (all of 0..T for stride 1).
    ``records`` materializes TraceRecord objects on access; the array fields
    are the better interface for bulk math.
    """

    n: int
    T: int
    slots: np.ndarray
    q: np.ndarray
    d: np.ndarray
    a: np.ndarray
    totals: np.ndarray
    sum_squares: np.ndarray
    seed: int
    config_digest: str
    tie_count: int

    @property
    def records(self) -> list[TraceRecord]:
        return [
            TraceRecord(t=int(self.slots[r]), q=self.q[r], schedule=self.d[r],
                        arrival=self.a[r], total=float(self.totals[r]),
                        sum_squares=float(self.sum_squares[r]))
            for r in range(self.slots.shape[0])
        ]


def simulate_config(n: int, T: int, arrival_spec, sched_set: SchedulingSet,
                    policy: PolicySpec, seed: int, stride: int = 1) -> dict:
    """The canonical configuration dict a run is a pure function of."""
    return {
        "n": n,
        "T": T,
        "arrivals": arrival_spec.to_json(),
        "set": sched_set.to_json(),
        "policy": policy.to_json(),
        "seed": int(seed),
        "stride": stride,
    }


def validate_rates(arrival_spec, sched_set: SchedulingSet, tol: float = 1e-9) -> None:
    """Check every distinct arrival mean against the capacity region."""
    region = CapacityRegion(sched_set)
    for lam in arrival_spec.distinct_means():
        if not contains(region, lam, tol=tol):
            raise AssumptionViolationError(
                f"arrival mean {np.round(lam, 6).tolist()} lies outside the "
                f"capacity region of the scheduling set")


def simulate(n: int, T: int, arrival_spec, sched_set: SchedulingSet,
             policy: PolicySpec, seed: int, *, validate_capacity: bool = True,
             stride: int = 1) -> SimTrace:
    """Run the recursion for T slots and return the recorded trace.

    The trace is a deterministic function of (seed, configuration). With
    ``stride`` > 1 only every stride-th slot is recorded (plus slot T, always),
    which keeps million-slot horizons in memory.
    """
    if T < 1:
        raise ConfigurationError("T must be at least 1")
    if stride < 1:
        raise ConfigurationError("stride must be at least 1")
    if arrival_spec.n != n or sched_set.n != n:
        raise ConfigurationError(
            f"dimension mismatch: n={n}, arrivals n={arrival_spec.n}, "
            f"set n={sched_set.n}")
    if validate_capacity:
        validate_rates(arrival_spec, sched_set)

    digest = ioutil.config_digest(
        simulate_config(n, T, arrival_spec, sched_set, policy, seed, stride))
    root_ss = np.random.SeedSequence(int(seed))
    arrival_ss, policy_ss = root_ss.spawn(2)
    A = arrival_spec.sample_matrix(T, np.random.default_rng(arrival_ss))
    policy_rng = np.random.default_rng(policy_ss)
    engine = make_engine(policy, sched_set)

    slots = np.arange(0, T + 1, stride)
    if slots[-1] != T:
        slots = np.append(slots, T)
    n_rec = slots.shape[0]
    q_rec = np.zeros((n_rec, n))
    d_rec = np.zeros((n_rec, n))
    a_rec = np.zeros((n_rec, n))

    q = np.zeros(n)
    select = engine.select
    maximum = np.maximum
    r = 0
    for t in range(T):
        d = select(q, t, policy_rng)
        if t == slots[r]:
            q_rec[r] = q
            d_rec[r] = d
            a_rec[r] = A[t]
            r += 1
        q = maximum(q - d, 0.0) + A[t]
    q_rec[n_rec - 1] = q  # slot T: state only, no schedule/arrival applied

    totals = q_rec.sum(axis=1)
    sumsq = np.einsum("ij,ij->i", q_rec, q_rec)
    return SimTrace(n=n, T=T, slots=slots, q=q_rec, d=d_rec, a=a_rec,
                    totals=totals, sum_squares=sumsq, seed=int(seed),
                    config_digest=digest, tie_count=engine.tie_count)


def metrics(trace: SimTrace) -> tuple[np.ndarray, np.ndarray]:
    """Per-recorded-slot (total, sum of squares) series."""
    if trace.slots.shape[0] == 0:
        raise ConfigurationError("empty trace")
    return trace.totals, trace.sum_squares


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    """Write the trace in the fixed column layout
    t,q_1..q_n,d_1..d_n,a_1..a_n,total,sum_squares (17 significant digits)."""
    n = trace.n
    header = ",".join(
        ["t"]
        + [f"q_{i + 1}" for i in range(n)]
        + [f"d_{i + 1}" for i in range(n)]
        + [f"a_{i + 1}" for i in range(n)]
        + ["total", "sum_squares"]
    )
    fmt = ioutil.fmt
    with Path(path).open("w", newline="\n") as fh:
        fh.write(header + "\n")
        for r in range(trace.slots.shape[0]):
            cells = [str(int(trace.slots[r]))]
            cells += [fmt(v) for v in trace.q[r]]
            cells += [fmt(v) for v in trace.d[r]]
            cells += [fmt(v) for v in trace.a[r]]
            cells.append(fmt(trace.totals[r]))
            cells.append(fmt(trace.sum_squares[r]))
            fh.write(",".join(cells) + "\n")
