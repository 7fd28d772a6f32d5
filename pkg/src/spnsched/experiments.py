"""Monte Carlo studies: the policy-gap construction, the boundary-rate ratio
table, representative trajectories, and the centered-walk CLT check.

Determinism contract: every study output is a pure function of its effective
configuration (including the master seed). Per-unit seeds derive from
SeedSequence(master, spawn_key=(scenario, replication)), aggregation stacks
per-unit arrays in a fixed order and reduces with numpy's pairwise summation,
and CSV floats carry 17 significant digits, so reruns are byte-identical.

Both policies inside one (scenario, replication) cell receive the same
simulate() seed; the arrival stream is spawned independently of the policy
stream, so paired runs see identical arrivals (common random numbers, the
natural pairing for ratio statistics).

``jobs`` > 1 distributes replications over a process pool; results are
collected by index, so parallel and serial runs produce the same bytes.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from spnsched import ioutil
from spnsched.arrivals import (NoisyDeterministic, build_binomial_spec,
                               build_thm2_instance, build_thm5_instance)
from spnsched.bounds import lower_bound_asymptotic, maxweight_lower_bound, thm5_window
from spnsched.dynamics import simulate, validate_rates
from spnsched.errors import ConfigurationError
from spnsched.policies import PolicySpec
from spnsched.scheduling import (CapacityRegion, SchedulingSet, boundary_sample,
                                 sample_integer_set)

__all__ = [
    "RunStats",
    "StudyResult",
    "run_gap_study",
    "run_table1_study",
    "run_trajectory_study",
    "run_clt_check",
    "wilson_interval",
]

DEFAULT_POLICIES = (PolicySpec(variant="maxweight"), PolicySpec(variant="lyapopt"))

#: Degenerate-ratio threshold: denominators below this drop the scenario.
RATIO_EPSILON = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class RunStats:
    """Per-slot aggregate curves for one policy within one scenario label."""

    policy: str
    scenario: str
    t: np.ndarray
    mean_total: np.ndarray
    se_total: np.ndarray
    mean_sumsq: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class StudyResult:
    """Everything a study produced: curves, extra curve rows (bound overlays,
    reference coefficients) and the summary payload."""

    study: str
    config: dict
    digest: str
    stats: tuple[RunStats, ...]
    extra_rows: tuple[tuple, ...]
    summary: dict

    def stats_rows(self):
        for rs in self.stats:
            for i in range(rs.t.shape[0]):
                yield (int(rs.t[i]), rs.policy, float(rs.mean_total[i]),
                       float(rs.se_total[i]), float(rs.mean_sumsq[i]))
        yield from self.extra_rows

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ioutil.write_stats_csv(out / "stats.csv", self.digest, self.stats_rows())
        payload = dict(self.summary)
        payload["config"] = self.config
        payload["config_digest"] = self.digest
        payload["version"] = ioutil.version_string()
        ioutil.write_json(out / "summary.json", payload)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score confidence interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(center - half, 0.0), min(center + half, 1.0))


def _child_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def _sim_task(args):
    n, T, arrival_spec, sset, policy, seed = args
    trace = simulate(n, T, arrival_spec, sset, policy, seed,
                     validate_capacity=False)
    return trace.totals, trace.sum_squares, trace.tie_count


def _map_tasks(tasks, jobs: int | None):
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [_sim_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sim_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _aggregate(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error across axis 0 (SE = 0 for a single row)."""
    mean = stack.mean(axis=0)
    if stack.shape[0] < 2:
        return mean, np.zeros_like(mean)
    se = stack.std(axis=0, ddof=1) / math.sqrt(stack.shape[0])
    return mean, se


def run_gap_study(B: float, C: float, T: int, replications: int, seed: int,
                  *, out_dir: str | Path | None = None,
                  jobs: int | None = 1) -> StudyResult:
    """Both policies on the two-queue segment instance, plus the MaxWeight
    lower-bound curve.

    C = 0 runs the deterministic construction (one replication suffices and is
    forced); C > 0 keeps the deterministic mean and superimposes independent
    +/-C coin noise, clipped at 0.
    """
    if replications < 1 or T < 1:
        raise ConfigurationError("need replications >= 1 and T >= 1")
    base_spec, sset = build_thm5_instance(B)
    if C > 0:
        arrival_spec = NoisyDeterministic(base=base_spec.base, amplitude=C,
                                          slot0=base_spec.slot0)
    elif C == 0:
        arrival_spec = base_spec
    else:
        raise ConfigurationError("C must be nonnegative")
    reps = 1 if C == 0 else replications
    validate_rates(arrival_spec, sset)

    policies = DEFAULT_POLICIES
    config = {
        "study": "gap", "B": B, "C": C, "T": T,
        "replications": reps, "master_seed": int(seed),
        "policies": [p.to_json() for p in policies],
        "arrivals": arrival_spec.to_json(), "set": sset.to_json(),
    }
    digest = ioutil.config_digest(config)

    rep_seeds = [_child_seed(seed, 0, r) for r in range(reps)]
    tasks = [(2, T, arrival_spec, sset, pol, s)
             for pol in policies for s in rep_seeds]
    results = _map_tasks(tasks, jobs)

    t_axis = np.arange(T + 1)
    stats = []
    tie_counters = {}
    final_totals = {}
    for pi, pol in enumerate(policies):
        chunk = results[pi * reps:(pi + 1) * reps]
        totals = np.stack([c[0] for c in chunk])
        sumsq = np.stack([c[1] for c in chunk])
        mean_total, se_total = _aggregate(totals)
        mean_sumsq = sumsq.mean(axis=0)
        stats.append(RunStats(policy=pol.variant, scenario="thm5", t=t_axis,
                              mean_total=mean_total, se_total=se_total,
                              mean_sumsq=mean_sumsq))
        tie_counters[pol.variant] = int(sum(c[2] for c in chunk))
        final_totals[pol.variant] = float(mean_total[-1])

    window = thm5_window(B, C)
    extra = tuple(
        (t, "thm5_bound", maxweight_lower_bound(B, C, t).value, 0.0, math.nan)
        for t in range(1, T + 1)
    )
    bound_at_T = maxweight_lower_bound(B, C, T)
    summary = {
        "study": "gap",
        "window": [window[0], window[1]],
        "bound_at_T": bound_at_T.to_json(),
        "tie_counters": tie_counters,
        "final_mean_totals": final_totals,
        "replications_requested": replications,
        "replications_effective": reps,
        "instance": {"b": math.sqrt(2.0) * B, "epsilon": 0.0,
                     "base_rates": arrival_spec.mean(1).tolist()},
    }
    result = StudyResult(study="gap", config=config, digest=digest,
                         stats=tuple(stats), extra_rows=extra, summary=summary)
    if out_dir is not None:
        result.write(out_dir)
    return result


def run_table1_study(n: int, scenario_count: int, T: int, replications: int,
                     seed: int, *, out_dir: str | Path | None = None,
                     jobs: int | None = 1) -> StudyResult:
    """Boundary-rate scenario sweep: the fraction of scenarios where the
    quadratic-lookahead policy beats MaxWeight on the final mean total.

    Each scenario samples 10n distinct integer schedules (entries 1..10), a
    boundary rate vector, and variance-1 binomial arrivals; the ratio compares
    replication-averaged totals at T. Scenarios whose MaxWeight denominator
    falls below 1e-9 are dropped and counted.
    """
    if n < 2:
        raise ConfigurationError("the ratio table needs n >= 2")
    if scenario_count < 1 or replications < 1 or T < 1:
        raise ConfigurationError("need scenario_count, replications, T all >= 1")
    policies = DEFAULT_POLICIES
    config = {
        "study": "table1", "n": n, "scenario_count": scenario_count,
        "T": T, "replications": replications, "master_seed": int(seed),
        "policies": [p.to_json() for p in policies],
    }
    digest = ioutil.config_digest(config)

    scen_curves = {p.variant: {"total": [], "sumsq": []} for p in policies}
    ratios = []
    dropped = 0
    tie_counters = {p.variant: 0 for p in policies}
    scenario_records = []
    for s in range(scenario_count):
        scen_rng = np.random.default_rng(
            np.random.SeedSequence(int(seed), spawn_key=(s,)))
        sset = sample_integer_set(n, scen_rng)
        lam = boundary_sample(CapacityRegion(sset), scen_rng)
        arrival_spec = build_binomial_spec(lam, 1.0)
        validate_rates(arrival_spec, sset)

        rep_seeds = [_child_seed(seed, s, r) for r in range(replications)]
        tasks = [(n, T, arrival_spec, sset, pol, rs)
                 for pol in policies for rs in rep_seeds]
        results = _map_tasks(tasks, jobs)

        finals = {}
        for pi, pol in enumerate(policies):
            chunk = results[pi * replications:(pi + 1) * replications]
            totals = np.stack([c[0] for c in chunk])
            sumsq = np.stack([c[1] for c in chunk])
            scen_curves[pol.variant]["total"].append(totals.mean(axis=0))
            scen_curves[pol.variant]["sumsq"].append(sumsq.mean(axis=0))
            tie_counters[pol.variant] += int(sum(c[2] for c in chunk))
            finals[pol.variant] = float(totals.mean(axis=0)[T])
        denom = finals["maxweight"]
        record = {"scenario": s, "lambda": lam.tolist(),
                  "final_totals": finals}
        if denom < RATIO_EPSILON:
            dropped += 1
            record["ratio"] = None
        else:
            ratio = finals["lyapopt"] / denom
            ratios.append(ratio)
            record["ratio"] = ratio
        scenario_records.append(record)

    t_axis = np.arange(T + 1)
    stats = []
    for pol in policies:
        totals = np.stack(scen_curves[pol.variant]["total"])
        sumsq = np.stack(scen_curves[pol.variant]["sumsq"])
        mean_total, se_total = _aggregate(totals)
        stats.append(RunStats(policy=pol.variant, scenario="aggregate",
                              t=t_axis, mean_total=mean_total,
                              se_total=se_total, mean_sumsq=sumsq.mean(axis=0)))

    kept = len(ratios)
    proportions = {}
    for label, cutoff in (("le_1", 1.0), ("le_0p9", 0.9), ("le_0p5", 0.5)):
        hits = sum(1 for r in ratios if r <= cutoff)
        lo, hi = wilson_interval(hits, kept)
        proportions[label] = {"cutoff": cutoff, "count": hits, "kept": kept,
                              "fraction": hits / kept if kept else 0.0,
                              "wilson_ci": [lo, hi]}
    summary = {
        "study": "table1",
        "proportions": proportions,
        "dropped_scenarios": dropped,
        "tie_counters": tie_counters,
        "scenarios": scenario_records,
    }
    result = StudyResult(study="table1", config=config, digest=digest,
                         stats=tuple(stats), extra_rows=(), summary=summary)
    if out_dir is not None:
        result.write(out_dir)
    return result


def run_trajectory_study(n: int, T: int, replications: int, seed: int, *,
                         scenario: dict | None = None,
                         out_dir: str | Path | None = None,
                         jobs: int | None = 1) -> StudyResult:
    """Mean total and mean sum-of-squares trajectories for both policies on
    one boundary-rate scenario (sampled from the seed unless supplied).

    A sqrt-growth coefficient is fitted to the second half of each mean-total
    curve and reported, not asserted.
    """
    if n < 1 or T < 1 or replications < 1:
        raise ConfigurationError("need n, T, replications all >= 1")
    scen_rng = np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=(0,)))
    if scenario is None:
        sset = sample_integer_set(n, scen_rng)
        lam = boundary_sample(CapacityRegion(sset), scen_rng)
    else:
        sset = SchedulingSet.from_json(scenario["set"])
        lam = np.asarray(scenario["lambda"], dtype=float)
        if sset.n != n or lam.shape != (n,):
            raise ConfigurationError("scenario dimensions disagree with n")
    arrival_spec = build_binomial_spec(lam, 1.0)
    validate_rates(arrival_spec, sset)

    policies = DEFAULT_POLICIES
    config = {
        "study": "trajectories", "n": n, "T": T, "replications": replications,
        "master_seed": int(seed), "policies": [p.to_json() for p in policies],
        "arrivals": arrival_spec.to_json(), "set": sset.to_json(),
    }
    digest = ioutil.config_digest(config)

    rep_seeds = [_child_seed(seed, 0, r) for r in range(replications)]
    tasks = [(n, T, arrival_spec, sset, pol, rs)
             for pol in policies for rs in rep_seeds]
    results = _map_tasks(tasks, jobs)

    t_axis = np.arange(T + 1)
    stats = []
    tie_counters = {}
    growth = {}
    final_sumsq = {}
    for pi, pol in enumerate(policies):
        chunk = results[pi * replications:(pi + 1) * replications]
        totals = np.stack([c[0] for c in chunk])
        sumsq = np.stack([c[1] for c in chunk])
        mean_total, se_total = _aggregate(totals)
        mean_sumsq = sumsq.mean(axis=0)
        stats.append(RunStats(policy=pol.variant, scenario="representative",
                              t=t_axis, mean_total=mean_total,
                              se_total=se_total, mean_sumsq=mean_sumsq))
        tie_counters[pol.variant] = int(sum(c[2] for c in chunk))
        tail = t_axis >= max(T // 2, 1)
        roots = np.sqrt(t_axis[tail].astype(float))
        coeff = float((mean_total[tail] @ roots) / (roots @ roots))
        rms = float(np.sqrt(np.mean((mean_total[tail] - coeff * roots) ** 2)))
        growth[pol.variant] = {"coefficient": coeff, "rms_residual": rms}
        final_sumsq[pol.variant] = float(mean_sumsq[-1])

    summary = {
        "study": "trajectories",
        "lambda": lam.tolist(),
        "growth_fit": growth,
        "final_mean_sumsq": final_sumsq,
        "tie_counters": tie_counters,
    }
    result = StudyResult(study="trajectories", config=config, digest=digest,
                         stats=tuple(stats), extra_rows=(), summary=summary)
    if out_dir is not None:
        result.write(out_dir)
    return result


def run_clt_check(n: int, B: float, C: float, T_list, replications: int,
                  seed: int, *, out_dir: str | Path | None = None) -> StudyResult:
    """Normalized overshoot E[max{S(T-1),0}]/sqrt(T-1) of the independent-coin
    hard instance, against its limit coefficient sqrt(n) C / sqrt(2 pi).

    S(T-1) depends only on the per-queue arrival counts over T-1 slots, which
    are binomial; the counts are drawn directly (incrementally across the
    sorted horizons), so no queue simulation is involved.
    """
    T_values = sorted(set(int(t) for t in T_list))
    if not T_values or T_values[0] < 2:
        raise ConfigurationError("every horizon must be at least 2")
    if replications < 2:
        raise ConfigurationError("need at least 2 replications for an SE")
    arrival_spec, sset = build_thm2_instance(n, B, C)
    config = {
        "study": "clt-check", "n": n, "B": B, "C": C, "T_list": T_values,
        "replications": replications, "master_seed": int(seed),
        "arrivals": arrival_spec.to_json(), "set": sset.to_json(),
    }
    digest = ioutil.config_digest(config)
    reference = lower_bound_asymptotic(n, C, "independent")
    M = math.sqrt(n) * B
    lam = np.full(n, B / math.sqrt(n))

    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    rows = []
    estimates = {}
    counts = np.zeros((replications, n))
    prev_steps = 0
    deterministic = C == 0.0
    K = None if deterministic else float(arrival_spec.K)
    for T in T_values:
        steps = T - 1
        if not deterministic and steps > prev_steps:
            counts += rng.binomial(steps - prev_steps, 1.0 / K,
                                   size=(replications, n))
        prev_steps = steps
        if deterministic:
            overshoot = np.zeros(replications)
        else:
            S = (K * counts) @ lam - steps * M
            overshoot = np.maximum(S, 0.0)
        scale = math.sqrt(steps)
        est = float(overshoot.mean() / scale)
        se = float(overshoot.std(ddof=1) / math.sqrt(replications) / scale)
        rows.append((T, "overshoot_mc", est, se, math.nan))
        estimates[str(T)] = {"normalized_mean": est, "se": se,
                             "ratio_to_reference": est / reference if reference else 0.0}
    summary = {
        "study": "clt-check",
        "reference_coefficient": reference,
        "estimates": estimates,
    }
    result = StudyResult(study="clt-check", config=config, digest=digest,
                         stats=(), extra_rows=tuple(rows), summary=summary)
    if out_dir is not None:
        result.write(out_dir)
    return result
