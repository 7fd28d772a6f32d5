"""Command-line entry point.

Subcommands: ``simulate`` (one run, trace CSV), ``bound`` (closed-form values
as JSON), ``experiment`` (the Monte Carlo studies). The environment variable
SPNSCHED_SEED, when set, overrides any seed given on the command line or in a
config file. Exit codes: 0 ok, 2 bad configuration, 3 modelling-assumption
violation, 4 numeric/runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from spnsched import __version__, arrivals, bounds, experiments, ioutil
from spnsched.dynamics import simulate, simulate_config, write_trace_csv
from spnsched.errors import ConfigurationError, SpnschedError
from spnsched.policies import PolicySpec
from spnsched.scheduling import SchedulingSet

log = logging.getLogger("spnsched.cli")

ORACLE_K_GRID = (1.5, 2.0, 2.5, 3.0, 4.0, 6.0)
ORACLE_T_MAX = 40
ORACLE_TOLERANCE = 1e-12


def _effective_seed(seed: int) -> int:
    env = os.environ.get("SPNSCHED_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigurationError(f"SPNSCHED_SEED must be an integer, got {env!r}") from exc
    return int(seed)


def _parse_policy(text: str) -> PolicySpec:
    name = text.replace("-", "_")
    if name.startswith("fixed:"):
        try:
            idx = int(name.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigurationError(f"bad fixed-schedule index in {text!r}") from exc
        return PolicySpec(variant="fixed_schedule", index=idx)
    return PolicySpec(variant=name)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc


def _resolve_policy(args, cfg: dict | None) -> PolicySpec:
    """Flags override config-file values; the fallback is LyapOpt."""
    if args.policy is not None:
        policy = _parse_policy(args.policy)
    elif cfg is not None and "policy" in cfg:
        return PolicySpec.from_json(cfg["policy"])
    else:
        policy = PolicySpec(variant="lyapopt")
    if policy.variant == "lyapopt":
        policy = PolicySpec(variant="lyapopt", max_iterations=args.max_iterations,
                            tolerance=args.tolerance)
    return policy


def cmd_simulate(args) -> int:
    if args.config and args.instance:
        raise ConfigurationError("--config and --instance are mutually exclusive")
    if args.config:
        cfg = _load_json(args.config)
        policy = _resolve_policy(args, cfg)
        try:
            sset = SchedulingSet.from_json(cfg["set"])
            arr = arrivals.arrival_from_json(cfg["arrivals"],
                                             base_dir=Path(args.config).parent)
        except KeyError as exc:
            raise ConfigurationError(f"config file missing key {exc}") from exc
        n = int(cfg.get("n", sset.n))
        T = args.T if args.T is not None else int(cfg.get("T", 1000))
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    elif args.instance:
        policy = _resolve_policy(args, None)
        T = args.T if args.T is not None else 1000
        seed = args.seed if args.seed is not None else 0
        if args.instance == "thm5":
            if args.B is None:
                raise ConfigurationError("--instance thm5 requires --B")
            arr, sset = arrivals.build_thm5_instance(args.B)
        else:
            if args.B is None or args.n is None:
                raise ConfigurationError(f"--instance {args.instance} requires --n and --B")
            build = (arrivals.build_thm1_instance if args.instance == "thm1"
                     else arrivals.build_thm2_instance)
            arr, sset = build(args.n, args.B, args.C)
        n = sset.n
    else:
        raise ConfigurationError("simulate needs --config or --instance")

    seed = _effective_seed(seed)
    trace = simulate(n, T, arr, sset, policy, seed,
                     validate_capacity=args.validate_capacity, stride=args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    summary = {
        "config": simulate_config(n, T, arr, sset, policy, seed, args.stride),
        "config_digest": trace.config_digest,
        "version": ioutil.version_string(),
        "tie_count": trace.tie_count,
        "final_total": float(trace.totals[-1]),
        "final_sum_squares": float(trace.sum_squares[-1]),
    }
    ioutil.write_json(out / "summary.json", summary)
    log.info("trace written to %s", out / "trace.csv")
    return 0


def _bound_value(name: str, args) -> dict:
    def need(*fields):
        missing = [f for f in fields if getattr(args, f, None) is None]
        if missing:
            raise ConfigurationError(
                f"bound {name} needs --" + ", --".join(missing))

    if name == "overshoot":
        need("K", "t")
        return {"value": bounds.binary_overshoot_closed(args.K, args.t)}
    if name == "thm1":
        need("n", "B", "C", "T")
        return bounds.lower_bound_general(args.n, args.B, args.C, args.T).to_json()
    if name == "thm1-simple":
        need("n", "B", "C", "T")
        return bounds.lower_bound_simple(args.n, args.B, args.C, args.T).to_json()
    if name == "thm3":
        need("n", "C", "T", "ea")
        return {"value": bounds.upper_bound_lyapopt(args.n, args.C, args.T, args.ea)}
    if name == "thm4":
        need("n", "B", "C", "T", "ea")
        return {"value": bounds.upper_bound_maxweight(args.n, args.B, args.C,
                                                     args.T, args.ea)}
    if name == "thm5":
        need("B", "C", "T")
        return bounds.maxweight_lower_bound(args.B, args.C, args.T).to_json()
    if name == "asymptotic":
        need("n", "C", "kind")
        return {"value": bounds.lower_bound_asymptotic(args.n, args.C, args.kind)}
    raise ConfigurationError(f"unknown bound name {name!r}")


def cmd_bound(args) -> int:
    if args.all:
        out = {}
        for name in ("overshoot", "thm1", "thm1-simple", "thm3", "thm4",
                     "thm5", "asymptotic"):
            try:
                out[name] = _bound_value(name, args)
            except ConfigurationError:
                continue
        if not out:
            raise ConfigurationError("no bound is computable from the given parameters")
        print(json.dumps(out))
        return 0
    print(json.dumps(_bound_value(args.name, args)))
    return 0


def _verify_oracle() -> int:
    worst = 0.0
    failures = []
    for K in ORACLE_K_GRID:
        for t in range(1, ORACLE_T_MAX + 1):
            closed = bounds.binary_overshoot_closed(K, t)
            brute = bounds.binary_overshoot_bruteforce(K, t)
            rel = abs(closed - brute) / brute
            worst = max(worst, rel)
            if rel > ORACLE_TOLERANCE:
                failures.append({"K": K, "t": t, "rel_err": rel})
    report = {
        "cases": len(ORACLE_K_GRID) * ORACLE_T_MAX,
        "max_rel_err": worst,
        "tolerance": ORACLE_TOLERANCE,
        "failures": failures,
    }
    print(json.dumps(report))
    if failures:
        return 4
    return 0


def cmd_experiment(args) -> int:
    seed = _effective_seed(args.seed)
    study = args.study
    if study == "verify-oracle":
        return _verify_oracle()
    # desk-scale defaults; clt-check needs real Monte Carlo sample sizes
    reps = args.replications
    if reps is None:
        reps = 2000 if study == "clt-check" else 20
    if study == "gap":
        if args.B is None:
            raise ConfigurationError("experiment gap requires --B")
        experiments.run_gap_study(args.B, args.C, args.T, reps,
                                  seed, out_dir=args.out, jobs=args.jobs)
    elif study == "table1":
        experiments.run_table1_study(args.n, args.scenarios, args.T,
                                     reps, seed, out_dir=args.out, jobs=args.jobs)
    elif study == "trajectories":
        experiments.run_trajectory_study(args.n, args.T, reps, seed,
                                         out_dir=args.out, jobs=args.jobs)
    elif study == "clt-check":
        if args.B is None:
            raise ConfigurationError("experiment clt-check requires --B")
        experiments.run_clt_check(args.n, args.B, args.C, args.T_list,
                                  reps, seed, out_dir=args.out)
    else:
        raise ConfigurationError(f"unknown study {study!r}")
    log.info("outputs written to %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spnsched",
        description="Stochastic processing network simulator and bound calculator")
    parser.add_argument("--version", action="version",
                        version=f"spnsched {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one simulation, write trace.csv")
    sim.add_argument("--config", help="JSON config file (n, T, arrivals, set, policy, seed)")
    sim.add_argument("--instance", choices=["thm1", "thm2", "thm5"],
                     help="named hard-instance builder")
    sim.add_argument("--n", type=int, help="number of queues (thm1/thm2)")
    sim.add_argument("--B", type=float, help="capacity parameter")
    sim.add_argument("--C", type=float, default=0.0, help="variance parameter")
    sim.add_argument("--policy",
                     help="maxweight | lyapopt | random-vertex | fixed:IDX "
                          "(default: lyapopt, or the config file's policy)")
    sim.add_argument("--T", type=int, help="horizon (slots)")
    sim.add_argument("--seed", type=int, help="run seed (default 0)")
    sim.add_argument("--stride", type=int, default=1,
                     help="record every stride-th slot (plus the last)")
    sim.add_argument("--out", default="out", help="output directory")
    sim.add_argument("--validate-capacity", default=True,
                     action=argparse.BooleanOptionalAction,
                     help="check arrival means against the capacity region")
    sim.add_argument("--tolerance", type=float, default=1e-10,
                     help="polytope solver gap tolerance")
    sim.add_argument("--max-iterations", type=int, default=10000,
                     help="polytope solver iteration cap")
    sim.set_defaults(func=cmd_simulate)

    bnd = sub.add_parser("bound", help="print a closed-form bound as JSON")
    bnd.add_argument("name", nargs="?", default=None,
                     help="overshoot | thm1 | thm1-simple | thm3 | thm4 | thm5 | asymptotic")
    bnd.add_argument("--all", action="store_true",
                     help="print every bound computable from the given parameters")
    bnd.add_argument("--n", type=int)
    bnd.add_argument("--B", type=float)
    bnd.add_argument("--C", type=float)
    bnd.add_argument("--T", type=int)
    bnd.add_argument("--K", type=float)
    bnd.add_argument("--t", type=int)
    bnd.add_argument("--ea", type=float,
                     help="expected final-slot arrival total (thm3/thm4)")
    bnd.add_argument("--kind", choices=["dependent", "independent"])
    bnd.set_defaults(func=cmd_bound)

    exp = sub.add_parser("experiment", help="run a Monte Carlo study")
    exp.add_argument("study",
                     choices=["gap", "trajectories", "table1", "clt-check",
                              "verify-oracle"])
    exp.add_argument("--n", type=int, default=3, help="number of queues")
    exp.add_argument("--B", type=float, help="capacity parameter")
    exp.add_argument("--C", type=float, default=0.0, help="variance parameter")
    exp.add_argument("--T", type=int, default=500, help="horizon (slots)")
    exp.add_argument("--T-list", type=int, nargs="+", dest="T_list",
                     default=[100, 1000, 10000],
                     help="horizons for clt-check")
    exp.add_argument("--replications", "-r", type=int, default=None,
                     help="runs per configuration (default 20; 2000 for clt-check)")
    exp.add_argument("--scenarios", type=int, default=200,
                     help="scenario count for table1")
    exp.add_argument("--seed", type=int, default=0, help="master seed")
    exp.add_argument("--jobs", type=int, default=None,
                     help="worker processes (default: logical cores)")
    exp.add_argument("--out", default="out", help="output directory")
    exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if args.command == "bound" and not args.all and args.name is None:
        print("error: bound needs a name or --all", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SpnschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
