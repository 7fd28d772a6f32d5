"""spnsched: discrete-time single-hop stochastic processing network simulator
with exact finite-time queue-length bound calculators.

The package simulates the recursion Q(t+1) = max{Q(t) - D(t), 0} + A(t) under
pluggable scheduling policies (MaxWeight, the quadratic-lookahead LyapOpt, and
baselines), evaluates the matching closed-form lower/upper bounds, and ships a
deterministic Monte Carlo harness for the comparison studies.
"""

__version__ = "0.1.0"

from spnsched.arrivals import (BinomialPerQueue, DependentBinary, Deterministic,
                               IndependentBinary, NoisyDeterministic,
                               build_binomial_spec, build_thm1_instance,
                               build_thm2_instance, build_thm5_instance)
from spnsched.bounds import (BoundValue, binary_overshoot_bruteforce,
                             binary_overshoot_closed, lindley_bound_series,
                             lindley_trace_bound, lower_bound_asymptotic,
                             lower_bound_general, lower_bound_simple,
                             maxweight_lower_bound, upper_bound_lyapopt,
                             upper_bound_maxweight)
from spnsched.dynamics import SimTrace, TraceRecord, metrics, simulate, step
from spnsched.errors import (AssumptionViolationError, ConfigurationError,
                             NumericError, SpnschedError)
from spnsched.policies import (DriftTerms, PolicySpec, drift_terms,
                               lyapopt_select, maxweight_select)
from spnsched.scheduling import (CapacityRegion, SchedulingSet, boundary_sample,
                                 capacity_param, contains, max_total_departure)

__all__ = [
    "__version__",
    "AssumptionViolationError",
    "BinomialPerQueue",
    "BoundValue",
    "CapacityRegion",
    "ConfigurationError",
    "DependentBinary",
    "Deterministic",
    "DriftTerms",
    "IndependentBinary",
    "NoisyDeterministic",
    "NumericError",
    "PolicySpec",
    "SchedulingSet",
    "SimTrace",
    "SpnschedError",
    "TraceRecord",
    "binary_overshoot_bruteforce",
    "binary_overshoot_closed",
    "boundary_sample",
    "build_binomial_spec",
    "build_thm1_instance",
    "build_thm2_instance",
    "build_thm5_instance",
    "capacity_param",
    "contains",
    "drift_terms",
    "lindley_bound_series",
    "lindley_trace_bound",
    "lower_bound_asymptotic",
    "lower_bound_general",
    "lower_bound_simple",
    "lyapopt_select",
    "max_total_departure",
    "maxweight_lower_bound",
    "maxweight_select",
    "metrics",
    "simulate",
    "step",
    "upper_bound_lyapopt",
    "upper_bound_maxweight",
]
