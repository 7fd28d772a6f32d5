"""Closed-form finite-time queue-length bounds and their independent oracles.

The centered binary walk S(t) = sum of t i.i.d. steps (K-1 w.p. 1/K, else -1)
has an exact overshoot expectation

    E[max{S(t), 0}] = t (K-1)^(m0+1) C(t-1, m0) / K^t,
    k0 = floor(t/K) + 1,  m0 = t - k0,

evaluated here in log-gamma space (`binary_overshoot_closed`), with an exact
rational brute force (`binary_overshoot_bruteforce`) as the oracle. On top of
it sit the piecewise general lower bound, its simplified large-T form, the
asymptotic coefficients, both policy upper bounds, the MaxWeight-specific
lower bound, and the pathwise suffix-sum (Lindley) bound evaluated on traces.

Values outside a clause's guarantee window are still computed, with
``valid=False``; a reported number can then be vacuous (even negative near the
regime switch when B^2 < n C^2) but is never silently clamped.
"""

from __future__ import annotations

import dataclasses
import math
from fractions import Fraction

import numpy as np

from spnsched.errors import ConfigurationError

__all__ = [
    "BoundValue",
    "OvershootParams",
    "binary_overshoot_closed",
    "binary_overshoot_bruteforce",
    "overshoot_partial_sum",
    "overshoot_partial_sum_closed",
    "lower_bound_general",
    "lower_bound_simple",
    "lower_bound_asymptotic",
    "clause1_sandwich",
    "upper_bound_lyapopt",
    "upper_bound_maxweight",
    "maxweight_lower_bound",
    "lindley_trace_bound",
    "lindley_bound_series",
    "crossing_times",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)
TWO_SQRT_2EPI = 2.0 * math.sqrt(2.0 * math.e * math.pi)


@dataclasses.dataclass(frozen=True)
class BoundValue:
    """A computed bound, tagged with the clause that produced it.

    ``valid`` records whether that clause's preconditions hold at the given T;
    ``window`` is the (low, high) T-range of the guarantee when one exists
    (None entries mean unbounded on that side).
    """

    value: float
    regime: str
    valid: bool
    window: tuple[float | None, float | None] | None = None

    def to_json(self) -> dict:
        obj: dict = {"value": self.value, "regime": self.regime, "valid": self.valid}
        if self.window is not None:
            obj["window"] = [self.window[0], self.window[1]]
        return obj


@dataclasses.dataclass(frozen=True)
class OvershootParams:
    """Index pair (k0, m0) of the overshoot closed form."""

    K: float
    t: int

    def __post_init__(self):
        if not self.K > 1:
            raise ConfigurationError(f"K must exceed 1, got {self.K}")
        if self.t < 1:
            raise ConfigurationError(f"t must be at least 1, got {self.t}")

    @property
    def k0(self) -> int:
        return int(math.floor(self.t / self.K)) + 1

    @property
    def m0(self) -> int:
        return self.t - self.k0


def binary_overshoot_closed(K: float, t: int) -> float:
    """E[max{S(t), 0}] via the exact closed form, log-gamma evaluated.

    Direct evaluation of K^t and the binomial coefficient overflows near
    t ~ 1000; a single final exponentiation keeps the result exact to
    ~1e-14 relative through t = 1e4.
    """
    p = OvershootParams(K=K, t=int(t))
    m0 = p.m0
    log_value = (
        math.log(p.t)
        + (m0 + 1) * math.log(K - 1.0)
        + math.lgamma(p.t)
        - math.lgamma(m0 + 1)
        - math.lgamma(p.t - m0)
        - p.t * math.log(K)
    )
    return math.exp(log_value)


def binary_overshoot_bruteforce(K: float, t: int) -> float:
    """Oracle: sum_k max(kK - t, 0) C(t,k) (1/K)^k ((K-1)/K)^(t-k) in exact
    rational arithmetic (a float K converts to an exact binary rational).

    Refuses t > 64: the enumeration is meant for oracle duty, not production.
    """
    if t < 1:
        raise ConfigurationError(f"t must be at least 1, got {t}")
    if t > 64:
        raise ConfigurationError(f"brute force capped at t = 64, got {t}")
    if not K > 1:
        raise ConfigurationError(f"K must exceed 1, got {K}")
    FK = Fraction(K)
    p = 1 / FK
    q = 1 - p
    total = Fraction(0)
    for k in range(t + 1):
        overshoot = k * FK - t
        if overshoot > 0:
            total += overshoot * math.comb(t, k) * p**k * q ** (t - k)
    return float(total)


def overshoot_partial_sum(K: int, t: int, m: int) -> int:
    """G_m = sum_{k=t-m}^{t} (kK - t) C(t,k) (K-1)^(t-k), exact integers.

    Only integer K is supported so the oracle side of the induction identity
    stays exact.
    """
    if not (0 <= m <= t - 1):
        raise ConfigurationError(f"m must lie in [0, {t - 1}], got {m}")
    if K < 2:
        raise ConfigurationError("integer K must be at least 2")
    return sum((k * K - t) * math.comb(t, k) * (K - 1) ** (t - k)
               for k in range(t - m, t + 1))


def overshoot_partial_sum_closed(K: int, t: int, m: int) -> int:
    """The induction identity's right side: t (K-1)^(m+1) C(t-1, m)."""
    return t * (K - 1) ** (m + 1) * math.comb(t - 1, m)


def lower_bound_general(n: int, B: float, C: float, T: int) -> BoundValue:
    """Piecewise information-theoretic lower bound on E[sum_i Q_i(T)] over the
    model class with (1/n) sum Var <= C^2 and (1/n) sum d_i^2 <= B^2.

    C=0 gives sqrt(n) B outright. For C>0 the small-T clause applies up to
    T* = (B^2 + 2 n C^2)/(n C^2) and the Gaussian-regime clause beyond it.
    The piecewise function covers every T, so ``valid`` is always True; the
    clause window is still reported.
    """
    if n < 1 or B <= 0 or C < 0 or T < 1:
        raise ConfigurationError("need n >= 1, B > 0, C >= 0, T >= 1")
    base = math.sqrt(n) * B
    if C == 0.0:
        return BoundValue(value=base, regime="thm1-czero", valid=True)
    nC2 = n * C * C
    B2 = B * B
    T_star = (B2 + 2.0 * nC2) / nC2
    if T <= T_star:
        value = n**1.5 * C * C * (T - 1) / (B * (1.0 + nC2 / B2) ** (T - 1)) + base
        return BoundValue(value=value, regime="thm1-clause1", valid=True,
                          window=(1.0, T_star))
    den1 = nC2 * (T - 2) - B2
    den2 = B2 * (T - 2) - nC2
    if den1 == 0.0 or den2 == 0.0:
        xi = -math.inf
    else:
        xi = -((B2 + nC2) ** 2) * (T - 2) / (12.0 * den1 * den2)
    delta = max((B2 + nC2) / (B2 * (T - 1)), (B2 + nC2) / (nC2 * (T - 1)))
    value = math.exp(xi) / SQRT_2PI * (1.0 - delta) * n * C * math.sqrt(T - 2) + base
    return BoundValue(value=value, regime="thm1-clause2", valid=True,
                      window=(T_star, None))


def lower_bound_simple(n: int, B: float, C: float, T: int) -> BoundValue:
    """Reader-friendly large-T form n C sqrt(T-2) / (2 sqrt(2 e pi)) + sqrt(n) B,
    guaranteed once T > 2B^2/(nC^2) + 2nC^2/B^2 + 5."""
    if C <= 0:
        raise ConfigurationError("the simplified bound requires C > 0")
    if n < 1 or B <= 0 or T < 1:
        raise ConfigurationError("need n >= 1, B > 0, T >= 1")
    T_low = 2.0 * B * B / (n * C * C) + 2.0 * n * C * C / (B * B) + 5.0
    value = n * C * math.sqrt(max(T - 2, 0)) / TWO_SQRT_2EPI + math.sqrt(n) * B
    return BoundValue(value=value, regime="thm1-simple", valid=T > T_low,
                      window=(T_low, None))


def lower_bound_asymptotic(n: int, C: float, kind: str) -> float:
    """Leading coefficient of the large-T lower bound: n C / sqrt(2 pi) per
    sqrt(T-2) for dependent arrivals, sqrt(n) C / sqrt(2 pi) per sqrt(T-1) for
    independent."""
    if kind == "dependent":
        return n * C / SQRT_2PI
    if kind == "independent":
        return math.sqrt(n) * C / SQRT_2PI
    raise ConfigurationError(f"kind must be 'dependent' or 'independent', got {kind!r}")


def clause1_sandwich(n: int, B: float, C: float, T: int) -> tuple[float, float, float]:
    """Diagnostic triple for the B >> sqrt(n) C regime: the small-T clause value
    bracketed by n^{3/2} C^2 (T-1) / (2 e B) and n^{3/2} C^2 (T-1) / B.

    The bracketing constants are reported, not asserted: they describe the
    clause's scale on its window, not a guarantee for every (n, B, C, T).
    """
    if C <= 0:
        raise ConfigurationError("the sandwich diagnostic requires C > 0")
    lead = n**1.5 * C * C * (T - 1)
    mid = lower_bound_general(n, B, C, T).value - math.sqrt(n) * B
    return (lead / (2.0 * math.e * B), mid, lead / B)


def upper_bound_lyapopt(n: int, C: float, T: int,
                        expected_last_arrival_total: float) -> float:
    """n C sqrt(T-1) + E[sum_i A_i(T-1)]; holds when the running arrival mean
    always lies inside the scheduling set itself."""
    if n < 1 or C < 0 or T < 1:
        raise ConfigurationError("need n >= 1, C >= 0, T >= 1")
    return n * C * math.sqrt(T - 1) + expected_last_arrival_total


def upper_bound_maxweight(n: int, B: float, C: float, T: int,
                          expected_last_arrival_total: float) -> float:
    """n sqrt((B^2 + C^2)(T-1)) + E[sum_i A_i(T-1)]."""
    if n < 1 or B < 0 or C < 0 or T < 1:
        raise ConfigurationError("need n >= 1, B >= 0, C >= 0, T >= 1")
    return n * math.sqrt((B * B + C * C) * (T - 1)) + expected_last_arrival_total


def thm5_window(B: float, C: float) -> tuple[float, float]:
    """Guarantee window [l(C,B), B^3/(2 sqrt 2)] of the MaxWeight lower bound;
    the C=0 clause uses l = 2B^2/(sqrt 2 B - 1)."""
    hi = B**3 / (2.0 * math.sqrt(2.0))
    lo_det = 2.0 * B * B / (math.sqrt(2.0) * B - 1.0)
    if C == 0.0:
        return (lo_det, hi)
    lo = max(B * B / (C * C) + 4.0 * C * C / (B * B) + 5.0, lo_det)
    return (lo, hi)


def maxweight_lower_bound(B: float, C: float, T: int) -> BoundValue:
    """Two-queue MaxWeight lower bound on the constructed segment instance.

    C=0 clause: 2^{1/4} sqrt(BT) / 3. Combined clause (1 <= C <= B):
    (C + sqrt B) sqrt(T-2) / (2 sqrt(2 e pi)). Values are computed even when
    the hypotheses (B >= 3 sqrt 2, C in range, T in window) fail; ``valid``
    carries the verdict.
    """
    if B <= 0 or C < 0 or T < 1:
        raise ConfigurationError("need B > 0, C >= 0, T >= 1")
    window = thm5_window(B, C)
    hypotheses_ok = B >= 3.0 * math.sqrt(2.0)
    in_window = window[0] <= T <= window[1]
    if C == 0.0:
        value = 2.0**0.25 * math.sqrt(B * T) / 3.0
        return BoundValue(value=value, regime="thm5-czero",
                          valid=hypotheses_ok and in_window, window=window)
    value = (C + math.sqrt(B)) * math.sqrt(max(T - 2, 0)) / TWO_SQRT_2EPI
    return BoundValue(value=value, regime="thm5-window",
                      valid=hypotheses_ok and 1.0 <= C <= B and in_window,
                      window=window)


def lindley_trace_bound(arrival_totals, M: float, T: int) -> float:
    """Policy-independent lower bound on sum_i Q_i(T) from the per-slot arrival
    totals: the largest suffix sum of (total - M) over slots 0..T-2, floored at
    0, plus the slot-(T-1) total. Computed by the running Lindley recursion."""
    totals = np.asarray(arrival_totals, dtype=float)
    if T < 1:
        raise ConfigurationError("T must be at least 1")
    if totals.shape[0] < T:
        raise ConfigurationError(
            f"need at least {T} arrival totals, got {totals.shape[0]}")
    L = 0.0
    for u in range(T - 1):
        L = max(L + totals[u] - M, 0.0)
    return L + float(totals[T - 1])


def lindley_bound_series(arrival_totals, M: float) -> np.ndarray:
    """The Lindley bound at every horizon 1..len(totals), in one O(T) pass.

    out[T-1] equals lindley_trace_bound(totals, M, T).
    """
    totals = np.asarray(arrival_totals, dtype=float)
    T_max = totals.shape[0]
    if T_max < 1:
        raise ConfigurationError("need at least one arrival total")
    out = np.empty(T_max)
    out[0] = totals[0]
    L = 0.0
    for T in range(2, T_max + 1):
        L = max(L + totals[T - 2] - M, 0.0)
        out[T - 1] = L + totals[T - 1]
    return out


def crossing_times(series, b: float, k_max: int) -> list[int | None]:
    """t_k = first index with series[t] >= k*b, for k = 1..k_max (None when the
    level is never reached). Used to check the staircase growth of the
    MaxWeight queue-2 trajectory on the segment instance."""
    series = np.asarray(series, dtype=float)
    out: list[int | None] = []
    start = 0
    for k in range(1, k_max + 1):
        level = k * b
        idx = None
        for t in range(start, series.shape[0]):
            if series[t] >= level:
                idx = t
                break
        out.append(idx)
        if idx is None:
            start = series.shape[0]
        else:
            start = idx
    return out
