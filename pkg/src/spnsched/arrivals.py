"""Arrival-process generators with exact mean/variance metadata.

Five variants share one small interface (``mean``, ``variances``, ``c_value``,
``sample``, ``sample_matrix``):

* ``Deterministic``: a fixed rate vector, optionally with a slot-0 override or
  a full per-slot schedule.
* ``DependentBinary``: all queues driven by a single coin: A = K*lambda with
  probability 1/K, else 0. Per-queue variance is (K-1) lambda_i^2 exactly.
* ``IndependentBinary``: same marginals, one coin per queue.
* ``BinomialPerQueue``: independent binomial arrivals calibrated to a target
  per-queue variance (used by the boundary-rate experiments).
* ``NoisyDeterministic``: a deterministic base plus independent +/-amplitude
  coin noise, clipped at 0. The declared mean/variance metadata is the nominal
  pre-clip value; clipping is what keeps sample paths nonnegative.

``sample_matrix(T, rng)`` draws the whole horizon in one vectorized call and is
what the simulator uses; ``sample(t, rng)`` draws a single slot.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from pathlib import Path

import numpy as np

from spnsched.errors import ConfigurationError
from spnsched import scheduling
from spnsched.scheduling import SchedulingSet

__all__ = [
    "Deterministic",
    "DependentBinary",
    "IndependentBinary",
    "BinomialPerQueue",
    "NoisyDeterministic",
    "arrival_from_json",
    "build_thm1_instance",
    "build_thm2_instance",
    "build_thm5_instance",
    "build_binomial_spec",
]


def _freeze(obj, name: str, value: np.ndarray) -> None:
    value = np.asarray(value, dtype=float)
    value.setflags(write=False)
    object.__setattr__(obj, name, value)


def _check_nonneg(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{what} must be finite")
    if np.any(arr < 0):
        raise ConfigurationError(f"{what} must be nonnegative")


@dataclasses.dataclass(frozen=True, eq=False)
class Deterministic:
    """Arrivals equal to their mean every slot; rng is ignored.

    Exactly one of the shapes applies: a constant ``base`` (with optional
    ``slot0`` override), or a full per-slot ``schedule`` matrix.
    """

    base: np.ndarray
    slot0: np.ndarray | None = None
    schedule: np.ndarray | None = None

    def __post_init__(self):
        if self.schedule is not None:
            sched = np.asarray(self.schedule, dtype=float)
            if sched.ndim != 2:
                raise ConfigurationError("per-slot schedule must be 2-d (T, n)")
            _check_nonneg(sched, "arrival schedule")
            _freeze(self, "schedule", sched)
            _freeze(self, "base", sched[0] if len(sched) else np.zeros(0))
            if self.slot0 is not None:
                raise ConfigurationError("slot0 override and a full schedule are exclusive")
            return
        base = np.asarray(self.base, dtype=float)
        if base.ndim != 1:
            raise ConfigurationError("constant rate vector must be 1-d")
        _check_nonneg(base, "arrival rates")
        _freeze(self, "base", base)
        if self.slot0 is not None:
            s0 = np.asarray(self.slot0, dtype=float)
            if s0.shape != base.shape:
                raise ConfigurationError("slot0 override has the wrong dimension")
            _check_nonneg(s0, "slot-0 arrival rates")
            _freeze(self, "slot0", s0)

    @property
    def n(self) -> int:
        return self.base.shape[0] if self.schedule is None else self.schedule.shape[1]

    def mean(self, t: int) -> np.ndarray:
        if self.schedule is not None:
            return self.schedule[t]
        if t == 0 and self.slot0 is not None:
            return self.slot0
        return self.base

    def variances(self) -> np.ndarray:
        return np.zeros(self.n)

    def c_value(self) -> float:
        return 0.0

    def distinct_means(self) -> np.ndarray:
        if self.schedule is not None:
            return np.unique(self.schedule, axis=0)
        if self.slot0 is not None:
            return np.unique(np.vstack([self.base, self.slot0]), axis=0)
        return self.base[None, :]

    def sample(self, t: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean(t).copy()

    def sample_matrix(self, T: int, rng: np.random.Generator) -> np.ndarray:
        if self.schedule is not None:
            if T > self.schedule.shape[0]:
                raise ConfigurationError(
                    f"schedule covers {self.schedule.shape[0]} slots, horizon is {T}")
            return self.schedule[:T].copy()
        out = np.broadcast_to(self.base, (T, self.n)).copy()
        if self.slot0 is not None and T > 0:
            out[0] = self.slot0
        return out

    def to_json(self) -> dict:
        if self.schedule is not None:
            return {"variant": "deterministic", "rates": self.schedule.tolist()}
        obj = {"variant": "deterministic", "rates": self.base.tolist()}
        if self.slot0 is not None:
            obj["slot0"] = self.slot0.tolist()
        return obj


@dataclasses.dataclass(frozen=True, eq=False)
class DependentBinary:
    """A = K*lambda with probability 1/K (one coin shared by all queues)."""

    lam: np.ndarray
    K: float

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ConfigurationError("rate vector must be 1-d")
        _check_nonneg(lam, "arrival rates")
        if not (self.K > 1):
            raise ConfigurationError(f"K must exceed 1, got {self.K}")
        _freeze(self, "lam", lam)
        object.__setattr__(self, "K", float(self.K))

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def mean(self, t: int) -> np.ndarray:
        return self.lam

    def variances(self) -> np.ndarray:
        return (self.K - 1.0) * self.lam ** 2

    def c_value(self) -> float:
        return float(np.sqrt(self.variances().mean()))

    def distinct_means(self) -> np.ndarray:
        return self.lam[None, :]

    def sample(self, t: int, rng: np.random.Generator) -> np.ndarray:
        if rng.random() < 1.0 / self.K:
            return self.K * self.lam
        return np.zeros(self.n)

    def sample_matrix(self, T: int, rng: np.random.Generator) -> np.ndarray:
        coins = rng.random(T) < 1.0 / self.K
        return np.where(coins[:, None], self.K * self.lam, 0.0)

    def to_json(self) -> dict:
        return {"variant": "dependent_binary", "lambda": self.lam.tolist(),
                "K": self.K}


@dataclasses.dataclass(frozen=True, eq=False)
class IndependentBinary:
    """A_i = K*lambda_i with probability 1/K, one independent coin per queue."""

    lam: np.ndarray
    K: float

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ConfigurationError("rate vector must be 1-d")
        _check_nonneg(lam, "arrival rates")
        if not (self.K > 1):
            raise ConfigurationError(f"K must exceed 1, got {self.K}")
        _freeze(self, "lam", lam)
        object.__setattr__(self, "K", float(self.K))

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def mean(self, t: int) -> np.ndarray:
        return self.lam

    def variances(self) -> np.ndarray:
        return (self.K - 1.0) * self.lam ** 2

    def c_value(self) -> float:
        return float(np.sqrt(self.variances().mean()))

    def distinct_means(self) -> np.ndarray:
        return self.lam[None, :]

    def sample(self, t: int, rng: np.random.Generator) -> np.ndarray:
        coins = rng.random(self.n) < 1.0 / self.K
        return np.where(coins, self.K * self.lam, 0.0)

    def sample_matrix(self, T: int, rng: np.random.Generator) -> np.ndarray:
        coins = rng.random((T, self.n)) < 1.0 / self.K
        return np.where(coins, self.K * self.lam, 0.0)

    def to_json(self) -> dict:
        return {"variant": "independent_binary", "lambda": self.lam.tolist(),
                "K": self.K}


@dataclasses.dataclass(frozen=True, eq=False)
class BinomialPerQueue:
    """Independent per-queue arrivals with mean lambda_i and variance close to
    a target.

    Queues with lambda_i > target use Binomial(m_i, p_i) with
    m_i = round(lambda_i^2 / (lambda_i - target)) clamped to >= ceil(lambda_i)
    and p_i = lambda_i / m_i (mean exact, variance approximate). Queues with
    0 < lambda_i <= target use the scaled Bernoulli K_i = target/lambda_i^2 + 1
    (variance exact). Zero-rate queues emit the zero process.
    """

    lam: np.ndarray
    target_variance: float = 1.0

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ConfigurationError("rate vector must be 1-d")
        _check_nonneg(lam, "arrival rates")
        tv = float(self.target_variance)
        if tv <= 0:
            raise ConfigurationError("target variance must be positive")
        _freeze(self, "lam", lam)
        object.__setattr__(self, "target_variance", tv)
        trials = np.zeros(lam.shape[0], dtype=np.int64)
        probs = np.zeros(lam.shape[0])
        scales = np.zeros(lam.shape[0])
        for i, li in enumerate(lam):
            if li == 0.0:
                warnings.warn(f"queue {i} has arrival rate 0; using the zero process",
                              stacklevel=2)
            elif li > tv:
                m = max(int(round(li * li / (li - tv))), int(math.ceil(li)))
                trials[i] = m
                probs[i] = li / m
            else:
                scales[i] = tv / (li * li) + 1.0
        trials.setflags(write=False)
        probs.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "_trials", trials)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_scales", scales)
        object.__setattr__(self, "_binom_idx", np.flatnonzero(trials > 0))
        object.__setattr__(self, "_scaled_idx", np.flatnonzero(scales > 0))

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def mean(self, t: int) -> np.ndarray:
        return self.lam

    def variances(self) -> np.ndarray:
        var = np.zeros(self.n)
        b = self._binom_idx
        var[b] = self._trials[b] * self._probs[b] * (1.0 - self._probs[b])
        s = self._scaled_idx
        var[s] = (self._scales[s] - 1.0) * self.lam[s] ** 2
        return var

    def c_value(self) -> float:
        return float(np.sqrt(self.variances().mean()))

    def distinct_means(self) -> np.ndarray:
        return self.lam[None, :]

    def sample(self, t: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_matrix(1, rng)[0]

    def sample_matrix(self, T: int, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros((T, self.n))
        b = self._binom_idx
        if b.size:
            out[:, b] = rng.binomial(self._trials[b], self._probs[b],
                                     size=(T, b.size))
        s = self._scaled_idx
        if s.size:
            coins = rng.random((T, s.size)) < 1.0 / self._scales[s]
            out[:, s] = np.where(coins, self._scales[s] * self.lam[s], 0.0)
        return out

    def to_json(self) -> dict:
        return {"variant": "binomial_per_queue", "lambda": self.lam.tolist(),
                "target_variance": self.target_variance}


@dataclasses.dataclass(frozen=True, eq=False)
class NoisyDeterministic:
    """Deterministic base plus independent +/-amplitude coin noise, clipped
    at 0.

    Metadata (mean, variances) reports the nominal pre-clip values: the base
    vector and amplitude^2 per queue. Clipping introduces a small upward mean
    bias on queues whose base is below the amplitude; capacity checks use the
    nominal mean by design.
    """

    base: np.ndarray
    amplitude: float
    slot0: np.ndarray | None = None

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        if base.ndim != 1:
            raise ConfigurationError("base rate vector must be 1-d")
        _check_nonneg(base, "arrival rates")
        if self.amplitude < 0:
            raise ConfigurationError("noise amplitude must be nonnegative")
        _freeze(self, "base", base)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        if self.slot0 is not None:
            s0 = np.asarray(self.slot0, dtype=float)
            if s0.shape != base.shape:
                raise ConfigurationError("slot0 override has the wrong dimension")
            _check_nonneg(s0, "slot-0 arrival rates")
            _freeze(self, "slot0", s0)

    @property
    def n(self) -> int:
        return self.base.shape[0]

    def mean(self, t: int) -> np.ndarray:
        if t == 0 and self.slot0 is not None:
            return self.slot0
        return self.base

    def variances(self) -> np.ndarray:
        return np.full(self.n, self.amplitude ** 2)

    def c_value(self) -> float:
        return self.amplitude

    def distinct_means(self) -> np.ndarray:
        if self.slot0 is not None:
            return np.unique(np.vstack([self.base, self.slot0]), axis=0)
        return self.base[None, :]

    def sample(self, t: int, rng: np.random.Generator) -> np.ndarray:
        signs = np.where(rng.random(self.n) < 0.5, -1.0, 1.0)
        return np.maximum(self.mean(t) + self.amplitude * signs, 0.0)

    def sample_matrix(self, T: int, rng: np.random.Generator) -> np.ndarray:
        signs = np.where(rng.random((T, self.n)) < 0.5, -1.0, 1.0)
        out = np.maximum(self.mean(1) + self.amplitude * signs, 0.0)
        if T > 0 and self.slot0 is not None:
            out[0] = np.maximum(self.slot0 + self.amplitude * signs[0], 0.0)
        return out

    def to_json(self) -> dict:
        obj = {"variant": "noisy_deterministic", "base": self.base.tolist(),
               "amplitude": self.amplitude}
        if self.slot0 is not None:
            obj["slot0"] = self.slot0.tolist()
        return obj


def arrival_from_json(obj: dict, *, base_dir: str | Path | None = None):
    """Build an arrival spec from its JSON description.

    Deterministic sequences may come inline (``rates`` as a vector or a per-slot
    matrix) or as ``rates_csv``, a path to a CSV file with one slot per row.
    """
    variant = obj.get("variant")
    if variant == "deterministic":
        if "rates_csv" in obj:
            path = Path(obj["rates_csv"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            rates = np.loadtxt(path, delimiter=",", ndmin=2)
            return Deterministic(base=rates[0], schedule=rates)
        rates = np.asarray(obj["rates"], dtype=float)
        if rates.ndim == 2:
            return Deterministic(base=rates[0], schedule=rates)
        slot0 = obj.get("slot0")
        return Deterministic(base=rates,
                             slot0=None if slot0 is None else np.asarray(slot0, float))
    if variant == "dependent_binary":
        return DependentBinary(lam=np.asarray(obj["lambda"], float), K=obj["K"])
    if variant == "independent_binary":
        return IndependentBinary(lam=np.asarray(obj["lambda"], float), K=obj["K"])
    if variant == "binomial_per_queue":
        return BinomialPerQueue(lam=np.asarray(obj["lambda"], float),
                                target_variance=obj.get("target_variance", 1.0))
    if variant == "noisy_deterministic":
        slot0 = obj.get("slot0")
        return NoisyDeterministic(base=np.asarray(obj["base"], float),
                                  amplitude=obj["amplitude"],
                                  slot0=None if slot0 is None else np.asarray(slot0, float))
    raise ConfigurationError(f"unknown arrival variant {variant!r}")


def build_thm1_instance(n: int, B: float, C: float):
    """Hard instance for the general lower bound: the simplex scheduling set
    with vertex sum sqrt(n)B and dependent-binary arrivals at rate B/sqrt(n)
    per queue, K = nC^2/B^2 + 1. C=0 degenerates to deterministic arrivals.

    The construction puts (1/n) sum Var(A_i) = C^2 exactly.
    """
    if n < 1:
        raise ConfigurationError("need at least one queue")
    if B <= 0:
        raise ConfigurationError("B must be positive")
    if C < 0:
        raise ConfigurationError("C must be nonnegative")
    total = math.sqrt(n) * B
    sset = SchedulingSet(n=n, kind=scheduling.POLYTOPE,
                         points=total * np.eye(n))
    lam = np.full(n, B / math.sqrt(n))
    if C == 0:
        return Deterministic(base=lam), sset
    K = n * C * C / (B * B) + 1.0
    return DependentBinary(lam=lam, K=K), sset


def build_thm2_instance(n: int, B: float, C: float):
    """Independent-coin twin of the dependent hard instance (same set, same
    rates, one coin per queue)."""
    spec, sset = build_thm1_instance(n, B, C)
    if isinstance(spec, Deterministic):
        return spec, sset
    return IndependentBinary(lam=spec.lam, K=spec.K), sset


def build_thm5_instance(B: float, epsilon: float = 0.0):
    """Two-queue instance separating MaxWeight from the quadratic-lookahead
    policy: segment scheduling set conv{(b,0),(0,1)} with b = sqrt(2)B and
    deterministic arrivals (1, (b-1)/b), the rate vector on the segment itself.

    The slot-0 override subtracts ``epsilon`` from queue 2. For float B the
    scaled b is irrational in exact terms, so the default epsilon = 0 already
    avoids exact MaxWeight ties; a nonzero value is accepted for exploration.
    """
    if B < 3.0 * math.sqrt(2.0):
        raise ConfigurationError(f"B must be at least 3*sqrt(2) ~ 4.2426, got {B}")
    if epsilon < 0:
        raise ConfigurationError("epsilon must be nonnegative")
    b = math.sqrt(2.0) * B
    sset = SchedulingSet(n=2, kind=scheduling.POLYTOPE,
                         points=np.array([[b, 0.0], [0.0, 1.0]]))
    base = np.array([1.0, (b - 1.0) / b])
    slot0 = np.array([1.0, (b - 1.0) / b - epsilon]) if epsilon > 0 else None
    return Deterministic(base=base, slot0=slot0), sset


def build_binomial_spec(lam, target_variance: float = 1.0) -> BinomialPerQueue:
    """Calibrate independent binomial arrivals to the given rates with
    per-queue variance near ``target_variance`` (exact on low-rate queues)."""
    lam = np.asarray(lam, dtype=float)
    _check_nonneg(lam, "arrival rates")
    return BinomialPerQueue(lam=lam, target_variance=target_variance)
