"""Occlusion layer over a P-invariant Markov chain.

The chain contributes states and the regions they fall in; concurrent
rejection samplers driven by a variational proposal contribute independent
draws from the target restricted to those regions; the postprocessing step
replaces ("occludes") chain states with the restricted draws and averages
the functional over the result.

Regions are half-open intervals ``[C_{i-1}, C_i)`` of the unnormalised
density ratio between target and proposal, with ``C_0 = 0`` and
``C_R = +inf`` implied.  All ratio arithmetic happens in log space.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol

import numpy as np

from .errors import ConsistencyError, InvalidStateError

State = Any

_NEG_INF = float("-inf")
_POS_INF = float("inf")


class TargetModel(Protocol):
    """Unnormalised log-density of the target distribution."""

    def log_density_unnorm(self, state: State) -> float: ...


class VariationalModel(Protocol):
    """Sampleable approximation of the target with unnormalised log-density."""

    def log_density_unnorm(self, state: State) -> float: ...

    def sample(self, rng: np.random.Generator) -> State: ...


class MarkovKernel(Protocol):
    """One transition of a Markov chain leaving the target invariant."""

    def step(self, state: State, rng: np.random.Generator) -> State: ...


@dataclass(frozen=True)
class RegionPartition:
    """Ordered density-ratio thresholds splitting the state space into regions.

    Thresholds are stored as logs so that ratios far beyond float range keep
    a finite representation.  ``n_regions`` is one more than the number of
    finite thresholds; an empty partition means the single region ``[0, inf)``.
    """

    log_thresholds: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for value in self.log_thresholds:
            if not math.isfinite(value):
                raise InvalidStateError(f"non-finite log threshold {value!r}")
        if any(b <= a for a, b in zip(self.log_thresholds, self.log_thresholds[1:])):
            raise InvalidStateError("thresholds must be strictly increasing")

    @classmethod
    def from_thresholds(cls, thresholds: Iterable[float]) -> "RegionPartition":
        logs = []
        for c in thresholds:
            if not (c > 0.0) or not math.isfinite(c):
                raise InvalidStateError(f"thresholds must be positive finite, got {c!r}")
            logs.append(math.log(c))
        return cls(log_thresholds=tuple(logs))

    @classmethod
    def from_log_thresholds(cls, log_thresholds: Iterable[float]) -> "RegionPartition":
        return cls(log_thresholds=tuple(float(v) for v in log_thresholds))

    @property
    def n_regions(self) -> int:
        return len(self.log_thresholds) + 1

    @property
    def thresholds(self) -> tuple[float, ...]:
        """Linear-space thresholds; may overflow to inf for display purposes."""
        return tuple(math.exp(v) for v in self.log_thresholds)

    def region_of_log(self, log_rn: float) -> int:
        """Region index in ``1..n_regions`` of a log density-ratio value."""
        if math.isnan(log_rn):
            raise InvalidStateError("density ratio is NaN")
        return bisect_right(self.log_thresholds, log_rn) + 1

    def region_of(self, rn_value: float) -> int:
        if math.isnan(rn_value):
            raise InvalidStateError("density ratio is NaN")
        if rn_value < 0.0:
            raise InvalidStateError(f"density ratio must be >= 0, got {rn_value!r}")
        log_rn = math.log(rn_value) if rn_value > 0.0 else _NEG_INF
        return self.region_of_log(log_rn)

    def log_upper_bound(self, region: int) -> float:
        """log C_i for region i; +inf for the last region."""
        if not 1 <= region <= self.n_regions:
            raise InvalidStateError(f"region {region} out of range 1..{self.n_regions}")
        if region == self.n_regions:
            return _POS_INF
        return self.log_thresholds[region - 1]


def region_index(rn_value: float, partition: RegionPartition) -> int:
    """Index i with ``rn_value`` in ``[C_{i-1}, C_i)`` (right half-open)."""
    return partition.region_of(rn_value)


def log_rn_derivative(state: State, target: TargetModel, q: VariationalModel) -> float:
    """log of the unnormalised density ratio target / proposal at ``state``."""
    lp = float(target.log_density_unnorm(state))
    lq = float(q.log_density_unnorm(state))
    if not math.isfinite(lp) or not math.isfinite(lq):
        raise InvalidStateError(
            f"non-finite log-density at state (target={lp!r}, proposal={lq!r})"
        )
    return lp - lq


def rejection_attempt(
    target: TargetModel,
    q: VariationalModel,
    partition: RegionPartition,
    rng: np.random.Generator,
) -> Optional[tuple[int, State]]:
    """One proposal of the region-restricted rejection sampler.

    Draws ``Y`` from the proposal, finds its region ``i`` and accepts with
    probability ``ratio(Y) / C_i`` where ``C_i`` is the right endpoint of
    the region.  The last region has infinite endpoint and always rejects.
    Returns ``(region, state)`` on acceptance, ``None`` otherwise.
    """
    y = q.sample(rng)
    log_rn = log_rn_derivative(y, target, q)
    region = partition.region_of_log(log_rn)
    if region == partition.n_regions:
        return None
    u = rng.random()
    log_u = math.log(u) if u > 0.0 else _NEG_INF
    if log_u <= log_rn - partition.log_upper_bound(region):
        return region, y
    return None


@dataclass
class ChainTrace:
    """Markov chain states paired with the region index of each state."""

    states: list[State]
    regions: np.ndarray
    f_values: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.regions = np.asarray(self.regions, dtype=np.int64)
        if len(self.states) != self.regions.size:
            raise ConsistencyError("states and regions lengths differ")
        if self.f_values is not None:
            self.f_values = np.asarray(self.f_values, dtype=np.float64)
            if self.f_values.size != self.regions.size:
                raise ConsistencyError("f_values length differs from states")

    def __len__(self) -> int:
        return self.regions.size


@dataclass
class RestrictedPool:
    """Per-region collections of accepted restricted-rejection samples."""

    n_regions: int
    per_region: list[list[State]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.per_region:
            self.per_region = [[] for _ in range(self.n_regions)]
        if len(self.per_region) != self.n_regions:
            raise ConsistencyError("per_region length must equal n_regions")

    def add(self, region: int, state: State) -> None:
        if not 1 <= region <= self.n_regions:
            raise ConsistencyError(f"region {region} out of range 1..{self.n_regions}")
        self.per_region[region - 1].append(state)

    def samples_in(self, region: int) -> list[State]:
        return self.per_region[region - 1]

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(entries) for entries in self.per_region], dtype=np.int64)

    def validate_regions(self, region_oracle: Callable[[State], int]) -> None:
        """Check each stored sample against an external region classifier."""
        for i, entries in enumerate(self.per_region, start=1):
            for y in entries:
                found = region_oracle(y)
                if found != i:
                    raise ConsistencyError(
                        f"pool entry stored under region {i} classifies as {found}"
                    )


@dataclass
class OcclusionResult:
    """Indicators, occluded state sequence and summary proportions."""

    indicators: np.ndarray
    occluded_states: list[State]
    occlusion_proportion: float
    pool_proportion: float
    estimate: Optional[float] = None


def occlude(
    trace: ChainTrace, pools: RestrictedPool, rng: np.random.Generator
) -> OcclusionResult:
    """Replace chain states with pooled restricted samples, region by region.

    For region ``i`` with visit times ``T_i`` and pool size ``N_i``: if the
    pool covers every visit, all of them are occluded; otherwise a uniformly
    random size-``N_i`` subset of the visit times is.  Pool entries are
    assigned in pool order against ascending chain time, which is
    distribution-preserving because entries are exchangeable given counts.
    Excess pool entries are discarded.
    """
    n = len(trace)
    if n == 0:
        raise InvalidStateError("empty trace")
    if trace.regions.max(initial=1) > pools.n_regions:
        raise ConsistencyError("trace references regions beyond the pool's range")
    indicators = np.zeros(n, dtype=np.int8)
    occluded: list[State] = list(trace.states)
    used = 0
    for region in range(1, pools.n_regions + 1):
        entries = pools.samples_in(region)
        times = np.flatnonzero(trace.regions == region)
        n_pool, n_visits = len(entries), times.size
        if n_pool == 0 or n_visits == 0:
            continue
        if n_pool >= n_visits:
            selected = times
        else:
            selected = np.sort(rng.choice(times, size=n_pool, replace=False))
        for j, t in enumerate(selected):
            occluded[t] = entries[j]
        indicators[selected] = 1
        used += selected.size
    return OcclusionResult(
        indicators=indicators,
        occluded_states=occluded,
        occlusion_proportion=used / n,
        pool_proportion=float(pools.counts.sum()) / n,
    )


def occluded_estimate(f: Callable[[State], float], result: OcclusionResult) -> float:
    """Mean of ``f`` over the occluded state sequence."""
    n = len(result.occluded_states)
    if n == 0:
        raise InvalidStateError("empty trace")
    value = float(np.mean([f(z) for z in result.occluded_states]))
    result.estimate = value
    return value
