"""Small discrete models used as exactly computable sampling targets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TableTarget:
    """Finite target with an arbitrary stored normalisation constant."""

    probs: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))

    @property
    def z(self) -> float:
        return math.exp(self.log_scale)

    def log_density_unnorm(self, state: int) -> float:
        p = self.probs[state]
        return math.log(p) + self.log_scale if p > 0 else -math.inf


@dataclass(frozen=True)
class TableProposal:
    """Finite proposal with inverse-CDF sampling."""

    probs: np.ndarray
    log_scale: float = 0.0
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    @property
    def z(self) -> float:
        return math.exp(self.log_scale)

    def log_density_unnorm(self, state: int) -> float:
        return math.log(self.probs[state]) + self.log_scale

    def sample(self, rng: np.random.Generator) -> int:
        idx = int(np.searchsorted(self._cum, rng.random() * self._cum[-1], side="right"))
        return min(idx, self.probs.size - 1)


@dataclass
class TableMetropolisKernel:
    """Uniform-proposal Metropolis kernel over a finite target."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)

    def step(self, state: int, rng: np.random.Generator) -> int:
        proposal = int(rng.integers(self.probs.size))
        if rng.random() < min(1.0, self.probs[proposal] / self.probs[state]):
            return proposal
        return state


def six_state_setup():
    """Cross-checkable six-state target/proposal pair with three regions.

    Density ratios are 5 * target_prob, so thresholds (0.8, 1.2) put states
    {0,1,2} in region 1, {3,4} in region 2 and state 5 in the always-reject
    region.
    """
    target_probs = np.array([0.05, 0.10, 0.15, 0.20, 0.22, 0.28])
    target = TableTarget(probs=target_probs, log_scale=math.log(2.0))
    proposal = TableProposal(probs=np.full(6, 1.0 / 6.0), log_scale=math.log(2.4))
    thresholds = (0.8, 1.2)
    return target, proposal, thresholds
