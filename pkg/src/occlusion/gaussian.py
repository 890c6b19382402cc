"""Bimodal Gaussian mixture target, Laplace-approximation proposal, and a
random walk Metropolis kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, InvalidStateError

_LOG_2PI = math.log(2.0 * math.pi)


def _logsumexp2(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@dataclass(frozen=True)
class GaussianMixture:
    """Standard normal plus a second Gaussian bump of weight ``weight_second``.

    The second component has mean ``mean_second`` and isotropic variance
    ``var_second``.  Densities are fully normalised.
    """

    weight_second: float
    mean_second: np.ndarray
    var_second: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "mean_second", np.asarray(self.mean_second, dtype=np.float64)
        )
        if not 0.0 <= self.weight_second <= 1.0:
            raise InvalidStateError("mixture weight must lie in [0, 1]")
        if not self.var_second > 0.0:
            raise InvalidStateError("second-component variance must be positive")

    @property
    def dimension(self) -> int:
        return self.mean_second.size

    def _component_log_densities(self, x: np.ndarray) -> tuple[float, float]:
        d = self.dimension
        l1 = -0.5 * (d * _LOG_2PI + float(x @ x))
        diff = x - self.mean_second
        l2 = -0.5 * (
            d * _LOG_2PI + d * math.log(self.var_second) + float(diff @ diff) / self.var_second
        )
        return l1, l2

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        l1, l2 = self._component_log_densities(x)
        p = self.weight_second
        la = math.log1p(-p) + l1 if p < 1.0 else -math.inf
        lb = math.log(p) + l2 if p > 0.0 else -math.inf
        return _logsumexp2(la, lb)

    # Occlusion protocol: the mixture is normalisable, so the normalised
    # density doubles as the unnormalised one.
    def log_density_unnorm(self, x) -> float:
        return self.log_density(x)

    def _responsibilities(self, x: np.ndarray) -> tuple[float, float]:
        l1, l2 = self._component_log_densities(x)
        p = self.weight_second
        la = math.log1p(-p) + l1 if p < 1.0 else -math.inf
        lb = math.log(p) + l2 if p > 0.0 else -math.inf
        total = _logsumexp2(la, lb)
        return math.exp(la - total), math.exp(lb - total)

    def grad_log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        r1, r2 = self._responsibilities(x)
        g1 = -x
        g2 = -(x - self.mean_second) / self.var_second
        return r1 * g1 + r2 * g2

    def neg_log_density_hessian(self, x) -> np.ndarray:
        """Hessian of the negative log-density (closed form)."""
        x = np.asarray(x, dtype=np.float64)
        d = self.dimension
        r1, r2 = self._responsibilities(x)
        g1 = -x
        g2 = -(x - self.mean_second) / self.var_second
        gbar = r1 * g1 + r2 * g2
        h_log = (
            r1 * (-np.eye(d) + np.outer(g1, g1))
            + r2 * (-np.eye(d) / self.var_second + np.outer(g2, g2))
            - np.outer(gbar, gbar)
        )
        return -h_log


def gmm_log_density(x, mix: GaussianMixture) -> float:
    """Log-density of the mixture at ``x`` (stable two-term log-sum-exp)."""
    return mix.log_density(x)


@dataclass(frozen=True)
class GaussianProposal:
    """Multivariate normal with cached Cholesky factors for fast use."""

    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _chol_inv: np.ndarray = field(init=False, repr=False, compare=False)
    _log_norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvalidStateError("covariance must be positive definite") from exc
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_chol_inv", np.linalg.inv(chol))
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        object.__setattr__(self, "_log_norm", -0.5 * (mean.size * _LOG_2PI + log_det))

    @property
    def dimension(self) -> int:
        return self.mean.size

    def log_density(self, x) -> float:
        z = self._chol_inv @ (np.asarray(x, dtype=np.float64) - self.mean)
        return self._log_norm - 0.5 * float(z @ z)

    def log_density_unnorm(self, x) -> float:
        return self.log_density(x)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self._chol @ rng.standard_normal(self.dimension)


def laplace_approximation(
    mix: GaussianMixture,
    gd_step: float = 0.1,
    gd_iters: int = 10_000,
    init: Optional[np.ndarray] = None,
    grad_tol: float = 1e-8,
) -> GaussianProposal:
    """Gaussian fitted at a mode of the mixture.

    Gradient descent on the negative log-density finds the mode; the
    covariance is the inverse Hessian of the negative log-density there.
    Raises :class:`ConvergenceError` if the gradient norm stays above
    ``grad_tol`` after ``gd_iters`` iterations.
    """
    x = np.zeros(mix.dimension) if init is None else np.asarray(init, dtype=np.float64).copy()
    for _ in range(gd_iters):
        grad = mix.grad_log_density(x)
        norm = float(np.linalg.norm(grad))
        if norm < grad_tol:
            break
        x = x + gd_step * grad
    else:
        norm = float(np.linalg.norm(mix.grad_log_density(x)))
        if norm >= grad_tol:
            raise ConvergenceError(
                f"mode search stalled: |grad|={norm:.3e} after {gd_iters} iterations at x={x!r}"
            )
    cov = np.linalg.inv(mix.neg_log_density_hessian(x))
    return GaussianProposal(mean=x, cov=cov)


def dominant_component_proposal(mix: GaussianMixture) -> GaussianProposal:
    """Gaussian matching the mixture component with the larger weight.

    In high dimension the narrow component's normaliser can swallow the
    basin around the bulk mode, so a mode search on the full density lands
    on the bump; fitting the heaviest component keeps the proposal on the
    bulk of the mass.
    """
    d = mix.dimension
    if mix.weight_second > 0.5:
        return GaussianProposal(mean=mix.mean_second, cov=mix.var_second * np.eye(d))
    return GaussianProposal(mean=np.zeros(d), cov=np.eye(d))


@dataclass
class RandomWalkMetropolis:
    """Isotropic Gaussian-step Metropolis kernel for a given log-density."""

    log_density: Callable[[np.ndarray], float]
    step_size: float

    def __post_init__(self) -> None:
        if not self.step_size > 0.0:
            raise InvalidStateError("step size must be positive")

    def step(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        proposal = state + self.step_size * rng.standard_normal(state.size)
        log_ratio = self.log_density(proposal) - self.log_density(state)
        u = rng.random()
        log_u = math.log(u) if u > 0.0 else -math.inf
        if log_u <= log_ratio:
            return proposal
        return state.copy()


def rwm_kernel(
    log_density: Callable[[np.ndarray], float],
    dimension: int,
    step_size: Optional[float] = None,
) -> RandomWalkMetropolis:
    """Random walk Metropolis with the scaling-rule default step 2.38/sqrt(d)."""
    if step_size is None:
        step_size = 2.38 / math.sqrt(dimension)
    return RandomWalkMetropolis(log_density=log_density, step_size=step_size)
