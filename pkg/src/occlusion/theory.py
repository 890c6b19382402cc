"""Estimator algebra on finite-state systems, with brute-force oracles.

Everything here works on a :class:`DiscreteSystem`: a target distribution
``p`` over ``m`` states, a ``p``-invariant transition matrix ``K``, a
functional ``f``, region labels and per-region occlusion probabilities.
Closed-form variance expressions are checked elsewhere against the
enumeration oracles in this module, which sum over every chain path,
indicator pattern and restricted draw.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationLimitError, InvalidStateError

_ATOL = 1e-12

# Hard caps keeping the exact enumerations cheap and well conditioned.
MAX_ENUM_STATES = 4
MAX_ENUM_LENGTH = 4


@dataclass(frozen=True)
class DiscreteSystem:
    """Finite target, invariant kernel, functional, regions and alphas.

    ``rho`` holds 1-based region labels; ``alpha[i-1]`` is the occlusion
    probability of region ``i``.  Every region must carry positive mass.
    """

    p: np.ndarray
    K: np.ndarray
    f: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "K", np.asarray(self.K, dtype=np.float64))
        object.__setattr__(self, "f", np.asarray(self.f, dtype=np.float64))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=np.int64))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64))
        m = self.p.size
        if self.K.shape != (m, m) or self.f.size != m or self.rho.size != m:
            raise InvalidStateError("inconsistent system shapes")
        if abs(self.p.sum() - 1.0) > _ATOL or np.any(self.p < 0):
            raise InvalidStateError("p must be a probability vector")
        if np.max(np.abs(self.K.sum(axis=1) - 1.0)) > _ATOL or np.any(self.K < -_ATOL):
            raise InvalidStateError("K must be row-stochastic")
        r = self.alpha.size
        if np.any((self.rho < 1) | (self.rho > r)):
            raise InvalidStateError("region labels must lie in 1..len(alpha)")
        if np.any((self.alpha < 0) | (self.alpha > 1)):
            raise InvalidStateError("alpha entries must lie in [0, 1]")
        for i in range(1, r + 1):
            if self.p[self.rho == i].sum() <= 0.0:
                raise InvalidStateError(f"region {i} has zero mass")

    @property
    def m(self) -> int:
        return self.p.size

    @property
    def n_regions(self) -> int:
        return self.alpha.size

    def region_masses(self) -> np.ndarray:
        return np.array(
            [self.p[self.rho == i].sum() for i in range(1, self.n_regions + 1)]
        )

    def region_means(self, g: np.ndarray | None = None) -> np.ndarray:
        g = self.f if g is None else g
        return np.array(
            [
                float(self.p[self.rho == i] @ g[self.rho == i])
                / float(self.p[self.rho == i].sum())
                for i in range(1, self.n_regions + 1)
            ]
        )

    def region_support(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.rho == region)


@dataclass(frozen=True)
class ResolutionPair:
    """Piecewise-constant region means of f, and what f keeps beyond them."""

    forward: np.ndarray
    orthogonal: np.ndarray


def expectation(sys: DiscreteSystem, g: np.ndarray) -> float:
    return float(sys.p @ g)


def variance(sys: DiscreteSystem, g: np.ndarray) -> float:
    mu = expectation(sys, g)
    return float(sys.p @ (g - mu) ** 2)


def lag_covariance(sys: DiscreteSystem, g: np.ndarray, h: np.ndarray, kpow: np.ndarray) -> float:
    """Cov(g(X_0), h(X_k)) in equilibrium, given the k-step matrix."""
    return float(sys.p @ (g * (kpow @ h))) - expectation(sys, g) * expectation(sys, h)


def resolution(sys: DiscreteSystem, g: np.ndarray | None = None) -> ResolutionPair:
    """Project ``g`` onto region indicators; return projection and remainder."""
    g = sys.f if g is None else np.asarray(g, dtype=np.float64)
    means = sys.region_means(g)
    forward = means[sys.rho - 1]
    return ResolutionPair(forward=forward, orthogonal=g - forward)


def within_region_variance(sys: DiscreteSystem) -> np.ndarray:
    """Conditional variance of f within each region."""
    out = np.empty(sys.n_regions)
    means = sys.region_means()
    for i in range(1, sys.n_regions + 1):
        sel = sys.rho == i
        w = sys.p[sel] / sys.p[sel].sum()
        out[i - 1] = float(w @ (sys.f[sel] - means[i - 1]) ** 2)
    return out


def stratified_estimate(samples_by_region, weights, allocations, f) -> float:
    """Weighted per-region sample means: sum_i w_i/n_i sum_j f(Y_ij)."""
    if not (len(samples_by_region) == len(weights) == len(allocations)):
        raise InvalidStateError("region lists must align")
    total = 0.0
    for samples, w, n_i in zip(samples_by_region, weights, allocations):
        if n_i < 1 or len(samples) == 0:
            raise InvalidStateError("every region needs at least one sample")
        if len(samples) != n_i:
            raise InvalidStateError("allocation does not match sample count")
        total += (w / n_i) * sum(f(y) for y in samples)
    return total


def proportional_variance_identity(sys: DiscreteSystem, n: int) -> tuple[float, float]:
    """Both sides of the proportional-allocation variance identity.

    Left: within-region variance over n.  Right: ``(1 - corr^2)`` times the
    plain Monte Carlo variance, with corr the correlation between f and its
    region-mean projection (defined as 0 when the projection is constant).
    """
    pair = resolution(sys)
    var_f = variance(sys, sys.f)
    if var_f == 0.0:
        return 0.0, 0.0
    lhs = variance(sys, pair.orthogonal) / n
    var_fwd = variance(sys, pair.forward)
    if var_fwd <= 0.0:
        corr_sq = 0.0
    else:
        cov = float(sys.p @ (sys.f * pair.forward)) - expectation(sys, sys.f) * expectation(
            sys, pair.forward
        )
        corr_sq = cov * cov / (var_f * var_fwd)
    rhs = (1.0 - corr_sq) * var_f / n
    return lhs, rhs


def _stationary_average_variance(sys: DiscreteSystem, g: np.ndarray, n: int) -> float:
    """Var of the length-n chain average of g, chain started in equilibrium."""
    total = variance(sys, g) / n
    kpow = np.eye(sys.m)
    for k in range(1, n):
        kpow = kpow @ sys.K
        total += (2.0 / n) * ((n - k) / n) * lag_covariance(sys, g, g, kpow)
    return total


def chain_variance_formula(sys: DiscreteSystem, n: int) -> float:
    """Exact variance of the plain chain estimator at equilibrium."""
    return _stationary_average_variance(sys, sys.f, n)


def ideal_variance_formula(sys: DiscreteSystem, n: int) -> float:
    """Variance of the fully occluded estimator: within-region term plus the
    Markov penalty paid through the region-mean projection."""
    pair = resolution(sys)
    return variance(sys, pair.orthogonal) / n + _stationary_average_variance(
        sys, pair.forward, n
    )


def damped_functional(sys: DiscreteSystem) -> np.ndarray:
    """f with each region shrunk toward its mean by that region's alpha.

    This is the function whose equilibrium lag covariances are exactly those
    of the occluded functional: at lag k the layered process contributes
    ``Cov(f_alpha(X_0), f_alpha(X_k))``, because the indicator and the
    restricted draw at each step integrate out to the region mean.
    """
    alpha_at = sys.alpha[sys.rho - 1]
    return (1.0 - alpha_at) * sys.f + alpha_at * resolution(sys).forward


def occluded_variance_formula(sys: DiscreteSystem, n: int) -> float:
    """Ideal variance plus the lagged correction from partial occlusion.

    The correction at lag k is the covariance gap between the damped
    functional and the region-mean projection; it vanishes when every
    region is always occluded and restores the plain chain variance when
    none is.
    """
    pair = resolution(sys)
    f_alpha = damped_functional(sys)
    total = ideal_variance_formula(sys, n)
    kpow = np.eye(sys.m)
    for k in range(1, n):
        kpow = kpow @ sys.K
        c_k = lag_covariance(sys, f_alpha, f_alpha, kpow) - lag_covariance(
            sys, pair.forward, pair.forward, kpow
        )
        total += (2.0 / n) * ((n - k) / n) * c_k
    return total


def asymptotic_occluded_variance(
    sys: DiscreteSystem, rtol: float = 1e-15, max_lag: int = 100_000
) -> float:
    """Limit of n times the occluded-estimator variance.

    Sums the damped-functional lag covariance series to numerical
    exhaustion; requires the kernel's non-unit spectrum to lie strictly
    inside the unit disc.
    """
    f_alpha = damped_functional(sys)
    total = variance(sys, sys.f)
    scale = max(total, 1.0)
    kpow = np.eye(sys.m)
    for _ in range(max_lag):
        kpow = kpow @ sys.K
        term = 2.0 * lag_covariance(sys, f_alpha, f_alpha, kpow)
        total += term
        if abs(term) < rtol * scale:
            return total
    raise InvalidStateError("lagged covariance series did not exhaust; kernel too slow")


def _check_enumerable(sys: DiscreteSystem, n: int) -> None:
    if sys.m > MAX_ENUM_STATES or n > MAX_ENUM_LENGTH:
        raise EnumerationLimitError(
            f"enumeration limited to m <= {MAX_ENUM_STATES}, n <= {MAX_ENUM_LENGTH}"
        )
    if n < 1:
        raise InvalidStateError("n must be >= 1")


def _enumerate_paths(sys: DiscreteSystem, n: int):
    """Yield every positive-probability chain path started in equilibrium."""
    for path in itertools.product(range(sys.m), repeat=n):
        w = sys.p[path[0]]
        if w == 0.0:
            continue
        for a, b in zip(path, path[1:]):
            w *= sys.K[a, b]
            if w == 0.0:
                break
        if w > 0.0:
            yield path, w


def brute_force_chain_variance(sys: DiscreteSystem, n: int) -> float:
    """Var of the plain chain estimator by full path enumeration."""
    _check_enumerable(sys, n)
    e1 = e2 = 0.0
    for path, w in _enumerate_paths(sys, n):
        est = float(np.mean(sys.f[list(path)]))
        e1 += w * est
        e2 += w * est * est
    return e2 - e1 * e1


def brute_force_ideal_variance(sys: DiscreteSystem, n: int) -> float:
    """Var of the fully occluded estimator by enumerating paths and draws.

    Each chain position independently receives a draw from the target
    restricted to its region; all draw combinations are enumerated.
    """
    _check_enumerable(sys, n)
    masses = sys.region_masses()
    cond = sys.p / masses[sys.rho - 1]  # p restricted to each state's region
    supports = [sys.region_support(i + 1) for i in range(sys.n_regions)]
    e1 = e2 = 0.0
    for path, w in _enumerate_paths(sys, n):
        pos_supports = [supports[sys.rho[x] - 1] for x in path]
        for draws in itertools.product(*pos_supports):
            wy = w
            for y in draws:
                wy *= cond[y]
            if wy == 0.0:
                continue
            est = float(np.mean(sys.f[list(draws)]))
            e1 += wy * est
            e2 += wy * est * est
    return e2 - e1 * e1


def brute_force_occluded_mean(sys: DiscreteSystem, n: int) -> float:
    """E of the occluded estimator under the layered-kernel law."""
    return _occluded_process_moments(sys, n)[0]


def brute_force_occluded_variance(sys: DiscreteSystem, n: int) -> float:
    """Var of the occluded estimator under the layered-kernel law.

    Enumerates chain paths, independent per-step occlusion indicators with
    region probabilities ``alpha``, and restricted draws at the occluded
    positions.
    """
    mean, second = _occluded_process_moments(sys, n)
    return second - mean * mean


def _occluded_process_moments(sys: DiscreteSystem, n: int) -> tuple[float, float]:
    _check_enumerable(sys, n)
    masses = sys.region_masses()
    cond = sys.p / masses[sys.rho - 1]
    supports = [sys.region_support(i + 1) for i in range(sys.n_regions)]
    alpha_at = sys.alpha[sys.rho - 1]
    e1 = e2 = 0.0
    for path, w in _enumerate_paths(sys, n):
        for pattern in itertools.product((0, 1), repeat=n):
            ws = w
            for x, s in zip(path, pattern):
                ws *= alpha_at[x] if s else 1.0 - alpha_at[x]
                if ws == 0.0:
                    break
            if ws == 0.0:
                continue
            occluded_pos = [t for t, s in enumerate(pattern) if s]
            base = sum(sys.f[x] for x, s in zip(path, pattern) if not s)
            pos_supports = [supports[sys.rho[path[t]] - 1] for t in occluded_pos]
            for draws in itertools.product(*pos_supports):
                wy = ws
                for y in draws:
                    wy *= cond[y]
                if wy == 0.0:
                    continue
                est = (base + sum(sys.f[y] for y in draws)) / n
                e1 += wy * est
                e2 += wy * est * est
    return e1, e2


def brute_force_occlusion_mean(
    sys: DiscreteSystem, n: int, pool_counts
) -> float:
    """E of the occluded estimator under the uniform-subset allocation.

    Pool sizes are fixed; within each region a uniformly random subset of
    the visit times (capped at the pool size) is occluded with independent
    restricted draws.  Enumerates paths, subsets and draws.
    """
    _check_enumerable(sys, n)
    pool_counts = np.asarray(pool_counts, dtype=np.int64)
    if pool_counts.size != sys.n_regions:
        raise InvalidStateError("pool_counts must have one entry per region")
    masses = sys.region_masses()
    cond = sys.p / masses[sys.rho - 1]
    supports = [sys.region_support(i + 1) for i in range(sys.n_regions)]
    mean = 0.0
    for path, w in _enumerate_paths(sys, n):
        region_times = [
            [t for t, x in enumerate(path) if sys.rho[x] == i]
            for i in range(1, sys.n_regions + 1)
        ]
        subset_options = []
        for i, times in enumerate(region_times):
            k_i = min(int(pool_counts[i]), len(times))
            combos = list(itertools.combinations(times, k_i))
            subset_options.append([(c, 1.0 / len(combos)) for c in combos])
        for chosen in itertools.product(*subset_options):
            wsub = w
            occluded_pos: list[int] = []
            for combo, pw in chosen:
                wsub *= pw
                occluded_pos.extend(combo)
            base = sum(sys.f[path[t]] for t in range(n) if t not in occluded_pos)
            pos_supports = [supports[sys.rho[path[t]] - 1] for t in occluded_pos]
            for draws in itertools.product(*pos_supports):
                wy = wsub
                for y in draws:
                    wy *= cond[y]
                if wy == 0.0:
                    continue
                mean += wy * (base + sum(sys.f[y] for y in draws)) / n
    return mean


def kernel_is_positive(sys: DiscreteSystem, tol: float = 1e-10) -> bool:
    """Nonnegative spectrum of the symmetrised p-weighted kernel."""
    d_sqrt = np.sqrt(sys.p)
    a = (d_sqrt[:, None] * sys.K) / d_sqrt[None, :]
    sym = 0.5 * (a + a.T)
    return bool(np.linalg.eigvalsh(sym).min() >= -tol)


@dataclass(frozen=True)
class DominanceReport:
    """Outcome of the variance-dominance checks on one system."""

    lemma_lhs: float
    lemma_rhs: float
    lemma_holds: bool
    piecewise_constant: bool
    centered_orthogonal: bool
    positive_kernel: bool
    dominance_expected: bool
    ideal_variance: float
    chain_variance: float
    dominance_holds: bool


def variance_dominance_check(sys: DiscreteSystem, n: int, tol: float = 1e-10) -> DominanceReport:
    """Check the projection inequality and, when a sufficient condition
    applies, dominance of the fully occluded estimator."""
    pair = resolution(sys)
    lemma_lhs = _stationary_average_variance(sys, pair.forward, n)
    lemma_rhs = _stationary_average_variance(sys, sys.f, n)
    piecewise = bool(np.max(np.abs(pair.orthogonal)) <= tol)
    mu = expectation(sys, sys.f)
    centered = bool(np.max(np.abs(pair.forward - mu)) <= tol)
    positive = kernel_is_positive(sys)
    expected = piecewise or (centered and positive)
    ideal = ideal_variance_formula(sys, n)
    chain = chain_variance_formula(sys, n)
    return DominanceReport(
        lemma_lhs=lemma_lhs,
        lemma_rhs=lemma_rhs,
        lemma_holds=lemma_lhs <= lemma_rhs + tol,
        piecewise_constant=piecewise,
        centered_orthogonal=centered,
        positive_kernel=positive,
        dominance_expected=expected,
        ideal_variance=ideal,
        chain_variance=chain,
        dominance_holds=ideal <= chain + tol,
    )


@dataclass(frozen=True)
class AcfResult:
    """Sample autocorrelations with a flag for constant input."""

    values: np.ndarray
    degenerate: bool


def acf(series, max_lag: int) -> AcfResult:
    """Biased-normalisation sample autocorrelation function up to max_lag."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidStateError("series must be one-dimensional")
    n = x.size
    if n <= max_lag:
        raise InvalidStateError("series length must exceed max_lag")
    centered = x - x.mean()
    denom = float(centered @ centered)
    values = np.zeros(max_lag + 1)
    values[0] = 1.0
    if denom <= 0.0:
        return AcfResult(values=values, degenerate=True)
    for k in range(1, max_lag + 1):
        values[k] = float(centered[:-k] @ centered[k:]) / denom
    return AcfResult(values=values, degenerate=False)


def _random_labels(rng: np.random.Generator, m: int, n_regions: int) -> np.ndarray:
    labels = np.concatenate(
        [
            np.arange(1, n_regions + 1),
            rng.integers(1, n_regions + 1, size=m - n_regions),
        ]
    )
    return rng.permutation(labels)


def random_reversible_system(
    rng: np.random.Generator, m: int = 3, n_regions: int = 2, lazy: bool = False
) -> DiscreteSystem:
    """Random target with a Metropolis kernel reversible for it."""
    if n_regions > m:
        raise InvalidStateError("need at least one state per region")
    p = rng.dirichlet(np.ones(m)) + 0.3
    p /= p.sum()
    w = rng.random((m, m))
    w = 0.5 * (w + w.T)
    w /= w.sum(axis=1).max() * 1.05
    K = np.zeros((m, m))
    for x in range(m):
        for y in range(m):
            if x != y:
                K[x, y] = w[x, y] * min(1.0, p[y] / p[x])
        K[x, x] = 1.0 - K[x].sum()
    if lazy:
        K = 0.5 * np.eye(m) + 0.5 * K
    return DiscreteSystem(
        p=p,
        K=K,
        f=rng.normal(size=m),
        rho=_random_labels(rng, m, n_regions),
        alpha=rng.random(n_regions),
    )


def random_nonreversible_system(
    rng: np.random.Generator, m: int = 3, n_regions: int = 2
) -> DiscreteSystem:
    """Uniform target with a mixture-of-permutations kernel (not reversible)."""
    if n_regions > m:
        raise InvalidStateError("need at least one state per region")
    perms = [rng.permutation(m) for _ in range(m + 1)]
    weights = rng.dirichlet(np.ones(len(perms)))
    K = np.zeros((m, m))
    for perm, w in zip(perms, weights):
        K[np.arange(m), perm] += w
    return DiscreteSystem(
        p=np.full(m, 1.0 / m),
        K=K,
        f=rng.normal(size=m),
        rho=_random_labels(rng, m, n_regions),
        alpha=rng.random(n_regions),
    )


def random_system(rng: np.random.Generator, m: int = 3, n_regions: int = 2) -> DiscreteSystem:
    """Random invariant system; mostly reversible, sometimes not."""
    if rng.random() < 0.7:
        return random_reversible_system(rng, m, n_regions, lazy=bool(rng.random() < 0.5))
    return random_nonreversible_system(rng, m, n_regions)


def random_region_refresh_system(
    rng: np.random.Generator, m: int = 3, n_regions: int = 2
) -> DiscreteSystem:
    """Random system whose kernel redraws the within-region state.

    Transitions factor as a region-level Metropolis move times the target's
    conditional within the destination region, so given the region path the
    states are independent restricted draws.  On this class the
    projection-average variance inequality is a law-of-total-variance fact;
    general kernels can violate it (see the documented counterexample).
    """
    if n_regions > m:
        raise InvalidStateError("need at least one state per region")
    rho = _random_labels(rng, m, n_regions)
    masses = rng.dirichlet(np.ones(n_regions)) + 0.3
    masses /= masses.sum()
    cond = np.empty(m)
    p = np.empty(m)
    for i in range(1, n_regions + 1):
        sel = np.flatnonzero(rho == i)
        c = rng.dirichlet(np.ones(sel.size)) + 0.2
        c /= c.sum()
        cond[sel] = c
        p[sel] = masses[i - 1] * c
    w = rng.random((n_regions, n_regions))
    w = 0.5 * (w + w.T)
    w /= w.sum(axis=1).max() * 1.05
    region_kernel = np.zeros((n_regions, n_regions))
    for a in range(n_regions):
        for b in range(n_regions):
            if a != b:
                region_kernel[a, b] = w[a, b] * min(1.0, masses[b] / masses[a])
        region_kernel[a, a] = 1.0 - region_kernel[a].sum()
    K = region_kernel[rho[:, None] - 1, rho[None, :] - 1] * cond[None, :]
    return DiscreteSystem(
        p=p,
        K=K,
        f=rng.normal(size=m),
        rho=rho,
        alpha=rng.random(n_regions),
    )
