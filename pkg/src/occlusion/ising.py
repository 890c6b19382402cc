"""Ising model on arbitrary graphs: single-site Metropolis, Wolff cluster
moves, Swendsen-Wang initialisation, stochastic-block-model graphs, and a
block-mean variational approximation with an exactly tabulated top level.

The potential follows the double-sum convention: each undirected edge is
counted twice, so the per-pair coupling is ``2 * j``.  All cluster bond
probabilities are derived from that pair coupling, which keeps every kernel
here exactly invariant for the measure ``exp(-beta * U) / Z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import RegionPartition
from .errors import ConfigError, ConsistencyError, EnumerationLimitError, InvalidStateError

MAX_EXACT_VERTICES = 16
MAX_WOLFF_MATRIX_VERTICES = 6
MAX_CLUSTER_COUNT = 20


@dataclass(frozen=True)
class SpinGraph:
    """Undirected interaction graph with inverse temperature and coupling."""

    n: int
    edges: np.ndarray
    beta: float
    j: float = 1.0
    neighbors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            edges = np.sort(edges, axis=1)
            edges = np.unique(edges, axis=0)
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ConsistencyError("self-loops are not allowed")
            if edges.min() < 0 or edges.max() >= self.n:
                raise ConsistencyError("edge endpoint out of range")
        object.__setattr__(self, "edges", edges)
        if self.beta < 0:
            raise InvalidStateError("beta must be >= 0")
        if not self.j > 0:
            raise InvalidStateError("ferromagnetic coupling requires j > 0")
        adjacency: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in edges:
            adjacency[u].append(int(v))
            adjacency[v].append(int(u))
        object.__setattr__(
            self,
            "neighbors",
            tuple(np.asarray(sorted(nbrs), dtype=np.int64) for nbrs in adjacency),
        )

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]


def uniform_config(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random spin configuration."""
    return np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)


def validate_config(sigma: np.ndarray, n: int) -> np.ndarray:
    sigma = np.asarray(sigma)
    if sigma.shape != (n,) or not np.all(np.abs(sigma) == 1):
        raise InvalidStateError("spin configuration must be a length-n vector of +/-1")
    return sigma


def potential(sigma: np.ndarray, graph: SpinGraph) -> float:
    """Doubly counted interaction energy: -j * sum_i sum_{neighbours} s_i s_j."""
    if graph.edge_count == 0:
        return 0.0
    eu, ev = graph.edges[:, 0], graph.edges[:, 1]
    return -2.0 * graph.j * float(np.sum(sigma[eu].astype(np.int64) * sigma[ev]))


def magnetisation(sigma: np.ndarray) -> float:
    """Mean spin over the whole graph."""
    return float(np.mean(sigma))


@dataclass(frozen=True)
class IsingTarget:
    """Unnormalised log-density exp(-beta * U) of a spin graph."""

    graph: SpinGraph

    def log_density_unnorm(self, sigma: np.ndarray) -> float:
        return -self.graph.beta * potential(sigma, self.graph)


def _flip_delta_u(sigma: np.ndarray, graph: SpinGraph, vertex: int) -> float:
    """Energy change from flipping one vertex, from its neighbourhood only."""
    nbrs = graph.neighbors[vertex]
    if nbrs.size == 0:
        return 0.0
    h = int(np.sum(sigma[nbrs], dtype=np.int64))
    return 4.0 * graph.j * float(sigma[vertex]) * h


def metropolis_step(
    sigma: np.ndarray, graph: SpinGraph, rng: np.random.Generator
) -> np.ndarray:
    """Single-site flip proposal accepted with min(1, exp(-beta * dU))."""
    vertex = int(rng.integers(graph.n))
    delta_u = _flip_delta_u(sigma, graph, vertex)
    accept = delta_u <= 0.0 or rng.random() < math.exp(-graph.beta * delta_u)
    new = sigma.copy()
    if accept:
        new[vertex] = -new[vertex]
    return new


def cluster_bond_probability(graph: SpinGraph) -> float:
    """Open-bond probability on an aligned edge.

    The doubled edge count makes the per-pair coupling ``2 * j``, so the
    probability that keeps cluster flips exactly invariant is
    ``1 - exp(-2 * beta * (2 * j))``.
    """
    return -math.expm1(-4.0 * graph.beta * graph.j)


def wolff_step(sigma: np.ndarray, graph: SpinGraph, rng: np.random.Generator) -> np.ndarray:
    """Grow an aligned cluster from a uniform seed and flip it wholesale.

    Every edge from the growing cluster to an aligned outside vertex gets an
    independent inclusion coin, so the cluster is the seed's component under
    bond percolation on aligned edges.
    """
    p_add = cluster_bond_probability(graph)
    seed = int(rng.integers(graph.n))
    seed_spin = sigma[seed]
    in_cluster = np.zeros(graph.n, dtype=bool)
    in_cluster[seed] = True
    stack = [seed]
    while stack:
        current = stack.pop()
        for nb in graph.neighbors[current]:
            if not in_cluster[nb] and sigma[nb] == seed_spin:
                if rng.random() < p_add:
                    in_cluster[nb] = True
                    stack.append(int(nb))
    new = sigma.copy()
    new[in_cluster] = -new[in_cluster]
    return new


@dataclass
class MetropolisKernel:
    graph: SpinGraph

    def step(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return metropolis_step(state, self.graph, rng)


@dataclass
class WolffKernel:
    graph: SpinGraph

    def step(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return wolff_step(state, self.graph, rng)


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def swendsen_wang_step(
    sigma: np.ndarray, graph: SpinGraph, rng: np.random.Generator
) -> np.ndarray:
    """Bond percolation on aligned edges, then uniform relabel per component."""
    p_bond = cluster_bond_probability(graph)
    uf = _UnionFind(graph.n)
    if graph.edge_count:
        eu, ev = graph.edges[:, 0], graph.edges[:, 1]
        aligned = sigma[eu] == sigma[ev]
        opens = aligned & (rng.random(graph.edge_count) < p_bond)
        for u, v in graph.edges[opens]:
            uf.union(int(u), int(v))
    fresh = np.where(rng.random(graph.n) < 0.5, 1, -1).astype(np.int8)
    new = np.empty(graph.n, dtype=np.int8)
    for v in range(graph.n):
        new[v] = fresh[uf.find(v)]
    return new


def sw_schedule(target_uncoupled_prob: float, block_length: int) -> int:
    """Total Swendsen-Wang steps under the halving-block burn-in rule.

    A block of ``block_length`` steps is assumed to couple with probability
    at least one half, so the uncoupling probability halves per block.
    """
    if not 0.0 < target_uncoupled_prob < 1.0:
        raise ConfigError("target uncoupled probability must lie in (0, 1)")
    if block_length < 1:
        raise ConfigError("block length must be >= 1")
    blocks = max(1, math.ceil(math.log2(1.0 / target_uncoupled_prob)))
    return blocks * block_length


def swendsen_wang_init(
    graph: SpinGraph,
    target_uncoupled_prob: float,
    rng: np.random.Generator,
    block_length: Optional[int] = None,
) -> np.ndarray:
    """Burn a Swendsen-Wang chain in from a uniform start and return its end.

    The default block length of ``10 * n`` sweeps is a pragmatic stand-in
    for lattice coupling-time bounds, which do not transfer to arbitrary
    graphs; override it when a better bound is known.
    """
    length = 10 * graph.n if block_length is None else block_length
    total = sw_schedule(target_uncoupled_prob, length)
    sigma = uniform_config(graph.n, rng)
    for _ in range(total):
        sigma = swendsen_wang_step(sigma, graph, rng)
    return sigma


def sbm_graph(
    n: int,
    k: int,
    rng: np.random.Generator,
    intra: float = 0.8,
    inter: float = 0.01,
    beta: float = 1.0,
    j: float = 1.0,
) -> tuple[SpinGraph, np.ndarray]:
    """Stochastic block model with community sizes uniform over compositions.

    Sizes come from ``k - 1`` distinct uniform cut points of ``1..n-1``;
    intra-community pairs get edges with probability ``intra``, others with
    ``inter``.
    """
    if k > n:
        raise ConfigError("cannot split n vertices into more than n communities")
    if k < 1:
        raise ConfigError("need at least one community")
    if k == 1:
        sizes = np.array([n])
    else:
        cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
        sizes = np.diff(np.concatenate(([0], cuts, [n])))
    membership = np.repeat(np.arange(k), sizes)
    iu, iv = np.triu_indices(n, k=1)
    probs = np.where(membership[iu] == membership[iv], intra, inter)
    keep = rng.random(iu.size) < probs
    edges = np.column_stack([iu[keep], iv[keep]])
    return SpinGraph(n=n, edges=edges, beta=beta, j=j), membership


@dataclass(frozen=True)
class ClusterGraph:
    """Collapsed graph whose nodes are vertex clusters of the original."""

    k: int
    membership: np.ndarray
    jtilde: np.ndarray
    beta_tilde: float
    epsilon: float

    def __post_init__(self) -> None:
        membership = np.asarray(self.membership, dtype=np.int64)
        jtilde = np.asarray(self.jtilde, dtype=np.float64)
        object.__setattr__(self, "membership", membership)
        object.__setattr__(self, "jtilde", jtilde)
        if membership.min(initial=0) < 0 or membership.max(initial=0) >= self.k:
            raise ConsistencyError("membership labels must lie in 0..k-1")
        if jtilde.shape != (self.k, self.k) or not np.array_equal(jtilde, jtilde.T):
            raise ConsistencyError("jtilde must be a symmetric k x k matrix")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidStateError("epsilon must lie in (0, 1)")
        if self.beta_tilde < 0.0:
            raise InvalidStateError("beta_tilde must be >= 0")


def _logsumexp_exact(values: np.ndarray) -> float:
    """Order-independent log-sum-exp (exactly rounded inner sum)."""
    top = float(np.max(values))
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(np.exp(values - top)))


@dataclass(frozen=True)
class VariationalIsing:
    """Block-mean approximation: exact table over cluster-mean sign patterns,
    then independent Rademacher spins within each cluster."""

    clusters: ClusterGraph
    patterns: np.ndarray
    log_weights: np.ndarray
    probs: np.ndarray
    log_z: float
    _signs: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _sizes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_signs", self.patterns > 0)
        object.__setattr__(self, "_cum", np.cumsum(self.probs))
        object.__setattr__(
            self,
            "_sizes",
            np.bincount(self.clusters.membership, minlength=self.clusters.k),
        )

    @property
    def magnitude(self) -> float:
        return 1.0 - self.clusters.epsilon

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return variational_sample(self, rng)

    def log_density_unnorm(self, sigma: np.ndarray) -> float:
        return variational_log_density(sigma, self)


def variational_build(
    graph: SpinGraph,
    membership: np.ndarray,
    beta_tilde: float,
    epsilon: float,
) -> VariationalIsing:
    """Tabulate the cluster-mean distribution exactly over all 2^k patterns."""
    membership = np.asarray(membership, dtype=np.int64)
    if membership.size != graph.n:
        raise ConsistencyError("membership must label every vertex")
    k = int(membership.max()) + 1 if membership.size else 1
    if k > MAX_CLUSTER_COUNT:
        raise EnumerationLimitError(f"cluster table limited to k <= {MAX_CLUSTER_COUNT}")
    jtilde = np.zeros((k, k))
    for u, v in graph.edges:
        cu, cv = membership[u], membership[v]
        if cu != cv:
            jtilde[cu, cv] += 1.0
            jtilde[cv, cu] += 1.0
    clusters = ClusterGraph(
        k=k, membership=membership, jtilde=jtilde, beta_tilde=beta_tilde, epsilon=epsilon
    )
    magnitude = 1.0 - epsilon
    idx = np.arange(2**k)
    bits = (idx[:, None] >> np.arange(k)[None, :]) & 1
    patterns = np.where(bits == 1, magnitude, -magnitude)
    # Doubly counted cluster energy; diagonal of jtilde is zero by build.
    energy = -np.einsum("pi,ij,pj->p", patterns, jtilde, patterns)
    log_unnorm = -beta_tilde * energy
    log_z = _logsumexp_exact(log_unnorm)
    log_weights = log_unnorm - log_z
    return VariationalIsing(
        clusters=clusters,
        patterns=patterns,
        log_weights=log_weights,
        probs=np.exp(log_weights),
        log_z=log_z,
    )


def variational_sample(v: VariationalIsing, rng: np.random.Generator) -> np.ndarray:
    """Draw a pattern from the exact table, then spins cluster by cluster."""
    idx = int(np.searchsorted(v._cum, rng.random(), side="right"))
    idx = min(idx, v.patterns.shape[0] - 1)
    mu = v.patterns[idx][v.clusters.membership]
    u = rng.random(mu.size)
    return np.where(u < (1.0 + mu) / 2.0, 1, -1).astype(np.int8)


def variational_log_density(sigma: np.ndarray, v: VariationalIsing) -> float:
    """Log of the pattern-mixture density.

    The inner sum is exactly rounded, which together with the sign symmetry
    of the table makes the value invariant under global spin flips bit for
    bit.
    """
    membership = v.clusters.membership
    k = v.clusters.k
    c_plus = np.bincount(membership[sigma > 0], minlength=k).astype(np.float64)
    c_minus = v._sizes.astype(np.float64) - c_plus
    magnitude = v.magnitude
    lp = math.log((1.0 + magnitude) / 2.0)
    lm = math.log((1.0 - magnitude) / 2.0)
    plus_term = c_plus * lp + c_minus * lm
    minus_term = c_plus * lm + c_minus * lp
    log_cond = np.where(v._signs, plus_term, minus_term).sum(axis=1)
    return _logsumexp_exact(log_cond + v.log_weights)


@dataclass(frozen=True)
class CalibrationResult:
    partition: RegionPartition
    log_rn_trajectory: np.ndarray


def threshold_calibration(
    graph: SpinGraph,
    v: VariationalIsing,
    wolff_steps: int,
    rng: np.random.Generator,
) -> CalibrationResult:
    """Region thresholds from the density-ratio values of a Wolff run.

    The lower threshold is the lower-median order statistic and the upper
    one the maximum, giving three regions.  If the two coincide the
    partition collapses to two regions with a warning.
    """
    if wolff_steps < 1:
        raise ConfigError("calibration needs at least one step")
    target = IsingTarget(graph)
    sigma = uniform_config(graph.n, rng)
    log_rns = np.empty(wolff_steps)
    for t in range(wolff_steps):
        sigma = wolff_step(sigma, graph, rng)
        log_rns[t] = target.log_density_unnorm(sigma) - variational_log_density(sigma, v)
    ordered = np.sort(log_rns)
    c1 = float(ordered[(wolff_steps - 1) // 2])
    c2 = float(ordered[-1])
    if c1 == c2:
        warnings.warn(
            "degenerate density-ratio trajectory: collapsing to two regions",
            RuntimeWarning,
            stacklevel=2,
        )
        partition = RegionPartition.from_log_thresholds([c2])
    else:
        partition = RegionPartition.from_log_thresholds([c1, c2])
    return CalibrationResult(partition=partition, log_rn_trajectory=log_rns)


# --- exact enumeration oracles -------------------------------------------


def ising_states(n: int) -> np.ndarray:
    """All spin configurations, row ``i`` encoding the bits of ``i``."""
    if n > MAX_EXACT_VERTICES:
        raise EnumerationLimitError(f"state enumeration limited to n <= {MAX_EXACT_VERTICES}")
    bits = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def _all_potentials(graph: SpinGraph, states: np.ndarray) -> np.ndarray:
    if graph.edge_count == 0:
        return np.zeros(states.shape[0])
    eu, ev = graph.edges[:, 0], graph.edges[:, 1]
    inter = np.sum(states[:, eu].astype(np.int64) * states[:, ev], axis=1)
    return -2.0 * graph.j * inter


def ising_equilibrium(graph: SpinGraph) -> np.ndarray:
    """Exact probabilities of every configuration."""
    states = ising_states(graph.n)
    log_w = -graph.beta * _all_potentials(graph, states)
    log_w -= log_w.max()
    w = np.exp(log_w)
    return w / w.sum()


def exact_magnetisation(graph: SpinGraph) -> float:
    """Exact expectation of the mean spin (zero by flip symmetry)."""
    states = ising_states(graph.n)
    probs = ising_equilibrium(graph)
    return float(probs @ states.mean(axis=1))


def metropolis_transition_matrix(graph: SpinGraph) -> np.ndarray:
    """Exact single-site Metropolis matrix over all configurations."""
    states = ising_states(graph.n)
    n_states = states.shape[0]
    matrix = np.zeros((n_states, n_states))
    for idx in range(n_states):
        sigma = states[idx]
        for vertex in range(graph.n):
            delta_u = _flip_delta_u(sigma, graph, vertex)
            accept = 1.0 if delta_u <= 0 else math.exp(-graph.beta * delta_u)
            flipped = idx ^ (1 << vertex)
            matrix[idx, flipped] += accept / graph.n
            matrix[idx, idx] += (1.0 - accept) / graph.n
    return matrix


def wolff_transition_matrix(graph: SpinGraph) -> np.ndarray:
    """Exact Wolff matrix by enumerating seeds and aligned-bond patterns.

    The cluster law equals the seed's percolation component on aligned
    edges, so summing over every open/closed bond pattern is exhaustive.
    """
    if graph.n > MAX_WOLFF_MATRIX_VERTICES:
        raise EnumerationLimitError(
            f"wolff matrix enumeration limited to n <= {MAX_WOLFF_MATRIX_VERTICES}"
        )
    p_add = cluster_bond_probability(graph)
    states = ising_states(graph.n)
    n_states = states.shape[0]
    matrix = np.zeros((n_states, n_states))
    seed_weight = 1.0 / graph.n
    for idx in range(n_states):
        sigma = states[idx]
        aligned = [
            (int(u), int(v)) for u, v in graph.edges if sigma[u] == sigma[v]
        ]
        n_bonds = len(aligned)
        for pattern in range(2**n_bonds):
            weight = 1.0
            uf = _UnionFind(graph.n)
            for b, (u, v) in enumerate(aligned):
                if (pattern >> b) & 1:
                    weight *= p_add
                    uf.union(u, v)
                else:
                    weight *= 1.0 - p_add
            if weight == 0.0:
                continue
            for seed in range(graph.n):
                root = uf.find(seed)
                mask = 0
                for vertex in range(graph.n):
                    if uf.find(vertex) == root:
                        mask |= 1 << vertex
                matrix[idx, idx ^ mask] += seed_weight * weight
    return matrix


# --- edge-list import/export ----------------------------------------------


def save_graph(path, graph: SpinGraph, membership: Optional[np.ndarray] = None) -> None:
    """Write ``n``, one ``u v`` pair per line, and an optional membership block."""
    lines = [f"n {graph.n}"]
    lines.extend(f"{u} {v}" for u, v in graph.edges)
    if membership is not None:
        lines.append("membership " + " ".join(str(int(c)) for c in membership))
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> tuple[int, np.ndarray, Optional[np.ndarray]]:
    """Read a graph file written by :func:`save_graph`."""
    n: Optional[int] = None
    edges: list[tuple[int, int]] = []
    membership: Optional[np.ndarray] = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "n":
            n = int(parts[1])
        elif parts[0] == "membership":
            membership = np.asarray([int(c) for c in parts[1:]], dtype=np.int64)
        elif len(parts) == 2:
            edges.append((int(parts[0]), int(parts[1])))
        else:
            raise ConfigError(f"unrecognised graph line {lineno}: {raw!r}")
    if n is None:
        raise ConfigError("graph file is missing the 'n <count>' header")
    return n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), membership
