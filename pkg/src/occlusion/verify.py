"""Oracle verification suite behind the ``verify`` CLI subcommand.

Every check compares a closed-form quantity against an independent exact
route (path enumeration, full state enumeration, or an algebraic identity)
and reports its worst absolute residual.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import ising as ising_mod
from . import theory

VERIFY_SEED = 20_240_901


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


def _max_over_systems(rng, count, fn, m=3, n_regions=2) -> float:
    worst = 0.0
    for _ in range(count):
        sys = theory.random_system(rng, m=m, n_regions=n_regions)
        worst = max(worst, fn(sys))
    return worst


def check_resolution_orthogonality(rng, count: int = 50) -> CheckResult:
    def residual(sys):
        pair = theory.resolution(sys)
        centered_fwd = pair.forward - float(sys.p @ pair.forward)
        return abs(float(sys.p @ (centered_fwd * pair.orthogonal)))

    return CheckResult("resolution orthogonality", _max_over_systems(rng, count, residual), 1e-12)


def check_variance_decomposition(rng, count: int = 50) -> CheckResult:
    def residual(sys):
        pair = theory.resolution(sys)
        return abs(
            theory.variance(sys, sys.f)
            - theory.variance(sys, pair.forward)
            - theory.variance(sys, pair.orthogonal)
        )

    return CheckResult("variance decomposition", _max_over_systems(rng, count, residual), 1e-12)


def check_proportional_identity(rng, count: int = 50) -> CheckResult:
    def residual(sys):
        lhs, rhs = theory.proportional_variance_identity(sys, n=7)
        return abs(lhs - rhs)

    return CheckResult("proportional allocation identity", _max_over_systems(rng, count, residual), 1e-12)


def check_ideal_variance(rng, count: int = 50) -> CheckResult:
    worst = 0.0
    for _ in range(count):
        sys = theory.random_system(rng, m=3)
        for n in (1, 2, 3, 4):
            worst = max(
                worst,
                abs(
                    theory.ideal_variance_formula(sys, n)
                    - theory.brute_force_ideal_variance(sys, n)
                ),
            )
    return CheckResult("fully occluded variance vs enumeration", worst, 1e-10)


def check_occluded_variance(rng, count: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(count):
        sys = theory.random_system(rng, m=3)
        for n in (1, 2, 3):
            worst = max(
                worst,
                abs(
                    theory.occluded_variance_formula(sys, n)
                    - theory.brute_force_occluded_variance(sys, n)
                ),
            )
    return CheckResult("occluded variance vs enumeration", worst, 1e-10)


def check_projection_inequality(rng, count: int = 200) -> CheckResult:
    # Region-refresh kernels: the class on which the projection-average
    # inequality is provable.  General kernels can break it.
    worst = 0.0
    for _ in range(count):
        sys = theory.random_region_refresh_system(rng, m=4, n_regions=2)
        for n in (1, 2, 3, 4):
            report = theory.variance_dominance_check(sys, n=n)
            worst = max(worst, report.lemma_lhs - report.lemma_rhs)
    return CheckResult("projection-average variance inequality", worst, 1e-12)


def antithetic_witness_system() -> theory.DiscreteSystem:
    """Two-state flip chain where full occlusion raises the variance."""
    return theory.DiscreteSystem(
        p=[0.5, 0.5],
        K=[[0.0, 1.0], [1.0, 0.0]],
        f=[1.0, -1.0],
        rho=[1, 1],
        alpha=[1.0],
    )


def check_antithetic_witness() -> CheckResult:
    sys = antithetic_witness_system()
    chain = theory.brute_force_chain_variance(sys, n=2)
    ideal = theory.brute_force_ideal_variance(sys, n=2)
    # chain minus ideal must be clearly negative: occlusion hurts here.
    return CheckResult("antithetic witness (chain var minus ideal var)", chain - ideal, -1e-6)


def check_occlusion_unbiasedness() -> CheckResult:
    # Uniform-subset allocation is exactly unbiased when states refresh
    # within regions given the region path; the kernel-law estimator is
    # unbiased for every chain (checked separately below).
    rng = np.random.default_rng(VERIFY_SEED + 7)
    worst = 0.0
    for _ in range(5):
        sys = theory.random_region_refresh_system(rng, m=3, n_regions=2)
        mu = theory.expectation(sys, sys.f)
        for counts in itertools.product((0, 1, 2, 4), repeat=2):
            est = theory.brute_force_occlusion_mean(sys, 3, counts)
            worst = max(worst, abs(est - mu))
    return CheckResult("occlusion unbiasedness (subset allocation)", worst, 1e-12)


def check_process_unbiasedness() -> CheckResult:
    rng = np.random.default_rng(VERIFY_SEED + 23)
    worst = 0.0
    for _ in range(10):
        sys = theory.random_system(rng, m=3, n_regions=2)
        mu = theory.expectation(sys, sys.f)
        for n in (1, 2, 3):
            est = theory.brute_force_occluded_mean(sys, n)
            worst = max(worst, abs(est - mu))
    return CheckResult("occlusion unbiasedness (layered kernel law)", worst, 1e-12)


def all_graphs_up_to(n_max: int, beta: float):
    """Every labelled simple graph on 1..n_max vertices at one temperature."""
    for n in range(1, n_max + 1):
        pairs = list(itertools.combinations(range(n), 2))
        for mask in range(2 ** len(pairs)):
            edges = [pairs[b] for b in range(len(pairs)) if (mask >> b) & 1]
            yield ising_mod.SpinGraph(
                n=n, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2), beta=beta
            )


def check_metropolis_invariance(beta: float = 0.7) -> CheckResult:
    worst = 0.0
    for graph in all_graphs_up_to(4, beta):
        pi = ising_mod.ising_equilibrium(graph)
        kmat = ising_mod.metropolis_transition_matrix(graph)
        worst = max(worst, float(np.max(np.abs(pi @ kmat - pi))))
    return CheckResult("metropolis invariance (all graphs n<=4)", worst, 1e-12)


def check_metropolis_detailed_balance(beta: float = 0.7) -> CheckResult:
    worst = 0.0
    for graph in all_graphs_up_to(4, beta):
        pi = ising_mod.ising_equilibrium(graph)
        kmat = ising_mod.metropolis_transition_matrix(graph)
        flow = pi[:, None] * kmat
        worst = max(worst, float(np.max(np.abs(flow - flow.T))))
    return CheckResult("metropolis detailed balance", worst, 1e-12)


def check_wolff_invariance(beta: float = 0.7) -> CheckResult:
    worst = 0.0
    for graph in all_graphs_up_to(4, beta):
        pi = ising_mod.ising_equilibrium(graph)
        kmat = ising_mod.wolff_transition_matrix(graph)
        worst = max(worst, float(np.max(np.abs(pi @ kmat - pi))))
    return CheckResult("wolff invariance (all graphs n<=4)", worst, 1e-12)


def check_magnetisation_zero() -> CheckResult:
    rng = np.random.default_rng(VERIFY_SEED + 11)
    worst = 0.0
    for beta in (0.01, 1.0):
        graph, _ = ising_mod.sbm_graph(10, 2, rng, beta=beta)
        worst = max(worst, abs(ising_mod.exact_magnetisation(graph)))
    return CheckResult("exact magnetisation zero (n=10)", worst, 1e-12)


def check_variational_normalisation() -> CheckResult:
    rng = np.random.default_rng(VERIFY_SEED + 13)
    worst = 0.0
    for n, k in ((6, 2), (8, 3), (10, 3)):
        graph, membership = ising_mod.sbm_graph(n, k, rng, beta=0.4)
        v = ising_mod.variational_build(graph, membership, beta_tilde=0.2, epsilon=0.3)
        states = ising_mod.ising_states(n)
        total = sum(
            np.exp(ising_mod.variational_log_density(states[i], v))
            for i in range(states.shape[0])
        )
        worst = max(worst, abs(total - 1.0))
    return CheckResult("variational density normalisation", worst, 1e-10)


def check_variational_symmetry() -> CheckResult:
    rng = np.random.default_rng(VERIFY_SEED + 17)
    graph, membership = ising_mod.sbm_graph(10, 3, rng, beta=0.4)
    v = ising_mod.variational_build(graph, membership, beta_tilde=0.2, epsilon=0.3)
    states = ising_mod.ising_states(10)
    worst = 0.0
    for i in range(states.shape[0]):
        a = ising_mod.variational_log_density(states[i], v)
        b = ising_mod.variational_log_density(-states[i], v)
        worst = max(worst, abs(a - b))
    return CheckResult("variational flip symmetry (exact)", worst, 1e-16)


def run_checks() -> list[CheckResult]:
    rng = np.random.default_rng(VERIFY_SEED)
    return [
        check_resolution_orthogonality(rng),
        check_variance_decomposition(rng),
        check_proportional_identity(rng),
        check_ideal_variance(rng),
        check_occluded_variance(rng),
        check_projection_inequality(rng),
        check_antithetic_witness(),
        check_occlusion_unbiasedness(),
        check_process_unbiasedness(),
        check_metropolis_invariance(),
        check_metropolis_detailed_balance(),
        check_wolff_invariance(),
        check_magnetisation_zero(),
        check_variational_normalisation(),
        check_variational_symmetry(),
    ]


def render_table(results: list[CheckResult]) -> str:
    name_width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(name_width)}  {'residual':>12}  {'tol':>9}  status"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(name_width)}  {r.residual:>12.3e}  {r.tol:>9.1e}  {status}")
    return "\n".join(lines)
