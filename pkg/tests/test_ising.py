"""Spin-graph potential, samplers, block-model graphs, and the block-mean
variational approximation, checked against exact enumeration."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlusion.errors import ConfigError, ConsistencyError, EnumerationLimitError
from occlusion.ising import (
    IsingTarget,
    SpinGraph,
    cluster_bond_probability,
    exact_magnetisation,
    ising_equilibrium,
    ising_states,
    load_graph,
    magnetisation,
    metropolis_step,
    metropolis_transition_matrix,
    potential,
    save_graph,
    sbm_graph,
    sw_schedule,
    swendsen_wang_init,
    swendsen_wang_step,
    threshold_calibration,
    uniform_config,
    variational_build,
    variational_log_density,
    variational_sample,
    wolff_step,
    wolff_transition_matrix,
    _flip_delta_u,
)

TRIANGLE = np.array([[0, 1], [1, 2], [0, 2]])
FOUR_CYCLE = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])


def triangle(beta=1.0):
    return SpinGraph(n=3, edges=TRIANGLE, beta=beta)


class TestPotential:
    def test_triangle_counts_each_edge_twice(self):
        assert potential(np.array([1, 1, 1], dtype=np.int8), triangle()) == -6.0

    def test_four_cycle_antialigned(self):
        graph = SpinGraph(n=4, edges=FOUR_CYCLE, beta=1.0)
        assert potential(np.array([1, -1, 1, -1], dtype=np.int8), graph) == 8.0

    def test_infinite_temperature_measure_is_uniform(self):
        graph = triangle(beta=0.0)
        assert np.allclose(ising_equilibrium(graph), 1.0 / 8.0, atol=1e-15)

    def test_flip_symmetry_exact(self):
        graph = triangle(beta=0.7)
        states = ising_states(3)
        for sigma in states:
            assert potential(sigma, graph) == potential(-sigma, graph)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_local_energy_difference_matches_recompute(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        graph, _ = sbm_graph(n, min(2, n), rng, beta=0.5)
        sigma = uniform_config(n, rng)
        vertex = int(rng.integers(n))
        flipped = sigma.copy()
        flipped[vertex] = -flipped[vertex]
        # exact integer arithmetic on both routes
        assert _flip_delta_u(sigma, graph, vertex) == potential(flipped, graph) - potential(
            sigma, graph
        )


class TestMetropolis:
    def test_infinite_temperature_always_flips_one_spin(self):
        graph = triangle(beta=0.0)
        rng = np.random.default_rng(0)
        sigma = np.array([1, 1, -1], dtype=np.int8)
        for _ in range(50):
            nxt = metropolis_step(sigma, graph, rng)
            assert int(np.sum(nxt != sigma)) == 1
            sigma = nxt

    def test_isolated_vertices_always_accept(self):
        graph = SpinGraph(n=3, edges=np.zeros((0, 2)), beta=2.0)
        rng = np.random.default_rng(1)
        sigma = np.array([1, -1, 1], dtype=np.int8)
        for _ in range(50):
            nxt = metropolis_step(sigma, graph, rng)
            assert int(np.sum(nxt != sigma)) == 1
            sigma = nxt

    def test_triangle_invariance_and_detailed_balance(self):
        graph = triangle(beta=1.0)
        pi = ising_equilibrium(graph)
        K = metropolis_transition_matrix(graph)
        assert np.max(np.abs(K.sum(axis=1) - 1.0)) < 1e-12
        assert np.max(np.abs(pi @ K - pi)) < 1e-12
        flow = pi[:, None] * K
        assert np.max(np.abs(flow - flow.T)) < 1e-12


class TestWolff:
    def test_infinite_temperature_flips_only_seed(self):
        graph = triangle(beta=0.0)
        rng = np.random.default_rng(2)
        sigma = np.array([1, 1, 1], dtype=np.int8)
        nxt = wolff_step(sigma, graph, rng)
        assert int(np.sum(nxt != sigma)) == 1

    def test_zero_temperature_flips_whole_graph(self):
        graph = triangle(beta=50.0)
        assert cluster_bond_probability(graph) == 1.0
        rng = np.random.default_rng(3)
        sigma = np.array([1, 1, 1], dtype=np.int8)
        nxt = wolff_step(sigma, graph, rng)
        assert np.array_equal(nxt, -sigma)
        assert magnetisation(nxt) == -magnetisation(sigma)

    def test_triangle_invariance(self):
        graph = triangle(beta=0.7)
        pi = ising_equilibrium(graph)
        K = wolff_transition_matrix(graph)
        assert np.max(np.abs(K.sum(axis=1) - 1.0)) < 1e-12
        assert np.max(np.abs(pi @ K - pi)) < 1e-12

    def test_step_cluster_law_matches_enumerated_matrix(self):
        # empirical transition frequencies from one state against the
        # enumerated matrix row
        graph = triangle(beta=0.4)
        states = ising_states(3)
        K = wolff_transition_matrix(graph)
        start_idx = 6  # (+1, +1, -1) under bit encoding
        start = states[start_idx]
        rng = np.random.default_rng(4)
        n = 40_000
        counts = np.zeros(8)
        encode = lambda s: int(np.sum((s > 0) * (1 << np.arange(3))))
        assert encode(start) == start_idx
        for _ in range(n):
            counts[encode(wolff_step(start, graph, rng))] += 1
        for j in range(8):
            se = math.sqrt(max(K[start_idx, j] * (1 - K[start_idx, j]), 1e-12) / n)
            assert abs(counts[j] / n - K[start_idx, j]) < 4 * se + 1e-9


class TestSwendsenWang:
    def test_schedule_single_block(self):
        assert sw_schedule(0.5, 7) == 7

    def test_schedule_fourteen_blocks(self):
        assert sw_schedule(1e-4, 10) == 140

    def test_schedule_rejects_bad_target(self):
        with pytest.raises(ConfigError):
            sw_schedule(0.0, 5)
        with pytest.raises(ConfigError):
            sw_schedule(1.0, 5)

    def test_infinite_temperature_step_is_exact_uniform(self):
        graph = SpinGraph(n=2, edges=np.array([[0, 1]]), beta=0.0)
        rng = np.random.default_rng(5)
        counts = np.zeros(4)
        n = 40_000
        sigma = np.array([1, 1], dtype=np.int8)
        for _ in range(n):
            out = swendsen_wang_step(sigma, graph, rng)
            counts[int(out[0] > 0) + 2 * int(out[1] > 0)] += 1
        se = math.sqrt(0.25 * 0.75 / n)
        assert np.all(np.abs(counts / n - 0.25) < 4 * se)

    def test_init_runs_and_returns_valid_config(self):
        rng = np.random.default_rng(6)
        graph, _ = sbm_graph(12, 2, rng, beta=0.5)
        sigma = swendsen_wang_init(graph, 1e-4, rng, block_length=5)
        assert sigma.shape == (12,)
        assert np.all(np.abs(sigma) == 1)

    def test_init_validates_target(self):
        graph = triangle()
        with pytest.raises(ConfigError):
            swendsen_wang_init(graph, 1.5, np.random.default_rng(0))


class TestSbmGraph:
    def test_single_community_is_dense_bernoulli(self):
        rng = np.random.default_rng(7)
        graph, membership = sbm_graph(30, 1, rng)
        assert np.all(membership == 0)
        pairs = 30 * 29 // 2
        rate = graph.edge_count / pairs
        assert abs(rate - 0.8) < 4 * math.sqrt(0.8 * 0.2 / pairs)

    def test_all_singletons_only_inter_edges(self):
        rng = np.random.default_rng(8)
        total_edges = 0
        pairs = 10 * 9 // 2
        draws = 400
        for _ in range(draws):
            graph, membership = sbm_graph(10, 10, rng)
            assert sorted(membership.tolist()) == list(range(10))
            total_edges += graph.edge_count
        rate = total_edges / (pairs * draws)
        assert abs(rate - 0.01) < 4 * math.sqrt(0.01 * 0.99 / (pairs * draws))

    def test_too_many_communities_rejected(self):
        with pytest.raises(ConfigError):
            sbm_graph(5, 6, np.random.default_rng(0))

    def test_intra_edge_count_matches_conditional_expectation(self):
        rng = np.random.default_rng(9)
        diffs = []
        for _ in range(10_000):
            graph, membership = sbm_graph(20, 3, rng)
            sizes = np.bincount(membership, minlength=3)
            expected = 0.8 * float(np.sum(sizes * (sizes - 1) / 2))
            intra = int(
                np.sum(membership[graph.edges[:, 0]] == membership[graph.edges[:, 1]])
            )
            diffs.append(intra - expected)
        diffs = np.asarray(diffs)
        se = diffs.std(ddof=1) / math.sqrt(diffs.size)
        assert abs(diffs.mean()) < 3 * se


def two_cluster_variational(epsilon=0.1, beta_tilde=0.5):
    # five vertices, five edges between the two clusters, none inside
    edges = np.array([[0, 3], [0, 4], [1, 3], [1, 4], [2, 3]])
    graph = SpinGraph(n=5, edges=edges, beta=1.0)
    membership = np.array([0, 0, 0, 1, 1])
    return graph, variational_build(graph, membership, beta_tilde, epsilon)


class TestVariational:
    def test_single_cluster_table_is_uniform(self):
        graph = SpinGraph(n=4, edges=np.array([[0, 1], [2, 3]]), beta=1.0)
        v = variational_build(graph, np.zeros(4, dtype=int), beta_tilde=0.5, epsilon=0.1)
        assert np.allclose(v.probs, 0.5, atol=1e-15)

    def test_zero_coupling_temperature_table_is_uniform(self):
        rng = np.random.default_rng(10)
        graph, membership = sbm_graph(10, 3, rng, beta=1.0)
        v = variational_build(graph, membership, beta_tilde=0.0, epsilon=0.3)
        assert np.allclose(v.probs, 1.0 / 8.0, atol=1e-15)

    def test_two_cluster_closed_form_table(self):
        graph, v = two_cluster_variational(epsilon=0.1, beta_tilde=0.5)
        assert v.clusters.jtilde[0, 1] == 5.0
        # aligned patterns carry weight exp(+0.5 * 2 * 5 * 0.81), the rest
        # the reciprocal; four patterns total
        w_aligned = math.exp(0.5 * 2 * 5 * 0.81)
        w_split = math.exp(-0.5 * 2 * 5 * 0.81)
        z = 2 * w_aligned + 2 * w_split
        expected = {
            (1, 1): w_aligned / z,
            (-1, -1): w_aligned / z,
            (1, -1): w_split / z,
            (-1, 1): w_split / z,
        }
        for pattern, prob in zip(v.patterns, v.probs):
            key = (int(np.sign(pattern[0])), int(np.sign(pattern[1])))
            assert prob == pytest.approx(expected[key], abs=1e-12)
        assert v.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_cluster_count_guard(self):
        graph = SpinGraph(n=25, edges=np.zeros((0, 2)), beta=1.0)
        with pytest.raises(EnumerationLimitError):
            variational_build(graph, np.arange(25), beta_tilde=0.1, epsilon=0.5)

    def test_conditional_spin_probability(self):
        # fix the pattern draw and check the per-site Rademacher conditional
        graph = SpinGraph(n=50, edges=np.zeros((0, 2)), beta=1.0)
        v = variational_build(graph, np.zeros(50, dtype=int), beta_tilde=0.5, epsilon=0.1)

        class PatternZeroRng:
            def __init__(self, seed):
                self.inner = np.random.default_rng(seed)

            def random(self, size=None):
                if size is None:
                    return 0.0  # forces the first pattern, mu = -0.9
                return self.inner.random(size)

        rng = PatternZeroRng(11)
        assert v.patterns[0, 0] == -0.9
        draws = [variational_sample(v, rng) for _ in range(2_000)]
        plus_rate = float(np.mean([np.mean(s > 0) for s in draws]))
        se = math.sqrt(0.05 * 0.95 / (2_000 * 50))
        assert abs(plus_rate - 0.05) < 4 * se

    def test_sample_cluster_means_match_table(self):
        rng = np.random.default_rng(12)
        graph, membership = sbm_graph(12, 2, rng, beta=0.5)
        v = variational_build(graph, membership, beta_tilde=0.25, epsilon=0.2)
        expected = v.probs @ v.patterns
        n = 100_000
        sums = np.zeros(2)
        for _ in range(n):
            sigma = variational_sample(v, rng)
            for c in range(2):
                sums[c] += sigma[membership == c].mean()
        means = sums / n
        for c in range(2):
            assert abs(means[c] - expected[c]) < 4 / math.sqrt(n)

    def test_density_normalises_by_enumeration(self):
        rng = np.random.default_rng(13)
        graph, membership = sbm_graph(8, 3, rng, beta=0.4)
        v = variational_build(graph, membership, beta_tilde=0.2, epsilon=0.3)
        states = ising_states(8)
        total = sum(
            math.exp(variational_log_density(states[i], v)) for i in range(256)
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_flip_symmetry_is_bit_exact(self):
        rng = np.random.default_rng(14)
        graph, membership = sbm_graph(10, 3, rng, beta=0.4)
        v = variational_build(graph, membership, beta_tilde=0.2, epsilon=0.3)
        states = ising_states(10)
        for i in range(states.shape[0]):
            assert variational_log_density(states[i], v) == variational_log_density(
                -states[i], v
            )

    def test_single_vertex_density_is_half(self):
        graph = SpinGraph(n=1, edges=np.zeros((0, 2)), beta=1.0)
        v = variational_build(graph, np.zeros(1, dtype=int), beta_tilde=0.5, epsilon=0.1)
        q_plus = math.exp(variational_log_density(np.array([1], dtype=np.int8), v))
        assert q_plus == pytest.approx(0.5, abs=1e-12)


class TestMagnetisation:
    def test_all_up_is_one(self):
        assert magnetisation(np.ones(7, dtype=np.int8)) == 1.0

    def test_odd_under_global_flip(self):
        rng = np.random.default_rng(15)
        sigma = uniform_config(9, rng)
        assert magnetisation(-sigma) == -magnetisation(sigma)

    def test_alternating_balanced(self):
        sigma = np.tile([1, -1], 5).astype(np.int8)
        assert magnetisation(sigma) == 0.0

    def test_exact_expectation_vanishes(self):
        rng = np.random.default_rng(16)
        for beta in (0.01, 1.0):
            graph, _ = sbm_graph(10, 2, rng, beta=beta)
            assert abs(exact_magnetisation(graph)) < 1e-12


class TestCalibration:
    def test_thresholds_are_order_statistics_of_trajectory(self):
        rng = np.random.default_rng(17)
        graph, membership = sbm_graph(10, 2, rng, beta=0.5)
        v = variational_build(graph, membership, beta_tilde=0.25, epsilon=0.2)
        result = threshold_calibration(graph, v, 200, np.random.default_rng(18))
        traj = result.log_rn_trajectory
        ordered = np.sort(traj)
        assert result.partition.log_thresholds == (
            float(ordered[(traj.size - 1) // 2]),
            float(ordered[-1]),
        )
        assert result.partition.n_regions == 3

    def test_recomputation_is_bit_exact(self):
        rng = np.random.default_rng(19)
        graph, membership = sbm_graph(10, 2, rng, beta=0.5)
        v = variational_build(graph, membership, beta_tilde=0.25, epsilon=0.2)
        a = threshold_calibration(graph, v, 150, np.random.default_rng(20))
        b = threshold_calibration(graph, v, 150, np.random.default_rng(20))
        assert a.partition.log_thresholds == b.partition.log_thresholds
        assert np.array_equal(a.log_rn_trajectory, b.log_rn_trajectory)

    def test_degenerate_trajectory_collapses_to_two_regions(self):
        rng = np.random.default_rng(21)
        graph, membership = sbm_graph(8, 2, rng, beta=0.5)
        v = variational_build(graph, membership, beta_tilde=0.25, epsilon=0.2)
        with pytest.warns(RuntimeWarning, match="degenerate"):
            result = threshold_calibration(graph, v, 1, np.random.default_rng(22))
        assert result.partition.n_regions == 2

    def test_regions_are_flip_symmetric(self):
        rng = np.random.default_rng(23)
        graph, membership = sbm_graph(10, 2, rng, beta=0.5)
        v = variational_build(graph, membership, beta_tilde=0.25, epsilon=0.2)
        result = threshold_calibration(graph, v, 300, np.random.default_rng(24))
        target = IsingTarget(graph)
        states = ising_states(10)
        for i in range(states.shape[0]):
            log_rn = target.log_density_unnorm(states[i]) - variational_log_density(
                states[i], v
            )
            log_rn_flipped = target.log_density_unnorm(-states[i]) - variational_log_density(
                -states[i], v
            )
            assert log_rn == log_rn_flipped
            assert result.partition.region_of_log(log_rn) == result.partition.region_of_log(
                log_rn_flipped
            )


class TestGraphIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(25)
        graph, membership = sbm_graph(12, 3, rng, beta=0.7)
        path = tmp_path / "graph.txt"
        save_graph(path, graph, membership)
        n, edges, loaded_membership = load_graph(path)
        assert n == 12
        assert np.array_equal(edges, graph.edges)
        assert np.array_equal(loaded_membership, membership)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 1\n1 2\n")
        with pytest.raises(ConfigError):
            load_graph(path)

    def test_self_loop_rejected(self):
        with pytest.raises(ConsistencyError):
            SpinGraph(n=3, edges=np.array([[1, 1]]), beta=1.0)


class TestExactOracles:
    @pytest.mark.parametrize("beta", [0.3, 1.2])
    def test_invariance_on_assorted_small_graphs(self, beta):
        shapes = [
            (2, np.array([[0, 1]])),
            (3, TRIANGLE),
            (4, FOUR_CYCLE),
            (4, np.array([[0, 1], [1, 2], [2, 3], [3, 0], [0, 2], [1, 3]])),
            (4, np.zeros((0, 2))),
        ]
        for n, edges in shapes:
            graph = SpinGraph(n=n, edges=edges, beta=beta)
            pi = ising_equilibrium(graph)
            for matrix in (metropolis_transition_matrix(graph), wolff_transition_matrix(graph)):
                assert np.max(np.abs(pi @ matrix - pi)) < 1e-12

    def test_state_enumeration_guard(self):
        with pytest.raises(EnumerationLimitError):
            ising_states(17)
