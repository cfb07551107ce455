import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocknet import ClassOrdering, Dag, Dataset, Hyperparams, InvalidArgument, Partition, SizeLimit
from blocknet.evaluate import (
    class_count_distribution,
    coclass_accuracy,
    coclass_marginals,
    edge_marginals,
    enumerate_dags,
    exact_posterior_small,
    expected_hamming,
    kl_estimate,
    modal_class_count,
    pool_weights,
    predictive_log_prob,
    predictive_log_probs,
    predictive_network,
    summarize,
    truth_state,
)
from blocknet.generate import BenchmarkSpec, build_benchmark, forward_sample, sample_dirichlet_cpts
from blocknet.graph import BayesNet
from blocknet.likelihood import joint_log_score
from blocknet.mcmc import ModelPool
from blocknet.state import SamplerState

H = Hyperparams()


def st_(edges, score, z=None, n=2, kind="block", ordering=None):
    z = list(z) if z is not None else [0] * n
    ord = ClassOrdering(ordering) if ordering is not None else None
    return SamplerState(Dag.from_edges(n, edges), Partition(z), ord, score, kind)


class TestWeights:
    def test_single(self):
        assert pool_weights([st_([], -4.0)]).tolist() == [1.0]

    def test_equal(self):
        np.testing.assert_allclose(pool_weights([st_([], -1.0), st_([(0, 1)], -1.0)]), [0.5, 0.5])

    def test_log_three_apart(self):
        w = pool_weights([st_([], 0.0), st_([(0, 1)], -math.log(3))])
        np.testing.assert_allclose(w, [0.75, 0.25], rtol=1e-14)

    def test_extreme_scores_are_stable(self):
        w = pool_weights([st_([], -1e6), st_([(0, 1)], -1e6 - 1)])
        assert np.isfinite(w).all() and w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            pool_weights([])

    def test_accepts_model_pool(self):
        pool = ModelPool(5)
        pool.add(st_([], 0.0))
        pool.add(st_([(0, 1)], -math.log(3)))
        np.testing.assert_allclose(pool_weights(pool), [0.75, 0.25])


class TestMarginals:
    def test_single_state_is_adjacency(self):
        g = Dag.from_edges(3, [(0, 1), (2, 1)])
        m = edge_marginals([SamplerState(g, Partition.single(3), None, 0.0, "block")])
        np.testing.assert_array_equal(m, g.adj.astype(float))

    def test_disagreeing_states(self):
        m = edge_marginals([st_([(0, 1)], -1.0), st_([], -1.0)])
        assert m[0, 1] == 0.5 and m[1, 0] == 0.0

    def test_coclass_split_and_merge(self):
        c = coclass_marginals([st_([], -1.0, z=[0, 0]), st_([], -1.0, z=[0, 1])])
        np.testing.assert_allclose(c, [[1.0, 0.5], [0.5, 1.0]])

    def test_coclass_all_apart(self):
        c = coclass_marginals([st_([], -1.0, z=[0, 1])])
        assert c[0, 1] == 0.0

    def test_uniform_prior_all_ones(self):
        c = coclass_marginals([st_([], -1.0, z=[0, 0], kind="uniform"), st_([(0, 1)], -2.0, kind="uniform")])
        np.testing.assert_array_equal(c, np.ones((2, 2)))

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.lists(st.booleans(), min_size=3, max_size=3),
                st.lists(st.integers(0, 2), min_size=4, max_size=4),
                st.floats(-20, 0),
            ),
            min_size=1,
            max_size=6,
        )
    )
    def test_matrix_properties(self, states):
        pool = []
        for bits, labels, score in states:
            edges = [e for e, b in zip([(0, 1), (1, 2), (2, 3)], bits) if b]
            pool.append(SamplerState(Dag.from_edges(4, edges), Partition.from_labels(labels), None, score, "block"))
        w = pool_weights(pool)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        e = edge_marginals(pool)
        c = coclass_marginals(pool)
        assert np.all(np.diag(e) == 0) and np.all((e >= 0) & (e <= 1 + 1e-12))
        np.testing.assert_allclose(np.diag(c), 1.0)
        np.testing.assert_allclose(c, c.T)
        assert np.all((c >= 0) & (c <= 1 + 1e-12))

    def test_class_counts(self):
        pool = [st_([], 0.0, z=[0, 0]), st_([], -math.log(3), z=[0, 1])]
        dist = class_count_distribution(pool)
        assert dist[1] == pytest.approx(0.75) and dist[2] == pytest.approx(0.25)
        assert modal_class_count(pool) == 1

    def test_summary(self):
        s = summarize([st_([(0, 1)], -1.0)])
        assert s.pool_weights.tolist() == [1.0] and s.kl is None


class TestPredictive:
    def test_empty_graph_no_data(self):
        train = Dataset([2, 2, 2], [])
        pool = [SamplerState(Dag.empty(3), Partition.single(3), None, 0.0, "uniform")]
        assert predictive_log_prob(pool, train, [0, 1, 1], 0.5) == pytest.approx(3 * math.log(0.5))

    def test_single_state_smoothed_counts(self):
        train = Dataset([2, 2], [[0, 0], [0, 1], [1, 1]])
        pool = [st_([(0, 1)], 0.0)]
        # P(x0=0) = 2.5/4, P(x1=1 | x0=0) = 1.5/3
        assert predictive_log_prob(pool, train, [0, 1], 0.5) == pytest.approx(math.log(2.5 / 4 * 1.5 / 3))

    def test_two_state_mixture(self):
        train = Dataset([2, 2], [[0, 0], [0, 1], [1, 1]])
        pool = [st_([(0, 1)], 0.0), st_([], -math.log(3))]
        with_edge = 2.5 / 4 * 1.5 / 3
        without = 2.5 / 4 * 2.5 / 4
        expected = math.log(0.75 * with_edge + 0.25 * without)
        assert predictive_log_prob(pool, train, [0, 1], 0.5) == pytest.approx(expected, rel=1e-12)

    def test_predictive_normalizes(self):
        rng = np.random.default_rng(0)
        train = Dataset([2, 3, 2], rng.integers(0, [2, 3, 2], size=(15, 3)))
        pool = [
            SamplerState(Dag.from_edges(3, [(0, 1), (1, 2)]), Partition.single(3), None, -1.0, "block"),
            SamplerState(Dag.from_edges(3, [(2, 0)]), Partition.single(3), None, -2.0, "block"),
        ]
        rows = np.array([[a, b, c] for a in range(2) for b in range(3) for c in range(2)])
        assert math.fsum(np.exp(predictive_log_probs(pool, train, rows, 0.5))) == pytest.approx(1.0, abs=1e-12)

    def test_arity_mismatch(self):
        train = Dataset([2, 2], [])
        with pytest.raises(InvalidArgument):
            predictive_log_prob([st_([], 0.0)], train, [0, 2], 0.5)
        with pytest.raises(InvalidArgument):
            predictive_log_prob([st_([], 0.0)], train, [0, 1, 1], 0.5)


class TestKL:
    def test_uniform_vs_deterministic_is_log_four(self):
        truth = BayesNet(Dag.empty(2), [2, 2], [[[1.0, 0.0]], [[1.0, 0.0]]])
        pool = [st_([], 0.0, kind="uniform")]
        kl = kl_estimate(pool, truth, Dataset([2, 2], []), 10_000, 0.5, np.random.default_rng(0))
        assert abs(kl.estimate - math.log(4)) <= max(3 * kl.stderr, 1e-12)
        assert kl.n_mc == 10_000

    def test_self_kl_is_zero(self):
        rng = np.random.default_rng(1)
        g = Dag.from_edges(4, [(0, 1), (1, 2), (0, 3)])
        train = forward_sample(sample_dirichlet_cpts(g, [2, 3, 2, 2], 0.5, rng), 30, rng)
        state = SamplerState(g, Partition.single(4), None, 0.0, "block")
        truth = predictive_network(state, train, 0.5)
        kl = kl_estimate([state], truth, train, 5000, 0.5, rng)
        assert abs(kl.estimate) <= 3 * kl.stderr + 1e-12

    def test_nonnegative_on_average(self):
        rng = np.random.default_rng(2)
        g = Dag.from_edges(3, [(0, 1), (1, 2)])
        truth = sample_dirichlet_cpts(g, [2, 2, 2], 0.5, rng)
        train = forward_sample(truth, 20, rng)
        pool = [SamplerState(Dag.empty(3), Partition.single(3), None, 0.0, "block")]
        kl = kl_estimate(pool, truth, train, 5000, 0.5, rng)
        assert kl.estimate >= -3 * kl.stderr

    def test_given_samples(self):
        truth = BayesNet(Dag.empty(2), [2, 2], [[[0.5, 0.5]], [[0.5, 0.5]]])
        pool = [st_([], 0.0, kind="uniform")]
        kl = kl_estimate(pool, truth, Dataset([2, 2], []), 0, 0.5, samples=[[0, 0], [1, 1], [0, 1]])
        assert kl.estimate == pytest.approx(0.0, abs=1e-12) and kl.n_mc == 3

    def test_needs_rows(self):
        truth = BayesNet(Dag.empty(1), [2], [[[0.5, 0.5]]])
        with pytest.raises(InvalidArgument):
            kl_estimate([st_([], 0.0, n=1, z=[0])], truth, Dataset([2], []), 0, 0.5, np.random.default_rng(0))


class TestExact:
    def test_one_node(self):
        ex = exact_posterior_small(Dataset([2], [[1]]), H, "uniform")
        assert len(ex.states) == 1 and ex.probs[0] == pytest.approx(1.0)

    def test_two_nodes_no_data(self):
        ex = exact_posterior_small(Dataset([2, 2], []), H, "uniform")
        np.testing.assert_allclose(ex.probs, [1 / 3] * 3, atol=1e-14)

    def test_size_limit(self):
        with pytest.raises(SizeLimit):
            exact_posterior_small(Dataset([2] * 5, []), H, "uniform")

    @pytest.mark.parametrize("kind", ["uniform", "block", "ordered-block"])
    def test_normalizes(self, kind):
        rng = np.random.default_rng(3)
        data = Dataset([2, 2, 2], rng.integers(0, 2, size=(10, 3)))
        ex = exact_posterior_small(data, H, kind)
        assert math.fsum(ex.probs) == pytest.approx(1.0, abs=1e-10)
        assert len({s.g.key() for s in ex.states}) == 25

    def test_four_nodes_uniform(self):
        rng = np.random.default_rng(4)
        data = Dataset([2] * 4, rng.integers(0, 2, size=(8, 4)))
        ex = exact_posterior_small(data, H, "uniform")
        assert len(ex.states) == 543
        assert math.fsum(ex.probs) == pytest.approx(1.0, abs=1e-10)

    def test_dag_counts(self):
        assert [sum(1 for _ in enumerate_dags(n)) for n in range(1, 5)] == [1, 3, 25, 543]

    def test_probabilities_follow_scores(self):
        data = Dataset([2, 2], [[0, 0], [1, 1], [1, 1]])
        ex = exact_posterior_small(data, H, "block")
        for s, p in zip(ex.states, ex.probs):
            assert s.log_score == pytest.approx(joint_log_score(s, data, H))
        best = ex.states[int(np.argmax(ex.probs))]
        assert best.log_score == max(s.log_score for s in ex.states)


class TestMetrics:
    def test_hamming(self):
        truth = Dag.from_edges(3, [(0, 1)])
        m = np.zeros((3, 3))
        m[0, 1] = 0.25
        m[1, 2] = 0.5
        assert expected_hamming(m, truth) == pytest.approx(0.75 + 0.5)

    def test_hamming_shape(self):
        with pytest.raises(InvalidArgument):
            expected_hamming(np.zeros((2, 2)), Dag.empty(3))

    def test_coclass_accuracy_perfect(self):
        z = [0, 0, 1]
        c = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=float)
        assert coclass_accuracy(c, z) == 1.0

    def test_coclass_accuracy_all_ones(self):
        # one predicted class: right on the one same-class pair out of three
        assert coclass_accuracy(np.ones((3, 3)), [0, 0, 1]) == pytest.approx(1 / 3)

    def test_truth_state_scores(self):
        bench = build_benchmark(BenchmarkSpec("layered12", seed=0))
        data = forward_sample(bench.net, 30, np.random.default_rng(0))
        for kind in ["uniform", "block", "ordered-block"]:
            s = truth_state(bench.net, bench.classes.z, bench.ordering.o, kind, data, H)
            assert math.isfinite(s.log_score)
            assert s.log_score == pytest.approx(joint_log_score(s, data, H))
        ordered = truth_state(bench.net, bench.classes.z, None, "ordered-block", data, H)
        assert ordered.ord.o.tolist() == [0, 1, 2]
