import itertools
import math

import numpy as np
import pytest

from blocknet import ClassOrdering, Dag, Dataset, Hyperparams, InvalidArgument, Partition
from blocknet.evaluate import enumerate_dags
from blocknet.likelihood import (
    FamilyCache,
    family_counts,
    family_log_marginal,
    graph_log_marginal,
    joint_log_score,
)
from blocknet.priors import collapsed_graph_log_score, crp_log_prob
from blocknet.state import SamplerState


def sequential_predictive(data: Dataset, g: Dag, gamma: float) -> float:
    """Probability of the rows, one at a time, each under the Dirichlet
    posterior predictive given the rows before it."""
    n = data.n_vars
    counts = [dict() for _ in range(n)]
    prob = 1.0
    for row in data.rows:
        for j in range(n):
            parents = tuple(row[i] for i in range(n) if g.adj[i, j])
            table = counts[j].setdefault(parents, np.zeros(data.arities[j]))
            r = data.arities[j]
            prob *= (table[row[j]] + gamma) / (table.sum() + r * gamma)
        for j in range(n):
            parents = tuple(row[i] for i in range(n) if g.adj[i, j])
            counts[j][parents][row[j]] += 1
    return prob


class TestFamilyCounts:
    def test_no_parents(self):
        d = Dataset([2], [[0], [1], [1]])
        np.testing.assert_array_equal(family_counts(d, 0, []).counts, [[1, 2]])

    def test_one_parent(self):
        d = Dataset([2, 2], [[0, 0], [0, 1], [1, 1]])
        np.testing.assert_array_equal(family_counts(d, 1, [0]).counts, [[1, 1], [0, 1]])

    def test_empty_dataset(self):
        d = Dataset([2, 3], [])
        fc = family_counts(d, 1, [0])
        assert fc.counts.shape == (2, 3) and fc.counts.sum() == 0

    def test_child_in_parents(self):
        with pytest.raises(InvalidArgument):
            family_counts(Dataset([2, 2], [[0, 0]]), 0, [0])

    def test_shape_and_total(self):
        rng = np.random.default_rng(0)
        d = Dataset([2, 3, 4], rng.integers(0, [2, 3, 4], size=(17, 3)))
        fc = family_counts(d, 2, [1, 0])
        assert fc.counts.shape == (6, 4) and fc.counts.sum() == 17


class TestFamilyMarginal:
    def test_two_rows(self):
        fc = family_counts(Dataset([2], [[0], [1]]), 0, [])
        assert family_log_marginal(fc, 0.5, 2) == pytest.approx(math.log(1 / 8), abs=1e-14)

    def test_zero_rows(self):
        fc = family_counts(Dataset([2, 2], []), 1, [0])
        assert family_log_marginal(fc, 0.5, 2) == 0.0

    def test_one_row(self):
        fc = family_counts(Dataset([2], [[0]]), 0, [])
        assert family_log_marginal(fc, 0.5, 2) == pytest.approx(math.log(1 / 2), abs=1e-14)

    def test_gamma_positive(self):
        fc = family_counts(Dataset([2], [[0]]), 0, [])
        with pytest.raises(InvalidArgument):
            family_log_marginal(fc, 0.0, 2)


class TestGraphMarginal:
    def test_decomposes_over_nodes(self):
        rng = np.random.default_rng(2)
        d = Dataset([2, 3, 2], rng.integers(0, [2, 3, 2], size=(12, 3)))
        empty = graph_log_marginal(d, Dag.empty(3), 0.5)
        parts = sum(family_log_marginal(family_counts(d, j, []), 0.5, d.arities[j]) for j in range(3))
        assert empty == pytest.approx(parts, abs=1e-12)
        g1 = Dag.from_edges(3, [(0, 2)])
        g2 = Dag.from_edges(3, [(0, 2), (1, 2)])
        diff = graph_log_marginal(d, g2, 0.5) - graph_log_marginal(d, g1, 0.5)
        fam = family_log_marginal(family_counts(d, 2, [0, 1]), 0.5, 2) - family_log_marginal(
            family_counts(d, 2, [0]), 0.5, 2
        )
        assert diff == pytest.approx(fam, abs=1e-12)

    def test_two_binary_nodes(self):
        d = Dataset([2, 2], [[0, 0], [1, 1]])
        g = Dag.from_edges(2, [(0, 1)])
        # node 0: 1/2 * 1/4; node 1 sees a fresh parent configuration each row: 1/2 * 1/2
        expected = math.log((1 / 2) * (1 / 4) * (1 / 2) * (1 / 2))
        assert graph_log_marginal(d, g, 0.5) == pytest.approx(expected, abs=1e-14)
        assert expected == pytest.approx(math.log(sequential_predictive(d, g, 0.5)), abs=1e-14)

    def test_chain_rule_oracle_random(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 4))
            arities = rng.integers(2, 4, size=n)
            m = int(rng.integers(0, 7))
            d = Dataset(arities, rng.integers(0, arities, size=(m, n)))
            dags = list(enumerate_dags(n))
            g = dags[int(rng.integers(len(dags)))]
            gamma = float(rng.choice([0.5, 1.0, 2.3]))
            value = math.exp(graph_log_marginal(d, g, gamma))
            assert value == pytest.approx(sequential_predictive(d, g, gamma), rel=1e-10)

    def test_row_order_invariance(self):
        rng = np.random.default_rng(3)
        d = Dataset([2, 2, 3], rng.integers(0, [2, 2, 3], size=(30, 3)))
        shuffled = Dataset(d.arities, d.rows[rng.permutation(30)])
        g = Dag.from_edges(3, [(0, 2), (1, 2), (0, 1)])
        assert graph_log_marginal(d, g, 0.5) == pytest.approx(graph_log_marginal(shuffled, g, 0.5), abs=1e-10)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_sums_to_one_over_datasets(self, m):
        cells = list(itertools.product((0, 1), repeat=2))
        for g in enumerate_dags(2):
            total = math.fsum(
                math.exp(graph_log_marginal(Dataset([2, 2], list(rows)), g, 0.5))
                for rows in itertools.product(cells, repeat=m)
            )
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_cache_transparency(self):
        rng = np.random.default_rng(4)
        d = Dataset([2, 2, 2, 2], rng.integers(0, 2, size=(25, 4)))
        cache = FamilyCache()
        graphs = list(enumerate_dags(3))
        d3 = Dataset([2, 2, 2], d.rows[:, :3])
        cold = [graph_log_marginal(d3, g, 0.5) for g in graphs]
        warm1 = [graph_log_marginal(d3, g, 0.5, cache) for g in graphs]
        warm2 = [graph_log_marginal(d3, g, 0.5, cache) for g in graphs]
        assert cold == warm1 == warm2
        assert cache.hits > 0

    def test_arity_mismatch(self):
        with pytest.raises(InvalidArgument):
            graph_log_marginal(Dataset([2, 2], [[0, 1]]), Dag.empty(3), 0.5)

    def test_large_parent_sets_use_sparse_path(self):
        rng = np.random.default_rng(5)
        n = 18
        d = Dataset([2] * n, rng.integers(0, 2, size=(6, n)))
        g = Dag.from_edges(n, [(i, n - 1) for i in range(n - 1)])
        expected = math.log(sequential_predictive(d, g, 0.5))
        assert graph_log_marginal(d, g, 0.5) == pytest.approx(expected, rel=1e-10)


class TestJointScore:
    data = Dataset([2, 2], [[0, 0], [1, 1], [1, 0]])
    h = Hyperparams()

    def test_uniform(self):
        g = Dag.from_edges(2, [(0, 1)])
        s = SamplerState(g, Partition.single(2), None, math.nan, "uniform")
        assert joint_log_score(s, self.data, self.h) == pytest.approx(graph_log_marginal(self.data, g, 0.5))

    def test_ordered_violation(self):
        g = Dag.from_edges(2, [(1, 0)])
        s = SamplerState(g, Partition([0, 1]), ClassOrdering([0, 1]), math.nan, "ordered-block")
        assert joint_log_score(s, self.data, self.h) == -math.inf

    def test_block_single_class_terms(self):
        g = Dag.from_edges(2, [(0, 1)])
        p = Partition.single(2)
        s = SamplerState(g, p, None, math.nan, "block")
        expected = math.log(2 / 3) + math.log(1 / 6) + graph_log_marginal(self.data, g, 0.5)
        assert crp_log_prob(p, 0.5) == pytest.approx(math.log(2 / 3), abs=1e-14)
        assert collapsed_graph_log_score(g, p, None, self.h) == pytest.approx(math.log(1 / 6))
        assert joint_log_score(s, self.data, self.h) == pytest.approx(expected, abs=1e-12)
