"""Posterior summaries from a model pool, predictive scoring, KL estimation
and an exhaustive small-network posterior used as a test oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgument, SizeLimit
from .generate import forward_sample
from .graph import BayesNet, Dag, Dataset, Hyperparams, config_index, parent_list, topological_order
from .likelihood import FamilyCache, family_counts, joint_log_score
from .priors import ClassOrdering, Partition, PriorKind, canonicalize, set_partitions
from .state import SamplerState

EXACT_MAX_NODES = 4


def _states(pool) -> list[SamplerState]:
    states = pool.entries() if hasattr(pool, "entries") else list(pool)
    if not states:
        raise InvalidArgument("pool is empty")
    return states


def pool_weights(pool) -> np.ndarray:
    scores = np.array([s.log_score for s in _states(pool)], dtype=float)
    shifted = np.exp(scores - scores.max())
    return shifted / shifted.sum()


def edge_marginals(pool) -> np.ndarray:
    states = _states(pool)
    w = pool_weights(states)
    return np.einsum("s,sij->ij", w, np.stack([s.g.adj.astype(float) for s in states]))


def _coclass(state: SamplerState) -> np.ndarray:
    if state.p is None or state.prior_kind is PriorKind.UNIFORM:
        return np.ones((state.g.n, state.g.n))
    z = state.p.z
    return (z[:, None] == z[None, :]).astype(float)


def coclass_marginals(pool) -> np.ndarray:
    """Pool-weighted probability that two nodes share a class; all ones
    under the uniform prior."""
    states = _states(pool)
    w = pool_weights(states)
    return np.einsum("s,sij->ij", w, np.stack([_coclass(s) for s in states]))


def class_count_distribution(pool) -> dict[int, float]:
    states = _states(pool)
    out: dict[int, float] = {}
    for w, s in zip(pool_weights(states), states):
        k = s.p.k_plus if s.prior_kind.has_classes else 1
        out[k] = out.get(k, 0.0) + float(w)
    return out


def modal_class_count(pool) -> int:
    dist = class_count_distribution(pool)
    return max(sorted(dist), key=lambda k: dist[k])


class _PredictiveTables:
    """Dirichlet posterior-mean CPTs given training data, shared across states."""

    def __init__(self, train: Dataset, gamma: float):
        if not gamma > 0:
            raise InvalidArgument(f"gamma must be positive, got {gamma}")
        self.train = train
        self.gamma = gamma
        self._logs: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}

    def log_table(self, child: int, parents: tuple[int, ...]) -> np.ndarray:
        key = (child, parents)
        table = self._logs.get(key)
        if table is None:
            counts = family_counts(self.train, child, parents).counts.astype(float)
            r = counts.shape[1]
            table = np.log((counts + self.gamma) / (counts.sum(axis=1, keepdims=True) + r * self.gamma))
            self._logs[key] = table
        return table

    def state_log_probs(self, g: Dag, rows: np.ndarray) -> np.ndarray:
        out = np.zeros(rows.shape[0])
        for j in range(g.n):
            parents = tuple(parent_list(g, j))
            cfg = config_index(rows, self.train.arities, parents)
            out += self.log_table(j, parents)[cfg, rows[:, j]]
        return out


def _check_rows(rows, arities: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
    if rows.shape[1] != arities.shape[0]:
        raise InvalidArgument(f"rows have {rows.shape[1]} values, expected {arities.shape[0]}")
    if np.any(rows < 0) or np.any(rows >= arities[None, :]):
        raise InvalidArgument("row value outside its variable's arity")
    return rows


def predictive_log_probs(pool, train: Dataset, rows, gamma: float) -> np.ndarray:
    """Log posterior-predictive probability of each row under the pool mixture."""
    states = _states(pool)
    rows = _check_rows(rows, train.arities)
    if states[0].g.n != train.n_vars:
        raise InvalidArgument("pool and training data disagree on variable count")
    tables = _PredictiveTables(train, gamma)
    logw = np.log(pool_weights(states))
    per_state = np.stack([tables.state_log_probs(s.g, rows) for s in states])
    return logsumexp(per_state + logw[:, None], axis=0)


def predictive_log_prob(pool, train: Dataset, row, gamma: float) -> float:
    return float(predictive_log_probs(pool, train, [row], gamma)[0])


def predictive_network(state: SamplerState, train: Dataset, gamma: float) -> BayesNet:
    """The state's graph with its Dirichlet posterior-mean CPTs as a network."""
    tables = _PredictiveTables(train, gamma)
    cpts = [np.exp(tables.log_table(j, tuple(parent_list(state.g, j)))) for j in range(state.g.n)]
    return BayesNet(state.g, train.arities, cpts, train.names)


@dataclass(frozen=True)
class KLEstimate:
    estimate: float
    stderr: float
    n_mc: int

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "n_mc": self.n_mc}


def kl_estimate(
    pool, truth: BayesNet, train: Dataset, n_mc: int, gamma: float, rng: np.random.Generator | None = None,
    samples=None,
) -> KLEstimate:
    """Monte Carlo KL(truth || posterior predictive).

    Rows are drawn fresh from ``truth`` unless ``samples`` (rows already
    drawn from the truth, e.g. a held-out test set) are supplied.
    """
    if samples is None:
        if n_mc < 1:
            raise InvalidArgument("n_mc must be >= 1")
        if rng is None:
            raise InvalidArgument("an rng is needed to draw Monte Carlo rows")
        rows = forward_sample(truth, n_mc, rng).rows
    else:
        rows = _check_rows(samples, truth.arities)
        if rows.shape[0] < 1:
            raise InvalidArgument("need at least one sample")
    diffs = truth.log_prob(rows) - predictive_log_probs(pool, train, rows, gamma)
    n = diffs.shape[0]
    stderr = float(diffs.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return KLEstimate(float(diffs.mean()), stderr, int(n))


def expected_hamming(marginals: np.ndarray, truth: Dag) -> float:
    """Posterior expected number of edge indicators that disagree with ``truth``."""
    m = np.asarray(marginals, dtype=float)
    if m.shape != truth.adj.shape:
        raise InvalidArgument(f"marginals shape {m.shape} does not match {truth.adj.shape}")
    off = ~np.eye(truth.n, dtype=bool)
    return float(np.abs(truth.adj.astype(float) - m)[off].sum())


def coclass_accuracy(coclass: np.ndarray, truth_classes: Sequence[int]) -> float:
    """Mean agreement with the true same-class relation over node pairs."""
    z = np.asarray(truth_classes)
    c = np.asarray(coclass, dtype=float)
    if c.shape != (z.shape[0], z.shape[0]):
        raise InvalidArgument("co-class matrix does not match the number of true classes")
    same = z[:, None] == z[None, :]
    iu = np.triu_indices(z.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    return float(np.where(same, c, 1.0 - c)[iu].mean())


def enumerate_dags(n: int):
    """Every DAG on ``n`` labeled nodes (1, 1, 3, 25, 543, ...)."""
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in itertools.product((False, True), repeat=len(pairs)):
        adj = np.zeros((n, n), dtype=bool)
        for (i, j), b in zip(pairs, bits):
            adj[i, j] = b
        if topological_order(adj) is not None:
            yield Dag(adj, check_acyclic=False)


def enumerate_structures(n: int, prior_kind) -> list[tuple[Partition, ClassOrdering | None]]:
    kind = PriorKind.parse(prior_kind)
    if not kind.has_classes:
        return [(Partition.single(n), None)]
    out = []
    for p in set_partitions(n):
        if kind.ordered:
            for perm in itertools.permutations(range(p.k_plus)):
                out.append((p, ClassOrdering(perm)))
        else:
            out.append((p, None))
    return out


@dataclass
class ExactPosterior:
    states: list[SamplerState]
    probs: np.ndarray
    edge_marginals: np.ndarray = field(init=False)
    coclass_marginals: np.ndarray = field(init=False)

    def __post_init__(self):
        self.edge_marginals = np.einsum("s,sij->ij", self.probs, np.stack([s.g.adj.astype(float) for s in self.states]))
        self.coclass_marginals = np.einsum("s,sij->ij", self.probs, np.stack([_coclass(s) for s in self.states]))

    def class_count_distribution(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for p, s in zip(self.probs, self.states):
            out[s.p.k_plus] = out.get(s.p.k_plus, 0.0) + float(p)
        return out


def exact_posterior_small(data: Dataset, h: Hyperparams, prior_kind) -> ExactPosterior:
    """Enumerate every (G, z, o) and normalize the joint scores exactly."""
    kind = PriorKind.parse(prior_kind)
    n = data.n_vars
    if n > EXACT_MAX_NODES:
        raise SizeLimit(f"exact enumeration supports at most {EXACT_MAX_NODES} nodes, got {n}")
    cache = FamilyCache()
    states, scores = [], []
    structures = enumerate_structures(n, kind)
    for g in enumerate_dags(n):
        for p, ord in structures:
            state = SamplerState(g, p, ord, math.nan, kind)
            score = joint_log_score(state, data, h, kind, cache)
            if score == -math.inf:
                continue
            states.append(state.with_score(score))
            scores.append(score)
    scores = np.array(scores)
    probs = np.exp(scores - logsumexp(scores))
    return ExactPosterior(states, probs)


@dataclass
class PosteriorSummary:
    edge_marginals: np.ndarray
    coclass_marginals: np.ndarray
    pool_weights: np.ndarray
    kl: KLEstimate | None = None


def summarize(pool, kl: KLEstimate | None = None) -> PosteriorSummary:
    return PosteriorSummary(edge_marginals(pool), coclass_marginals(pool), pool_weights(pool), kl)


def truth_state(truth: BayesNet, classes, ordering, prior_kind, data: Dataset, h: Hyperparams) -> SamplerState:
    """The ground-truth structure scored under ``prior_kind``.

    Without an explicit ordering, classes are ranked by their earliest
    position in a topological order of the true graph.
    """
    kind = PriorKind.parse(prior_kind)
    g = truth.dag
    if not kind.has_classes or classes is None:
        p, ord = Partition.single(g.n), (ClassOrdering.identity(1) if kind.ordered else None)
    else:
        p = Partition.from_labels(classes)
        ord = None
        if kind.ordered:
            if ordering is not None:
                p, ord = canonicalize(classes, dict(enumerate(ordering)))
            else:
                topo = topological_order(g.adj)
                pos = {v: t for t, v in enumerate(topo)}
                earliest = [min(pos[v] for v in np.flatnonzero(p.z == c)) for c in range(p.k_plus)]
                ord = ClassOrdering(np.argsort(np.argsort(earliest)))
    state = SamplerState(g, p, ord, math.nan, kind)
    return state.with_score(joint_log_score(state, data, h, kind))


__all__ = [
    "ExactPosterior",
    "KLEstimate",
    "PosteriorSummary",
    "class_count_distribution",
    "coclass_accuracy",
    "coclass_marginals",
    "edge_marginals",
    "enumerate_dags",
    "exact_posterior_small",
    "expected_hamming",
    "kl_estimate",
    "modal_class_count",
    "pool_weights",
    "predictive_log_prob",
    "predictive_log_probs",
    "predictive_network",
    "summarize",
    "truth_state",
]
