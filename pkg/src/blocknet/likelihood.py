"""Marginal likelihood of complete discrete data given a DAG.

Every CPT row has a symmetric Dirichlet(gamma) prior on each cell
(Cooper-Herskovits form), so the score decomposes over families.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument
from .graph import Dag, Dataset, Hyperparams, config_count, config_index, is_acyclic, parent_list
from .priors import PriorKind, structure_log_prior

# Above this many table cells, families are scored from observed cells only.
_DENSE_LIMIT = 1 << 16


@dataclass(frozen=True)
class FamilyCounts:
    child: int
    parents: tuple[int, ...]
    counts: np.ndarray  # (configs, child arity)


class FamilyCache:
    """Unbounded map ``(child, sorted parents) -> family log-marginal``.

    Each chain owns its own cache; it is not safe for concurrent inserts.
    """

    def __init__(self):
        self._store: dict[tuple[int, tuple[int, ...]], float] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key):
        value = self._store.get(key)
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def put(self, key, value: float) -> None:
        self._store[key] = value

    def __len__(self):
        return len(self._store)

    def __contains__(self, key):
        return key in self._store


def family_counts(data: Dataset, child: int, parents: Sequence[int]) -> FamilyCounts:
    parents = tuple(sorted(int(p) for p in parents))
    if child in parents:
        raise InvalidArgument(f"node {child} cannot be its own parent")
    n = data.n_vars
    if not 0 <= child < n or any(not 0 <= p < n for p in parents):
        raise InvalidArgument("node index out of range")
    r = int(data.arities[child])
    q = config_count(data.arities, parents)
    cfg = config_index(data.rows, data.arities, parents)
    flat = np.bincount(cfg * r + data.rows[:, child], minlength=q * r)
    return FamilyCounts(child, parents, flat.reshape(q, r))


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise InvalidArgument(f"gamma must be positive, got {gamma}")


def _dirichlet_multinomial(counts: np.ndarray, gamma: float, r: int) -> float:
    """Sum over rows of ``counts`` (shape (q, r)) of the per-row log-marginal."""
    n_j = counts.sum(axis=1)
    used = n_j > 0  # empty configurations contribute exactly zero
    counts = counts[used]
    n_j = n_j[used]
    return float(
        np.sum(gammaln(r * gamma) - gammaln(r * gamma + n_j))
        + np.sum(gammaln(gamma + counts) - gammaln(gamma))
    )


def family_log_marginal(fc: FamilyCounts, gamma: float, child_arity: int) -> float:
    _check_gamma(gamma)
    if fc.counts.shape[1] != child_arity:
        raise InvalidArgument("child arity does not match the counts table")
    return _dirichlet_multinomial(fc.counts, gamma, child_arity)


def _family_score(data: Dataset, child: int, parents: tuple[int, ...], gamma: float) -> float:
    r = int(data.arities[child])
    if config_count(data.arities, parents) * r <= _DENSE_LIMIT:
        return family_log_marginal(family_counts(data, child, parents), gamma, r)
    cfg = config_index(data.rows, data.arities, parents)
    _, inverse = np.unique(cfg, return_inverse=True)
    flat = np.bincount(inverse * r + data.rows[:, child], minlength=(inverse.max() + 1) * r)
    return _dirichlet_multinomial(flat.reshape(-1, r), gamma, r)


def graph_log_marginal(
    data: Dataset, g: Dag, gamma: float, cache: FamilyCache | None = None
) -> float:
    _check_gamma(gamma)
    if data.n_vars != g.n:
        raise InvalidArgument(f"dataset has {data.n_vars} variables but graph has {g.n} nodes")
    if not is_acyclic(g):
        raise InvalidArgument("graph is cyclic")
    total = 0.0
    for j in range(g.n):
        key = (j, tuple(parent_list(g, j)))
        value = cache.get(key) if cache is not None else None
        if value is None:
            value = _family_score(data, j, key[1], gamma)
            if cache is not None:
                cache.put(key, value)
        total += value
    return total


def joint_log_score(state, data: Dataset, h: Hyperparams, prior_kind=None, cache: FamilyCache | None = None) -> float:
    """Structure prior plus marginal likelihood of ``state`` (a SamplerState
    or anything with ``g``, ``p`` and ``ord``)."""
    kind = PriorKind.parse(prior_kind if prior_kind is not None else state.prior_kind)
    prior = structure_log_prior(kind, state.g, state.p, state.ord, h)
    return prior + graph_log_marginal(data, state.g, h.gamma, cache)
