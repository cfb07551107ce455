"""Collapsed Gibbs sampling over graphs, classes and class orderings, with
restarts, optional annealing, and a pool of the best distinct states."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.special import betaln

from . import _kernel as K
from .errors import InvalidArgument, InvalidOperation
from .graph import Dag, Dataset, Hyperparams
from .likelihood import FamilyCache, joint_log_score
from .priors import ClassOrdering, Partition, PriorKind
from .seeding import rng_for
from .state import SamplerState, initial_state, state_key

_MODES = {PriorKind.UNIFORM: K.UNIFORM, PriorKind.BLOCK: K.BLOCK, PriorKind.ORDERED_BLOCK: K.ORDERED}


@dataclass(frozen=True)
class ChainConfig:
    prior_kind: PriorKind = PriorKind.BLOCK
    iterations: int = 2000
    restarts: int = 10
    top_k: int = 100
    seed: int = 0
    anneal: float | None = None  # starting temperature; linear down to 1.0

    def __post_init__(self):
        object.__setattr__(self, "prior_kind", PriorKind.parse(self.prior_kind))
        if self.iterations < 0:
            raise InvalidArgument("iterations must be >= 0")
        if self.restarts < 1:
            raise InvalidArgument("restarts must be >= 1")
        if self.top_k < 1:
            raise InvalidArgument("top_k must be >= 1")
        if self.anneal is not None and not self.anneal >= 1.0:
            raise InvalidArgument("annealing start temperature must be >= 1")

    def temperature(self, iteration: int) -> float:
        if self.anneal is None or self.iterations <= 1:
            return 1.0
        frac = iteration / (self.iterations - 1)
        return self.anneal + (1.0 - self.anneal) * frac


def chain_rng(seed: int, restart: int) -> np.random.Generator:
    return rng_for(seed, "chain", restart)


class ModelPool:
    """The ``capacity`` highest-scoring distinct states offered so far.

    Equal scores are broken by insertion order: the earlier state stays.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidArgument("pool capacity must be >= 1")
        self.capacity = capacity
        self._heap: list[tuple[float, int, bytes]] = []
        self._states: dict[bytes, tuple[int, SamplerState]] = {}
        self._seq = 0

    def __len__(self):
        return len(self._states)

    def __contains__(self, key: bytes):
        return key in self._states

    @property
    def min_score(self) -> float:
        return self._heap[0][0] if self._heap else -math.inf

    def would_admit(self, score: float) -> bool:
        return len(self._heap) < self.capacity or score > self._heap[0][0]

    def offer(self, key: bytes, score: float, make_state: Callable[[], SamplerState]) -> bool:
        if not math.isfinite(score) or not self.would_admit(score) or key in self._states:
            return False
        seq = self._seq
        self._seq += 1
        if len(self._heap) >= self.capacity:
            _, _, evicted = heapq.heappop(self._heap)
            del self._states[evicted]
        heapq.heappush(self._heap, (score, -seq, key))
        self._states[key] = (seq, make_state())
        return True

    def add(self, state: SamplerState) -> bool:
        return self.offer(state.key(), state.log_score, lambda: state)

    def entries(self) -> list[SamplerState]:
        """States sorted by score (descending), ties by insertion order."""
        ranked = sorted(self._states.values(), key=lambda item: (-item[1].log_score, item[0]))
        return [state for _, state in ranked]

    def best(self) -> SamplerState:
        if not self._states:
            raise InvalidArgument("pool is empty")
        return self.entries()[0]

    @classmethod
    def merge(cls, pools: Iterable[ModelPool], capacity: int) -> ModelPool:
        merged = cls(capacity)
        for pool in pools:
            for state in pool.entries():
                merged.add(state)
        return merged


class Chain:
    """Mutable sampler state backed by the compiled kernels.

    One chain owns its arrays, family cache and (externally supplied) RNG.
    """

    def __init__(self, state: SamplerState, data: Dataset, h: Hyperparams, prior_kind=None):
        kind = PriorKind.parse(prior_kind if prior_kind is not None else state.prior_kind)
        n = state.g.n
        if data.n_vars != n:
            raise InvalidArgument(f"dataset has {data.n_vars} variables but state has {n} nodes")
        if n > K.MAX_NODES:
            raise InvalidArgument(f"at most {K.MAX_NODES} nodes are supported")
        if kind.ordered and state.ord is None:
            raise InvalidArgument("ordered-block chain needs a class ordering")
        if kind.ordered and state.violates_ordering():
            raise InvalidArgument("initial state violates its class ordering")
        self.kind = kind
        self.mode = _MODES[kind]
        self.data = data
        self.h = h
        self.n = n
        self._rows = np.ascontiguousarray(data.rows, dtype=np.int64)
        self._arities = np.ascontiguousarray(data.arities, dtype=np.int64)
        self.cache = K.new_cache()
        self.lbeta0 = float(betaln(h.beta1, h.beta2))

        self.adj = state.g.adj.astype(np.uint8)
        self.pmask = np.zeros(n, np.int64)
        for j in range(n):
            for i in np.flatnonzero(self.adj[:, j]):
                self.pmask[j] |= np.int64(1) << int(i)
        self.fam = np.array(
            [K.cached_family(self.cache, self._rows, self._arities, j, self.pmask[j], h.gamma) for j in range(n)],
            dtype=float,
        )
        self.z = np.array(state.p.z, dtype=np.int64)
        k = state.p.k_plus
        self.k_box = np.array([k], dtype=np.int64)
        self.m = np.zeros(n + 1, np.int64)
        self.m[:k] = state.p.m
        self.rank = np.zeros(n + 1, np.int64)
        self.rank[:k] = state.ord.o if (kind.ordered and state.ord is not None) else np.arange(k)
        self.n_plus = np.zeros((n + 1, n + 1), np.int64)
        np.add.at(self.n_plus, (self.z[:, None], self.z[None, :]), self.adj.astype(np.int64))

        src, dst = np.nonzero(~np.eye(n, dtype=bool))
        self._src = src.astype(np.int64)
        self._dst = dst.astype(np.int64)
        self._stack = np.zeros(max(n, 1), np.int64)
        self._seen = np.zeros(max(n, 1), np.bool_)

    @property
    def k(self) -> int:
        return int(self.k_box[0])

    def log_prior(self) -> float:
        return K.prior_total(
            self.mode, self.n_plus, self.m, self.rank, self.k, self.n,
            self.h.alpha, self.h.beta1, self.h.beta2, self.lbeta0,
        )

    def log_likelihood(self) -> float:
        return float(np.sum(self.fam))

    def log_score(self) -> float:
        return self.log_prior() + self.log_likelihood()

    def edge_sweep(self, rng: np.random.Generator, temperature: float = 1.0) -> None:
        perm = rng.permutation(self._src.shape[0])
        u = rng.random(perm.shape[0])
        K.edge_sweep(
            self.adj, self.pmask, self.fam, self.cache, self._rows, self._arities, self.h.gamma,
            self.mode, self.z, self.m, self.rank, self.n_plus, self.h.beta1, self.h.beta2, self.lbeta0,
            self._src[perm], self._dst[perm], u, 1.0 / temperature, self._stack, self._seen,
        )

    def class_move(self, i: int, rng: np.random.Generator, temperature: float = 1.0) -> None:
        if self.mode == K.UNIFORM:
            raise InvalidOperation("class moves are undefined under the uniform prior")
        K.class_move(
            int(i), self.adj, self.z, self.m, self.rank, self.k_box, self.n_plus, self.mode,
            self.h.alpha, self.h.beta1, self.h.beta2, self.lbeta0, float(rng.random()), 1.0 / temperature,
        )

    def class_sweep(self, rng: np.random.Generator, temperature: float = 1.0) -> None:
        if self.mode == K.UNIFORM:
            raise InvalidOperation("class moves are undefined under the uniform prior")
        order = rng.permutation(self.n).astype(np.int64)
        u = rng.random(self.n)
        K.class_sweep(
            order, self.adj, self.z, self.m, self.rank, self.k_box, self.n_plus, self.mode,
            self.h.alpha, self.h.beta1, self.h.beta2, self.lbeta0, u, 1.0 / temperature,
        )

    def iterate(self, rng: np.random.Generator, temperature: float = 1.0) -> float:
        """One full sweep over edges, then over node classes. Returns the
        untempered joint log-score afterwards."""
        self.edge_sweep(rng, temperature)
        if self.mode != K.UNIFORM:
            self.class_sweep(rng, temperature)
        return self.log_score()

    def ordering(self) -> np.ndarray | None:
        return self.rank[: self.k].copy() if self.kind.ordered else None

    def key(self) -> bytes:
        return state_key(self.adj.astype(bool), self.z, self.ordering())

    def state(self, log_score: float | None = None) -> SamplerState:
        ord = ClassOrdering(self.ordering()) if self.kind.ordered else None
        score = self.log_score() if log_score is None else log_score
        return SamplerState(Dag(self.adj.astype(bool)), Partition(self.z.copy()), ord, float(score), self.kind)


def _check_state_kind(state: SamplerState, prior_kind) -> PriorKind:
    return PriorKind.parse(prior_kind if prior_kind is not None else state.prior_kind)


def gibbs_edge_sweep(
    state: SamplerState, data: Dataset, h: Hyperparams, rng: np.random.Generator,
    prior_kind=None, temperature: float = 1.0,
) -> SamplerState:
    chain = Chain(state, data, h, _check_state_kind(state, prior_kind))
    chain.edge_sweep(rng, temperature)
    return chain.state()


def gibbs_class_resample(
    state: SamplerState, data: Dataset, h: Hyperparams, node: int, rng: np.random.Generator,
    prior_kind=None, temperature: float = 1.0,
) -> SamplerState:
    kind = _check_state_kind(state, prior_kind)
    if not kind.has_classes:
        raise InvalidOperation("class resampling needs a block prior")
    chain = Chain(state, data, h, kind)
    chain.class_move(node, rng, temperature)
    return chain.state()


def _rescored(pool: ModelPool, data: Dataset, h: Hyperparams) -> ModelPool:
    """Replace kernel scores by the reference scorer so pool scores compare
    exactly with scores of externally built states."""
    cache = FamilyCache()
    out = ModelPool(pool.capacity)
    for state in pool.entries():
        out.add(state.with_score(joint_log_score(state, data, h, state.prior_kind, cache)))
    return out


def run_chain(
    cfg: ChainConfig, data: Dataset, h: Hyperparams, rng: np.random.Generator,
    callback: Callable[[int, Chain], None] | None = None,
) -> ModelPool:
    """Run one chain from the empty single-class state.

    The state after every iteration is offered to the pool. ``callback`` is
    invoked as ``callback(iteration, chain)`` after each iteration.
    """
    chain = Chain(initial_state(data.n_vars, cfg.prior_kind), data, h)
    pool = ModelPool(cfg.top_k)
    score = chain.log_score()
    pool.offer(chain.key(), score, lambda: chain.state(score))
    for it in range(cfg.iterations):
        score = chain.iterate(rng, cfg.temperature(it))
        if pool.would_admit(score):
            pool.offer(chain.key(), score, lambda: chain.state(score))
        if callback is not None:
            callback(it, chain)
    return _rescored(pool, data, h)


def run_search(cfg: ChainConfig, data: Dataset, h: Hyperparams) -> ModelPool:
    """``cfg.restarts`` independent chains with derived seeds, pools merged."""
    pools = [run_chain(cfg, data, h, chain_rng(cfg.seed, r)) for r in range(cfg.restarts)]
    return ModelPool.merge(pools, cfg.top_k)


__all__ = [
    "Chain",
    "ChainConfig",
    "ModelPool",
    "SamplerState",
    "chain_rng",
    "gibbs_class_resample",
    "gibbs_edge_sweep",
    "run_chain",
    "run_search",
]
