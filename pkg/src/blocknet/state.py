from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Dag
from .priors import ClassOrdering, Partition, PriorKind


def state_key(adj: np.ndarray, z: np.ndarray, o: np.ndarray | None) -> bytes:
    """Canonical identity of ``(G, z, o)`` used for pool deduplication."""
    parts = [np.packbits(np.asarray(adj, dtype=bool)).tobytes(), b"|", np.asarray(z, dtype=np.int64).tobytes()]
    if o is not None:
        parts += [b"|", np.asarray(o, dtype=np.int64).tobytes()]
    return b"".join(parts)


@dataclass(frozen=True)
class SamplerState:
    """One point of the Markov chain: graph, classes, optional class ordering
    and the cached joint log-score."""

    g: Dag
    p: Partition
    ord: ClassOrdering | None
    log_score: float
    prior_kind: PriorKind = PriorKind.BLOCK

    def __post_init__(self):
        object.__setattr__(self, "prior_kind", PriorKind.parse(self.prior_kind))

    def key(self) -> bytes:
        return state_key(self.g.adj, self.p.z, None if self.ord is None else self.ord.o)

    def with_score(self, log_score: float) -> SamplerState:
        return SamplerState(self.g, self.p, self.ord, float(log_score), self.prior_kind)

    def violates_ordering(self) -> bool:
        if self.ord is None:
            return False
        src, dst = np.nonzero(self.g.adj)
        ranks = self.ord.o[self.p.z]
        return bool(np.any(ranks[src] >= ranks[dst]))


def initial_state(n: int, prior_kind: PriorKind) -> SamplerState:
    """Empty graph, every node in one class, identity ordering; unscored."""
    prior_kind = PriorKind.parse(prior_kind)
    ord = ClassOrdering.identity(1 if n else 0) if prior_kind.ordered else None
    return SamplerState(Dag.empty(n), Partition.single(n), ord, float("nan"), prior_kind)
