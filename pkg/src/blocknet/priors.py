"""Structure priors over DAGs: uniform, blockmodel and ordered blockmodel.

The edge-probability matrix of the block priors is integrated out, so a
graph's prior score depends only on how many edges are present and absent
between each pair of classes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import betaln, gammaln

from .errors import InvalidArgument
from .graph import Dag, Hyperparams, is_acyclic

NEG_INF = -math.inf


class PriorKind(str, enum.Enum):
    UNIFORM = "uniform"
    BLOCK = "block"
    ORDERED_BLOCK = "ordered-block"

    @classmethod
    def parse(cls, value) -> PriorKind:
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == text:
                return kind
        raise InvalidArgument(f"unknown prior {value!r}; expected one of {[k.value for k in cls]}")

    @property
    def has_classes(self) -> bool:
        return self is not PriorKind.UNIFORM

    @property
    def ordered(self) -> bool:
        return self is PriorKind.ORDERED_BLOCK


def canonical_labels(z: Sequence[int]) -> tuple[np.ndarray, dict[int, int]]:
    """Relabel classes in order of first occurrence."""
    mapping: dict[int, int] = {}
    out = np.empty(len(z), dtype=np.int64)
    for i, label in enumerate(z):
        label = int(label)
        if label not in mapping:
            mapping[label] = len(mapping)
        out[i] = mapping[label]
    return out, mapping


class Partition:
    """Class assignment vector with canonical labels (z[0] == 0, new labels
    appear as 1 + the largest label seen so far)."""

    __slots__ = ("z", "m")

    def __init__(self, z: Sequence[int]):
        z = np.array(z, dtype=np.int64).reshape(-1)
        canon, _ = canonical_labels(z)
        if not np.array_equal(canon, z):
            raise InvalidArgument(f"labels {z.tolist()} are not canonical; use Partition.from_labels")
        z.setflags(write=False)
        self.z = z
        m = np.bincount(z) if z.size else np.zeros(0, dtype=np.int64)
        m.setflags(write=False)
        self.m = m

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> Partition:
        return cls(canonical_labels(labels)[0])

    @classmethod
    def single(cls, n: int) -> Partition:
        return cls(np.zeros(n, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k_plus(self) -> int:
        return self.m.shape[0]

    def without(self, i: int) -> Partition:
        """The partition of the remaining N-1 nodes after removing node ``i``."""
        return Partition.from_labels(np.delete(self.z, i))

    def key(self) -> bytes:
        return self.z.tobytes()

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.z, other.z)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Partition({self.z.tolist()})"


class ClassOrdering:
    """``o[a]`` is the rank of class ``a``; lower ranks come causally earlier."""

    __slots__ = ("o",)

    def __init__(self, o: Sequence[int]):
        o = np.array(o, dtype=np.int64).reshape(-1)
        if sorted(o.tolist()) != list(range(o.shape[0])):
            raise InvalidArgument(f"ordering {o.tolist()} is not a permutation")
        o.setflags(write=False)
        self.o = o

    @classmethod
    def identity(cls, k: int) -> ClassOrdering:
        return cls(np.arange(k))

    @property
    def k(self) -> int:
        return self.o.shape[0]

    def key(self) -> bytes:
        return self.o.tobytes()

    def __eq__(self, other):
        return isinstance(other, ClassOrdering) and np.array_equal(self.o, other.o)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"ClassOrdering({self.o.tolist()})"


def canonicalize(labels: Sequence[int], ranks: dict[int, int] | Sequence[int] | None = None):
    """Canonical (Partition, ClassOrdering | None) from raw labels.

    ``ranks`` maps raw label -> rank (any comparable numbers); ranks are
    compacted to ``0..K-1`` preserving their relative order.
    """
    z, mapping = canonical_labels(labels)
    p = Partition(z)
    if ranks is None:
        return p, None
    raw = [ranks[label] for label in mapping]  # mapping preserves first-occurrence order
    order = np.argsort(np.asarray(raw, dtype=float), kind="stable")
    o = np.empty(len(raw), dtype=np.int64)
    o[order] = np.arange(len(raw))
    return p, ClassOrdering(o)


def set_partitions(n: int) -> Iterator[Partition]:
    """All set partitions of ``n`` items as canonical label vectors
    (restricted growth strings)."""
    if n == 0:
        yield Partition([])
        return
    z = [0] * n

    def rec(i, k):
        if i == n:
            yield Partition(z)
            return
        for label in range(k + 1):
            z[i] = label
            yield from rec(i + 1, max(k, label + 1))

    yield from rec(1, 1)


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")


def crp_log_prob(p: Partition, alpha: float) -> float:
    """Log probability of a partition under the Chinese restaurant process."""
    _check_alpha(alpha)
    n = p.n
    if n == 0:
        return 0.0
    return float(
        p.k_plus * math.log(alpha)
        + gammaln(alpha)
        - gammaln(n + alpha)
        + np.sum(gammaln(p.m.astype(float)))  # log (m_k - 1)!
    )


def ordering_log_prob(p: Partition) -> float:
    return -float(gammaln(p.k_plus + 1))


def crp_seat_log_probs(p_minus_i: Partition, alpha: float) -> np.ndarray:
    """Seating log-probabilities for one extra node joining ``p_minus_i``.

    Entries ``0..K-1`` are the existing classes, the last entry a new class.
    """
    _check_alpha(alpha)
    denom = p_minus_i.n + alpha
    with np.errstate(divide="ignore"):
        weights = np.append(p_minus_i.m.astype(float), alpha)
        return np.log(weights) - math.log(denom)


@dataclass(frozen=True)
class BlockCounts:
    """Present and absent edge counts between classes.

    ``eligible[a, b]`` marks class pairs whose edge probability is free.
    Counts over ineligible pairs are left at zero.
    """

    n_plus: np.ndarray
    n_minus: np.ndarray
    eligible: np.ndarray


def _pair_totals(m: np.ndarray) -> np.ndarray:
    totals = np.outer(m, m)
    totals[np.diag_indices_from(totals)] -= m  # no self-pairs
    return totals


def block_counts(g: Dag, p: Partition, ord: ClassOrdering | None = None) -> BlockCounts:
    if p.n != g.n:
        raise InvalidArgument("partition and graph disagree on node count")
    k = p.k_plus
    onehot = np.zeros((g.n, k), dtype=np.int64)
    onehot[np.arange(g.n), p.z] = 1
    present = onehot.T @ g.adj.astype(np.int64) @ onehot
    totals = _pair_totals(p.m.astype(np.int64))
    if ord is None:
        eligible = np.ones((k, k), dtype=bool)
    else:
        if ord.k != k:
            raise InvalidArgument("ordering size does not match number of classes")
        eligible = ord.o[:, None] < ord.o[None, :]
    n_plus = np.where(eligible, present, 0)
    n_minus = np.where(eligible, totals - present, 0)
    return BlockCounts(n_plus=n_plus, n_minus=n_minus, eligible=eligible)


def _violates_ordering(g: Dag, p: Partition, ord: ClassOrdering) -> bool:
    src, dst = np.nonzero(g.adj)
    ranks = ord.o[p.z]
    return bool(np.any(ranks[src] >= ranks[dst]))


def collapsed_graph_log_score(
    g: Dag, p: Partition, ord: ClassOrdering | None, h: Hyperparams
) -> float:
    """Beta-Bernoulli marginal of the graph given the classes (and ordering).

    Returns ``-inf`` when an edge runs against the ordering or within a class
    in ordered mode. In unordered mode the value omits the acyclicity
    normalizer and is only proportional to the prior.
    """
    if not is_acyclic(g):
        raise InvalidArgument("graph is cyclic")
    if ord is not None and _violates_ordering(g, p, ord):
        return NEG_INF
    bc = block_counts(g, p, ord)
    terms = betaln(h.beta1 + bc.n_plus, h.beta2 + bc.n_minus) - betaln(h.beta1, h.beta2)
    return float(np.sum(terms[bc.eligible]))


def uniform_graph_log_score(g: Dag) -> float:
    if not is_acyclic(g):
        raise InvalidArgument("graph is cyclic")
    return 0.0


def structure_log_prior(
    kind: PriorKind, g: Dag, p: Partition | None, ord: ClassOrdering | None, h: Hyperparams
) -> float:
    """Log prior of the structural state ``(G, z, o)`` under ``kind``."""
    kind = PriorKind.parse(kind)
    if kind is PriorKind.UNIFORM:
        return uniform_graph_log_score(g)
    if p is None:
        raise InvalidArgument(f"{kind.value} prior needs a partition")
    if kind.ordered and ord is None:
        raise InvalidArgument("ordered-block prior needs a class ordering")
    score = crp_log_prob(p, h.alpha)
    if kind.ordered:
        score += ordering_log_prob(p)
        return score + collapsed_graph_log_score(g, p, ord, h)
    return score + collapsed_graph_log_score(g, p, None, h)
