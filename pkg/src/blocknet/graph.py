"""Core graph, dataset and network types.

Adjacency is dense: ``adj[i, j]`` is True when the edge ``i -> j`` exists.
Node indices are 0-based everywhere.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def topological_order(adj: np.ndarray) -> list[int] | None:
    """Kahn's algorithm; returns None when the graph has a cycle."""
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    queue = deque(i for i in range(n) if indeg[i] == 0)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in np.flatnonzero(adj[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(int(w))
    if len(order) != n:
        return None
    return order


class Dag:
    """Directed graph over ``n`` nodes with a read-only boolean adjacency.

    Construction checks acyclicity unless ``check_acyclic=False``; only
    proposal evaluation (``toggle_edge``) builds unchecked graphs.
    """

    __slots__ = ("adj", "_key")

    def __init__(self, adj, check_acyclic: bool = True):
        adj = np.array(adj, dtype=bool, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InvalidArgument(f"adjacency must be square, got shape {adj.shape}")
        if np.any(np.diagonal(adj)):
            raise InvalidArgument("self-edges are not allowed")
        if check_acyclic and topological_order(adj) is None:
            raise InvalidArgument("graph contains a directed cycle")
        self.adj = _frozen(adj)
        self._key = None

    @classmethod
    def empty(cls, n: int) -> Dag:
        return cls(np.zeros((n, n), dtype=bool), check_acyclic=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], check_acyclic: bool = True) -> Dag:
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgument(f"edge ({i}, {j}) out of range for {n} nodes")
            adj[i, j] = True
        return cls(adj, check_acyclic=check_acyclic)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adj))]

    def num_edges(self) -> int:
        return int(self.adj.sum())

    def key(self) -> bytes:
        if self._key is None:
            self._key = np.packbits(self.adj).tobytes() + self.n.to_bytes(4, "little")
        return self._key

    def __eq__(self, other):
        return isinstance(other, Dag) and self.n == other.n and bool(np.array_equal(self.adj, other.adj))

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Dag(n={self.n}, edges={self.edges()})"


def is_acyclic(dag: Dag) -> bool:
    return topological_order(dag.adj) is not None


def toggle_edge(dag: Dag, i: int, j: int) -> Dag:
    """Flip ``i -> j``. The result may be cyclic; callers check."""
    if i == j:
        raise InvalidArgument("cannot toggle a self-edge")
    adj = dag.adj.copy()
    adj[i, j] = not adj[i, j]
    return Dag(adj, check_acyclic=False)


def parent_set(dag: Dag, j: int) -> frozenset[int]:
    return frozenset(int(i) for i in np.flatnonzero(dag.adj[:, j]))


def parent_list(dag: Dag, j: int) -> list[int]:
    """Parents of ``j`` in ascending node order."""
    return [int(i) for i in np.flatnonzero(dag.adj[:, j])]


class Dataset:
    """Complete discrete observations: ``rows[m, i]`` in ``[0, arities[i])``."""

    __slots__ = ("arities", "rows", "names")

    def __init__(self, arities, rows, names: Sequence[str] | None = None):
        arities = np.array(arities, dtype=np.int64).reshape(-1)
        n = arities.shape[0]
        rows = np.array(rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, n)
        if rows.ndim != 2 or rows.shape[1] != n:
            raise InvalidArgument(f"rows must have shape (M, {n}), got {rows.shape}")
        if np.any(arities < 2):
            raise InvalidArgument("every arity must be at least 2")
        if rows.size and (np.any(rows < 0) or np.any(rows >= arities[None, :])):
            bad = np.argwhere((rows < 0) | (rows >= arities[None, :]))[0]
            raise InvalidArgument(
                f"value {rows[bad[0], bad[1]]} at row {bad[0]} outside arity {arities[bad[1]]} of variable {bad[1]}"
            )
        if names is None:
            names = [f"X{i}" for i in range(n)]
        if len(names) != n:
            raise InvalidArgument("names must match the number of variables")
        self.arities = _frozen(arities)
        self.rows = _frozen(np.ascontiguousarray(rows))
        self.names = tuple(names)

    @property
    def n_vars(self) -> int:
        return self.arities.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def head(self, m: int) -> Dataset:
        return Dataset(self.arities, self.rows[:m], self.names)

    def __len__(self):
        return self.n_rows

    def __repr__(self):
        return f"Dataset(n_vars={self.n_vars}, n_rows={self.n_rows})"


def config_count(arities: np.ndarray, parents: Sequence[int]) -> int:
    return int(np.prod([arities[p] for p in parents], dtype=np.int64)) if parents else 1


def config_index(values: np.ndarray, arities: np.ndarray, parents: Sequence[int]) -> np.ndarray:
    """Mixed-radix parent configuration index, lowest-index parent fastest.

    ``values`` is ``(M, N)``; returns an ``(M,)`` integer array.
    """
    idx = np.zeros(values.shape[0], dtype=np.int64)
    stride = 1
    for p in sorted(parents):
        idx += values[:, p] * stride
        stride *= int(arities[p])
    return idx


class BayesNet:
    """A DAG elaborated with one CPT per node.

    ``cpts[i]`` has shape ``(configs, arity_i)`` where rows are indexed by
    :func:`config_index` over the parents of ``i``.
    """

    def __init__(self, dag: Dag, arities, cpts: Sequence, names: Sequence[str] | None = None):
        self.dag = dag
        self.arities = _frozen(np.array(arities, dtype=np.int64))
        if self.arities.shape[0] != dag.n:
            raise InvalidArgument("arities length does not match node count")
        if len(cpts) != dag.n:
            raise InvalidArgument("need one CPT per node")
        tables = []
        for i, cpt in enumerate(cpts):
            cpt = np.array(cpt, dtype=float)
            rows = config_count(self.arities, parent_list(dag, i))
            if cpt.shape != (rows, self.arities[i]):
                raise InvalidArgument(
                    f"CPT of node {i} has shape {cpt.shape}, expected {(rows, int(self.arities[i]))}"
                )
            if np.any(cpt < 0) or not np.allclose(cpt.sum(axis=1), 1.0, rtol=0, atol=1e-12):
                raise InvalidArgument(f"CPT rows of node {i} are not probability vectors")
            tables.append(_frozen(cpt))
        self.cpts = tuple(tables)
        self.names = tuple(names) if names is not None else tuple(f"X{i}" for i in range(dag.n))

    @property
    def n(self) -> int:
        return self.dag.n

    def log_prob(self, rows: np.ndarray) -> np.ndarray:
        """Log joint probability of each complete row."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
        out = np.zeros(rows.shape[0])
        with np.errstate(divide="ignore"):
            for i in range(self.n):
                cfg = config_index(rows, self.arities, parent_list(self.dag, i))
                out += np.log(self.cpts[i][cfg, rows[:, i]])
        return out


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.5
    beta1: float = 1.0
    beta2: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta1", "beta2", "gamma"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidArgument(f"{name} must be a positive finite number, got {value}")
