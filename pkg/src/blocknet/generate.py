"""Forward generation: draws from the block priors, benchmark networks,
CPT parameterizations and data sampling."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import GenerationFailure, InvalidArgument
from .graph import BayesNet, Dag, Dataset, Hyperparams, config_count, config_index, parent_list, topological_order
from .priors import ClassOrdering, Partition, canonicalize
from .seeding import rng_for

MAX_RETRIES = 10**6
_BATCH = 8192


def sample_partition(n: int, alpha: float, rng: np.random.Generator) -> Partition:
    """Sequential Chinese restaurant seating."""
    if n < 1:
        raise InvalidArgument("need at least one node")
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")
    z = np.zeros(n, dtype=np.int64)
    counts = [1]
    for i in range(1, n):
        weights = np.array(counts + [alpha], dtype=float)
        k = int(rng.choice(len(weights), p=weights / weights.sum()))
        if k == len(counts):
            counts.append(1)
        else:
            counts[k] += 1
        z[i] = k
    return Partition(z)


@dataclass(frozen=True)
class EtaMatrix:
    """Class-pair edge probabilities, indexed by class label."""

    eta: np.ndarray

    def __post_init__(self):
        if np.any(self.eta < 0) or np.any(self.eta > 1):
            raise InvalidArgument("edge probabilities must lie in [0, 1]")


def _edge_probs(p: Partition, eta: np.ndarray) -> np.ndarray:
    probs = eta[p.z[:, None], p.z[None, :]]
    np.fill_diagonal(probs, 0.0)
    return probs


def sample_block_dag(
    p: Partition, h: Hyperparams, ordered: bool, rng: np.random.Generator,
    max_retries: int = MAX_RETRIES, eta: np.ndarray | None = None,
):
    """Draw ``(Dag, EtaMatrix, ClassOrdering | None)`` from a block prior.

    Ordered mode is acyclic by construction. Unordered mode redraws eta and
    the graph together until the graph is acyclic, so accepted graphs follow
    the collapsed prior restricted to DAGs. A caller-supplied ``eta`` is held
    fixed across redraws.
    """
    k = p.k_plus
    n = p.n
    fixed = eta is not None
    ord = ClassOrdering(rng.permutation(k)) if ordered else None
    for _ in range(max_retries):
        cur = np.asarray(eta, dtype=float) if fixed else rng.beta(h.beta1, h.beta2, size=(k, k))
        if ordered:
            cur = np.where(ord.o[:, None] < ord.o[None, :], cur, 0.0)
        adj = rng.random((n, n)) < _edge_probs(p, cur)
        if ordered or topological_order(adj) is not None:
            return Dag(adj, check_acyclic=False), EtaMatrix(cur), ord
    raise GenerationFailure(f"no acyclic graph in {max_retries} draws")


def _batch_acyclic(adj: np.ndarray) -> np.ndarray:
    """Acyclicity of a stack of graphs ``(B, n, n)`` by repeated source removal."""
    batch, n, _ = adj.shape
    alive = np.ones((batch, n), dtype=bool)
    a = adj.astype(np.int32)
    for _ in range(n):
        indeg = np.einsum("bi,bij->bj", alive.astype(np.int32), a)
        sources = alive & (indeg == 0)
        if not sources.any():
            break
        alive &= ~sources
    return ~alive.any(axis=1)


def sample_sparse_dag(
    n: int, edge_prob: float, max_degree: int, rng: np.random.Generator, max_retries: int = MAX_RETRIES
) -> Dag:
    """Independent edges over ordered pairs, rejecting cyclic graphs and any
    in- or out-degree above ``max_degree``."""
    if not 0.0 <= edge_prob <= 1.0:
        raise InvalidArgument("edge_prob must lie in [0, 1]")
    drawn = 0
    off = ~np.eye(n, dtype=bool)
    while drawn < max_retries:
        size = min(_BATCH, max_retries - drawn)
        drawn += size
        adj = (rng.random((size, n, n)) < edge_prob) & off
        ok = (adj.sum(axis=1).max(axis=1) <= max_degree) & (adj.sum(axis=2).max(axis=1) <= max_degree)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            continue
        acyclic = _batch_acyclic(adj[idx])
        hits = idx[acyclic]
        if hits.size:
            return Dag(adj[hits[0]], check_acyclic=False)
    raise GenerationFailure(f"no admissible graph in {max_retries} draws")


def sample_dirichlet_cpts(g: Dag, arities, dirichlet_param: float, rng: np.random.Generator, names=None) -> BayesNet:
    if not dirichlet_param > 0:
        raise InvalidArgument("dirichlet_param must be positive")
    arities = np.asarray(arities, dtype=np.int64)
    cpts = []
    for j in range(g.n):
        q = config_count(arities, parent_list(g, j))
        rows = rng.dirichlet(np.full(int(arities[j]), dirichlet_param), size=q)
        rows /= rows.sum(axis=1, keepdims=True)
        cpts.append(rows)
    return BayesNet(g, arities, cpts, names)


def noisy_or_cpts(
    g: Dag, leak: float, activation_range: tuple[float, float], rng: np.random.Generator,
    arities=None, root_range: tuple[float, float] | None = None, names=None,
) -> BayesNet:
    """Binary noisy-OR tables: P(on | parents) = 1 - (1-leak) * prod over
    active parents of (1 - w). Each edge weight w ~ U(activation_range).

    Parentless nodes fire with probability ``leak`` unless ``root_range``
    is given, in which case their base rate is drawn from it.
    """
    if arities is not None and np.any(np.asarray(arities) != 2):
        raise InvalidArgument("noisy-OR requires binary variables")
    if not 0.0 <= leak <= 1.0:
        raise InvalidArgument("leak must lie in [0, 1]")
    lo, hi = activation_range
    cpts = []
    for j in range(g.n):
        parents = parent_list(g, j)
        if not parents and root_range is not None:
            p_on = np.array([rng.uniform(*root_range)])
        else:
            w = rng.uniform(lo, hi, size=len(parents))
            q = 2 ** len(parents)
            # bit t of the configuration index is the state of parents[t]
            bits = (np.arange(q)[:, None] >> np.arange(len(parents))[None, :]) & 1
            p_on = 1.0 - (1.0 - leak) * np.prod(np.where(bits == 1, 1.0 - w[None, :], 1.0), axis=1)
        cpts.append(np.stack([1.0 - p_on, p_on], axis=1))
    return BayesNet(g, np.full(g.n, 2), cpts, names)


def forward_sample(bn: BayesNet, m: int, rng: np.random.Generator) -> Dataset:
    """``m`` i.i.d. rows by ancestral sampling."""
    if m < 0:
        raise InvalidArgument("m must be >= 0")
    rows = np.zeros((m, bn.n), dtype=np.int64)
    for j in topological_order(bn.dag.adj):
        cfg = config_index(rows, bn.arities, parent_list(bn.dag, j))
        cum = np.cumsum(bn.cpts[j][cfg], axis=1)
        u = rng.random(m)
        rows[:, j] = np.minimum((u[:, None] >= cum).sum(axis=1), bn.arities[j] - 1)
    return Dataset(bn.arities, rows, bn.names)


class BenchmarkName(str, enum.Enum):
    LAYERED12 = "layered12"
    SPARSE_RANDOM = "sparse_random"
    QMR_LIKE = "qmr_like"
    REGULATORY = "regulatory"
    HEPAR_SUBSET = "hepar_subset"


_DEFAULTS: dict[str, dict[str, Any]] = {
    "layered12": {"layers": 3, "width": 4, "edge_prob": 0.6, "dirichlet": 0.5, "arity": 2},
    "sparse_random": {"n": 12, "edge_prob": 0.3, "max_degree": 4, "dirichlet": 0.5, "arity": 2},
    "qmr_like": {
        "diseases": 6, "symptoms": 14, "min_parents": 1, "max_parents": 3,
        "leak": 0.01, "activation": (0.4, 0.9), "root_range": (0.2, 0.5),
    },
    "regulatory": {"regulators": 4, "targets": 12, "min_parents": 1, "max_parents": 2, "dirichlet": 0.5, "arity": 2},
    "hepar_subset": {"risk_factors": 6, "diseases": 5, "symptoms": 10, "dirichlet": 0.5, "arity": 2, "path": None},
}


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            name = BenchmarkName(self.name).value
        except ValueError:
            raise InvalidArgument(f"unknown benchmark {self.name!r}; expected one of {[b.value for b in BenchmarkName]}")
        object.__setattr__(self, "name", name)
        unknown = set(self.params) - set(_DEFAULTS[name])
        if unknown:
            raise InvalidArgument(f"unknown parameters for {name}: {sorted(unknown)}")
        if name == "layered12" and (self.resolved["layers"], self.resolved["width"]) != (3, 4):
            raise InvalidArgument("layered12 has 3 layers of 4 nodes")

    @property
    def resolved(self) -> dict:
        return {**_DEFAULTS[self.name], **self.params}


@dataclass
class Benchmark:
    net: BayesNet
    classes: Partition
    ordering: ClassOrdering | None
    name: str = ""

    def __iter__(self):
        return iter((self.net, self.classes))


def _pick_parents(rng, pool: np.ndarray, lo: int, hi: int) -> np.ndarray:
    k = int(rng.integers(lo, hi + 1))
    return np.sort(rng.choice(pool, size=min(k, pool.size), replace=False))


def _layered(prm, rng):
    layers, width = prm["layers"], prm["width"]
    n = layers * width
    adj = np.zeros((n, n), dtype=bool)
    for layer in range(layers - 1):
        src = np.arange(layer * width, (layer + 1) * width)
        dst = src + width
        adj[np.ix_(src, dst)] = rng.random((width, width)) < prm["edge_prob"]
    labels = np.repeat(np.arange(layers), width)
    return adj, labels, list(range(layers))


def _qmr(prm, rng):
    nd, ns = prm["diseases"], prm["symptoms"]
    adj = np.zeros((nd + ns, nd + ns), dtype=bool)
    diseases = np.arange(nd)
    for s in range(nd, nd + ns):
        adj[_pick_parents(rng, diseases, prm["min_parents"], prm["max_parents"]), s] = True
    labels = np.array([0] * nd + [1] * ns)
    return adj, labels, [0, 1]


def _regulatory(prm, rng):
    nr, nt = prm["regulators"], prm["targets"]
    if nr < 4:
        raise InvalidArgument("regulatory needs at least 4 regulators")
    adj = np.zeros((nr + nt, nr + nt), dtype=bool)
    adj[0, 1] = True  # the two within-regulator edges
    adj[2, 3] = True
    regs = np.arange(nr)
    for t in range(nr, nr + nt):
        adj[_pick_parents(rng, regs, prm["min_parents"], prm["max_parents"]), t] = True
    labels = np.array([0] * nr + [1] * nt)
    return adj, labels, [0, 1]


def _hepar(prm, rng):
    nr, nd, ns = prm["risk_factors"], prm["diseases"], prm["symptoms"]
    if nd < 2:
        raise InvalidArgument("hepar_subset needs at least 2 diseases")
    n = nr + nd + ns
    adj = np.zeros((n, n), dtype=bool)
    risks = np.arange(nr)
    diseases = np.arange(nr, nr + nd)
    typical = diseases[:-1]
    # sparse risk -> disease links
    for d in typical:
        adj[_pick_parents(rng, risks, 1, 2), d] = True
    # the odd disease sends its single edge to another disease
    adj[diseases[-1], typical[0]] = True
    for s in range(nr + nd, n):
        adj[_pick_parents(rng, typical, 1, 3), s] = True
    labels = np.array([0] * nr + [1] * nd + [2] * ns)
    return adj, labels, [0, 1, 2]


def build_benchmark(spec: BenchmarkSpec) -> Benchmark:
    """Ground-truth network and classes for a named benchmark, deterministic
    in ``spec.seed``."""
    prm = spec.resolved
    rng = rng_for(spec.seed, "generation", 0)
    if spec.name == "hepar_subset" and prm.get("path"):
        from .io import read_network

        loaded = read_network(prm["path"])
        if loaded.classes is None:
            raise InvalidArgument(f"{prm['path']}: network has no ground-truth classes")
        if loaded.net is None:
            net = sample_dirichlet_cpts(loaded.dag, loaded.arities, prm["dirichlet"], rng, loaded.names)
        else:
            net = loaded.net
        p, ord = canonicalize(loaded.classes, dict(enumerate(loaded.ordering)) if loaded.ordering is not None else None)
        return Benchmark(net, p, ord, spec.name)

    if spec.name == "sparse_random":
        g = sample_sparse_dag(prm["n"], prm["edge_prob"], prm["max_degree"], rng)
        net = sample_dirichlet_cpts(g, np.full(g.n, prm["arity"]), prm["dirichlet"], rng)
        return Benchmark(net, Partition.single(g.n), ClassOrdering.identity(1), spec.name)

    builder = {"layered12": _layered, "qmr_like": _qmr, "regulatory": _regulatory, "hepar_subset": _hepar}[spec.name]
    adj, labels, ranks = builder(prm, rng)
    g = Dag(adj)
    if spec.name == "qmr_like":
        net = noisy_or_cpts(
            g, prm["leak"], tuple(prm["activation"]), rng, root_range=tuple(prm["root_range"])
        )
    else:
        net = sample_dirichlet_cpts(g, np.full(g.n, prm["arity"]), prm["dirichlet"], rng)
    p, ord = canonicalize(labels, dict(enumerate(ranks)))
    return Benchmark(net, p, ord, spec.name)
