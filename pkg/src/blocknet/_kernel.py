"""Compiled inner loops of the collapsed Gibbs sampler.

State lives in flat arrays owned by one chain:

- ``adj[i, j]``   uint8 edge indicators
- ``pmask[j]``    parent bitmask of node ``j``
- ``fam[j]``      cached family log-marginal of node ``j``
- ``z[i]``        canonical class label of node ``i``
- ``m[c]``        class occupancy, ``rank[c]`` class rank, first ``K`` valid
- ``n_plus[a,b]`` present edges from class ``a`` to class ``b``

Random numbers are drawn by the caller so that seeding stays in numpy.
"""

import math

import numpy as np
from numba import njit, types
from numba.typed import Dict

UNIFORM = 0
BLOCK = 1
ORDERED = 2

MAX_NODES = 48
_DENSE_CELLS = 1 << 16
_NEG_INF = -np.inf


def new_cache():
    return Dict.empty(key_type=types.int64, value_type=types.float64)


@njit(cache=True)
def family_score(data, arities, child, mask, gamma):
    n_rows, n = data.shape
    r = arities[child]
    parents = np.empty(n, np.int64)
    n_par = 0
    q = 1
    for p in range(n):
        if (mask >> p) & 1:
            parents[n_par] = p
            n_par += 1
            q *= arities[p]
    keys = np.empty(n_rows, np.int64)
    for row in range(n_rows):
        cfg = 0
        stride = 1
        for t in range(n_par):
            p = parents[t]
            cfg += data[row, p] * stride
            stride *= arities[p]
        keys[row] = cfg * r + data[row, child]
    lg_rg = math.lgamma(r * gamma)
    lg_g = math.lgamma(gamma)
    total = 0.0
    if q * r <= _DENSE_CELLS:
        counts = np.zeros(q * r, np.int64)
        for row in range(n_rows):
            counts[keys[row]] += 1
        for j in range(q):
            nj = 0
            for k in range(r):
                nj += counts[j * r + k]
            if nj == 0:
                continue
            total += lg_rg - math.lgamma(r * gamma + nj)
            for k in range(r):
                c = counts[j * r + k]
                if c > 0:
                    total += math.lgamma(gamma + c) - lg_g
    else:
        keys.sort()
        i = 0
        while i < n_rows:
            cfg = keys[i] // r
            nj = 0
            j = i
            while j < n_rows and keys[j] // r == cfg:
                cell = keys[j]
                c = 0
                while j < n_rows and keys[j] == cell:
                    c += 1
                    j += 1
                total += math.lgamma(gamma + c) - lg_g
                nj += c
            total += lg_rg - math.lgamma(r * gamma + nj)
            i = j
    return total


@njit(cache=True)
def cached_family(cache, data, arities, child, mask, gamma):
    key = mask * data.shape[1] + child
    if key in cache:
        return cache[key]
    value = family_score(data, arities, child, mask, gamma)
    cache[key] = value
    return value


@njit(cache=True)
def reaches(adj, src, dst, stack, seen):
    """True if ``dst`` is reachable from ``src`` along directed edges."""
    n = adj.shape[0]
    for v in range(n):
        seen[v] = False
    stack[0] = src
    seen[src] = True
    top = 1
    while top > 0:
        top -= 1
        v = stack[top]
        for w in range(n):
            if adj[v, w] and not seen[w]:
                if w == dst:
                    return True
                seen[w] = True
                stack[top] = w
                top += 1
    return False


@njit(cache=True)
def pair_total(m, a, b):
    if a == b:
        return m[a] * (m[a] - 1)
    return m[a] * m[b]


@njit(cache=True)
def block_term(n_plus, total, beta1, beta2, lbeta0):
    n_minus = total - n_plus
    return (
        math.lgamma(beta1 + n_plus)
        + math.lgamma(beta2 + n_minus)
        - math.lgamma(beta1 + beta2 + total)
        - lbeta0
    )


@njit(cache=True)
def collapsed_total(n_plus, m, rank, k, ordered, beta1, beta2, lbeta0):
    s = 0.0
    for a in range(k):
        for b in range(k):
            if ordered and rank[a] >= rank[b]:
                if n_plus[a, b] > 0:
                    return _NEG_INF
                continue
            s += block_term(n_plus[a, b], pair_total(m, a, b), beta1, beta2, lbeta0)
    return s


@njit(cache=True)
def crp_total(m, k, n, alpha):
    s = k * math.log(alpha) + math.lgamma(alpha) - math.lgamma(n + alpha)
    for c in range(k):
        s += math.lgamma(m[c])
    return s


@njit(cache=True)
def prior_total(mode, n_plus, m, rank, k, n, alpha, beta1, beta2, lbeta0):
    if mode == UNIFORM:
        return 0.0
    s = crp_total(m, k, n, alpha)
    if mode == ORDERED:
        s -= math.lgamma(k + 1.0)
    return s + collapsed_total(n_plus, m, rank, k, mode == ORDERED, beta1, beta2, lbeta0)


@njit(cache=True)
def _toggle_prob(delta, inv_temp):
    x = delta * inv_temp
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def edge_sweep(
    adj, pmask, fam, cache, data, arities, gamma,
    mode, z, m, rank, n_plus, beta1, beta2, lbeta0,
    src, dst, u, inv_temp, stack, seen,
):
    """Gibbs update of each listed edge indicator, in the given order."""
    for t in range(src.shape[0]):
        i = src[t]
        j = dst[t]
        present = adj[i, j] != 0
        if not present:
            if mode == ORDERED and rank[z[i]] >= rank[z[j]]:
                continue
            if reaches(adj, j, i, stack, seen):
                continue
        new_mask = pmask[j] ^ (np.int64(1) << i)
        new_fam = cached_family(cache, data, arities, j, new_mask, gamma)
        delta = new_fam - fam[j]
        k_new = 0
        a = 0
        b = 0
        if mode != UNIFORM:
            a = z[i]
            b = z[j]
            total = pair_total(m, a, b)
            k_old = n_plus[a, b]
            k_new = k_old - 1 if present else k_old + 1
            delta += block_term(k_new, total, beta1, beta2, lbeta0) - block_term(
                k_old, total, beta1, beta2, lbeta0
            )
        if u[t] < _toggle_prob(delta, inv_temp):
            adj[i, j] = 0 if present else 1
            pmask[j] = new_mask
            fam[j] = new_fam
            if mode != UNIFORM:
                n_plus[a, b] = k_new


@njit(cache=True)
def _drop_class(a, z, m, rank, n_plus, k):
    ra = rank[a]
    for c in range(a, k - 1):
        m[c] = m[c + 1]
        rank[c] = rank[c + 1]
    m[k - 1] = 0
    for c in range(a, k - 1):
        for b in range(k):
            n_plus[c, b] = n_plus[c + 1, b]
    for b in range(a, k - 1):
        for c in range(k):
            n_plus[c, b] = n_plus[c, b + 1]
    for c in range(k):
        n_plus[k - 1, c] = 0
        n_plus[c, k - 1] = 0
    for c in range(k - 1):
        if rank[c] > ra:
            rank[c] -= 1
    for j in range(z.shape[0]):
        if z[j] > a:
            z[j] -= 1


@njit(cache=True)
def canonicalize(z, m, rank, n_plus, k, ordered):
    n = z.shape[0]
    newlab = np.full(k, -1, np.int64)
    nxt = 0
    for j in range(n):
        if newlab[z[j]] < 0:
            newlab[z[j]] = nxt
            nxt += 1
    m_old = m[:k].copy()
    r_old = rank[:k].copy()
    np_old = n_plus[:k, :k].copy()
    for c in range(k):
        m[newlab[c]] = m_old[c]
        rank[newlab[c]] = r_old[c] if ordered else newlab[c]
        for b in range(k):
            n_plus[newlab[c], newlab[b]] = np_old[c, b]
    for j in range(n):
        z[j] = newlab[z[j]]


@njit(cache=True)
def class_move(
    i, adj, z, m, rank, k_box, n_plus, mode, alpha, beta1, beta2, lbeta0, u, inv_temp,
):
    """Gibbs update of the class of node ``i`` (and, in ordered mode, the
    rank of a newly created class). Returns the new structure log-prior."""
    n = adj.shape[0]
    ordered = mode == ORDERED
    k = k_box[0]
    a = z[i]
    for j in range(n):
        if j == i:
            continue
        if adj[i, j]:
            n_plus[a, z[j]] -= 1
        if adj[j, i]:
            n_plus[z[j], a] -= 1
    m[a] -= 1
    z[i] = -1
    if m[a] == 0:
        _drop_class(a, z, m, rank, n_plus, k)
        k -= 1

    out_c = np.zeros(k + 1, np.int64)
    in_c = np.zeros(k + 1, np.int64)
    for j in range(n):
        if j == i:
            continue
        if adj[i, j]:
            out_c[z[j]] += 1
        if adj[j, i]:
            in_c[z[j]] += 1

    n_new = k + 1 if ordered else 1
    n_cand = k + n_new
    logw = np.empty(n_cand)
    scratch = np.zeros((k + 1, k + 1), np.int64)
    m2 = np.zeros(k + 1, np.int64)
    rank2 = np.zeros(k + 1, np.int64)
    for cand in range(n_cand):
        for c in range(k):
            m2[c] = m[c]
            rank2[c] = rank[c]
            for b in range(k):
                scratch[c, b] = n_plus[c, b]
        if cand < k:
            target = cand
            k2 = k
        else:
            target = k
            k2 = k + 1
            pos = cand - k
            for b in range(k + 1):
                scratch[k, b] = 0
                scratch[b, k] = 0
            m2[k] = 0
            if ordered:
                for c in range(k):
                    if rank[c] >= pos:
                        rank2[c] = rank[c] + 1
                rank2[k] = pos
            else:
                rank2[k] = k
        m2[target] += 1
        for b in range(k):
            scratch[target, b] += out_c[b]
            scratch[b, target] += in_c[b]
        s = crp_total(m2, k2, n, alpha)
        if ordered:
            s -= math.lgamma(k2 + 1.0)
        s += collapsed_total(scratch, m2, rank2, k2, ordered, beta1, beta2, lbeta0)
        logw[cand] = s

    top = logw.max()
    weights = np.exp((logw - top) * inv_temp)
    threshold = u * weights.sum()
    chosen = n_cand - 1
    acc = 0.0
    for cand in range(n_cand):
        acc += weights[cand]
        if threshold < acc:
            chosen = cand
            break
    while weights[chosen] == 0.0:  # guard against landing on a zero-mass tail
        chosen -= 1

    if chosen < k:
        target = chosen
    else:
        target = k
        pos = chosen - k
        m[k] = 0
        for b in range(k + 1):
            n_plus[k, b] = 0
            n_plus[b, k] = 0
        if ordered:
            for c in range(k):
                if rank[c] >= pos:
                    rank[c] += 1
            rank[k] = pos
        else:
            rank[k] = k
        k += 1
    z[i] = target
    m[target] += 1
    for b in range(k):
        if b == target:
            continue
        n_plus[target, b] += out_c[b]
        n_plus[b, target] += in_c[b]
    if target < out_c.shape[0]:
        n_plus[target, target] += out_c[target] + in_c[target]
    canonicalize(z, m, rank, n_plus, k, ordered)
    k_box[0] = k
    return logw[chosen]


@njit(cache=True)
def class_sweep(
    order, adj, z, m, rank, k_box, n_plus, mode, alpha, beta1, beta2, lbeta0, u, inv_temp,
):
    for t in range(order.shape[0]):
        class_move(
            order[t], adj, z, m, rank, k_box, n_plus, mode, alpha, beta1, beta2, lbeta0, u[t], inv_temp,
        )
