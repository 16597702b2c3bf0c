"""Compiled inner loops: toggles, change statistics and Metropolis sweeps.

Network state is carried as plain arrays so that every loop can run under
``numba.njit(nogil=True)``:

``adj``  uint8 (n, n)   dyad membership
``nbr``  int32 (n, n)   neighbour lists, row ``i`` valid up to ``deg[i]``
``pos``  int32 (n, n)   position of ``j`` inside ``nbr[i]`` when ``adj[i, j]``
``deg``  int32 (n,)     degrees
``y``    int64 (n,)     binary outcomes

Terms are encoded as parallel arrays ``kinds``, ``attrs`` and ``params``.
An attribute index of ``OUTCOME`` refers to ``y``; non-negative indices
refer to rows of the categorical (``xcat``) and numeric (``xnum``)
covariate matrices.  ``aux`` holds per-category concordant edge counts for
the square-root homophily variant.

Random numbers come from a ``numpy.random.Generator`` (PCG64 by default)
passed into the kernels, so a given seed reproduces a chain exactly.
"""

import math

import numpy as np
from numba import njit

EDGES = 0
GWESP = 1
GWDEG = 2
HOMOPHILY = 3
HOMOPHILY_SQRT = 4
INTERCEPT = 5
MAIN_COVARIATE = 6
NEIGHBOR_COUNT = 7

OUTCOME = -1
NO_ATTR = -2


@njit(cache=True, nogil=True)
def _remove_neighbor(nbr, pos, deg, i, j):
    k = pos[i, j]
    last = deg[i] - 1
    w = nbr[i, last]
    nbr[i, k] = w
    pos[i, w] = k
    deg[i] = last


@njit(cache=True, nogil=True)
def _add_neighbor(nbr, pos, deg, i, j):
    d = deg[i]
    nbr[i, d] = j
    pos[i, j] = d
    deg[i] = d + 1


@njit(cache=True, nogil=True)
def toggle_edge(adj, nbr, pos, deg, i, j):
    if adj[i, j]:
        _remove_neighbor(nbr, pos, deg, i, j)
        _remove_neighbor(nbr, pos, deg, j, i)
        adj[i, j] = 0
        adj[j, i] = 0
    else:
        _add_neighbor(nbr, pos, deg, i, j)
        _add_neighbor(nbr, pos, deg, j, i)
        adj[i, j] = 1
        adj[j, i] = 1


@njit(cache=True, nogil=True)
def _category(attr, node, y, xcat):
    if attr == OUTCOME:
        return y[node]
    return xcat[attr, node]


@njit(cache=True, nogil=True)
def _value(attr, node, y, xnum):
    if attr == OUTCOME:
        return float(y[node])
    return xnum[attr, node]


@njit(cache=True, nogil=True)
def _shared_partners(adj, nbr, deg, a, b, hattr, xcat):
    """Common neighbours of ``a`` and ``b``; with ``hattr >= 0`` only those
    sharing ``a``'s category are counted."""
    if deg[a] > deg[b]:
        a, b = b, a
    count = 0
    for q in range(deg[a]):
        w = nbr[a, q]
        if adj[b, w] and (hattr < 0 or xcat[hattr, w] == xcat[hattr, a]):
            count += 1
    return count


@njit(cache=True, nogil=True)
def edge_change(i, j, adj, nbr, deg, y, xcat, xnum, kinds, attrs, params, aux, out):
    """Write into ``out`` the change in every statistic when dyad (i, j) flips."""
    present = adj[i, j] == 1
    s = -1.0 if present else 1.0
    off = 1 if present else 0
    for t in range(kinds.shape[0]):
        kind = kinds[t]
        if kind == EDGES:
            out[t] = s
        elif kind == GWESP:
            h = attrs[t]
            if h >= 0 and xcat[h, i] != xcat[h, j]:
                out[t] = 0.0
                continue
            theta = params[t]
            r = 1.0 - math.exp(-theta)
            if deg[i] <= deg[j]:
                a = i
                b = j
            else:
                a = j
                b = i
            count = 0
            acc = 0.0
            for q in range(deg[a]):
                w = nbr[a, q]
                if not adj[b, w]:
                    continue
                if h >= 0 and xcat[h, w] != xcat[h, i]:
                    continue
                count += 1
                sp_iw = _shared_partners(adj, nbr, deg, i, w, h, xcat) - off
                sp_jw = _shared_partners(adj, nbr, deg, j, w, h, xcat) - off
                acc += r**sp_iw + r**sp_jw
            out[t] = s * (math.exp(theta) * (1.0 - r**count) + acc)
        elif kind == GWDEG:
            r = 1.0 - math.exp(-params[t])
            out[t] = s * (r ** (deg[i] - off) + r ** (deg[j] - off))
        elif kind == HOMOPHILY:
            a_attr = attrs[t]
            if _category(a_attr, i, y, xcat) == _category(a_attr, j, y, xcat):
                out[t] = s
            else:
                out[t] = 0.0
        elif kind == HOMOPHILY_SQRT:
            a_attr = attrs[t]
            ci = _category(a_attr, i, y, xcat)
            if ci == _category(a_attr, j, y, xcat):
                e = aux[t, ci]
                out[t] = math.sqrt(e + s) - math.sqrt(e)
            else:
                out[t] = 0.0
        elif kind == NEIGHBOR_COUNT:
            a_attr = attrs[t]
            out[t] = s * (
                y[i] * _value(a_attr, j, y, xnum) + y[j] * _value(a_attr, i, y, xnum)
            )
        else:
            out[t] = 0.0


@njit(cache=True, nogil=True)
def _same_outcome_neighbors(nbr, deg, y, i):
    count = 0
    yi = y[i]
    for q in range(deg[i]):
        if y[nbr[i, q]] == yi:
            count += 1
    return count


@njit(cache=True, nogil=True)
def node_change(i, nbr, deg, y, xcat, xnum, kinds, attrs, params, aux, out):
    """Write into ``out`` the change in every statistic when ``y[i]`` flips."""
    yi = y[i]
    s = 1.0 if yi == 0 else -1.0
    for t in range(kinds.shape[0]):
        kind = kinds[t]
        a_attr = attrs[t]
        if kind == HOMOPHILY:
            if a_attr == OUTCOME:
                same = _same_outcome_neighbors(nbr, deg, y, i)
                out[t] = deg[i] - 2.0 * same
            else:
                out[t] = 0.0
        elif kind == HOMOPHILY_SQRT:
            if a_attr == OUTCOME:
                same = _same_outcome_neighbors(nbr, deg, y, i)
                e_old = aux[t, yi]
                e_new = aux[t, 1 - yi]
                out[t] = (
                    math.sqrt(e_old - same)
                    - math.sqrt(e_old)
                    + math.sqrt(e_new + deg[i] - same)
                    - math.sqrt(e_new)
                )
            else:
                out[t] = 0.0
        elif kind == INTERCEPT:
            out[t] = s
        elif kind == MAIN_COVARIATE:
            out[t] = s * xnum[a_attr, i]
        elif kind == NEIGHBOR_COUNT:
            total = 0.0
            for q in range(deg[i]):
                total += _value(a_attr, nbr[i, q], y, xnum)
            if a_attr == OUTCOME:
                total *= 2.0
            out[t] = s * total
        else:
            out[t] = 0.0


@njit(cache=True, nogil=True)
def _update_aux_edge(i, j, present, y, xcat, kinds, attrs, aux):
    for t in range(kinds.shape[0]):
        if kinds[t] == HOMOPHILY_SQRT:
            ci = _category(attrs[t], i, y, xcat)
            if ci == _category(attrs[t], j, y, xcat):
                aux[t, ci] += -1.0 if present else 1.0


@njit(cache=True, nogil=True)
def _update_aux_node(i, nbr, deg, y, kinds, attrs, aux):
    # called before y[i] flips
    same = -1
    for t in range(kinds.shape[0]):
        if kinds[t] == HOMOPHILY_SQRT and attrs[t] == OUTCOME:
            if same < 0:
                same = _same_outcome_neighbors(nbr, deg, y, i)
            aux[t, y[i]] -= same
            aux[t, 1 - y[i]] += deg[i] - same


@njit(cache=True, nogil=True)
def _accept(logit, rng):
    if not math.isfinite(logit):
        raise ValueError("non-finite acceptance logit; check the model and parameters")
    if logit >= 0.0:
        return True
    return rng.random() < math.exp(logit)


@njit(cache=True, nogil=True)
def mh_steps(
    n_steps, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
    kinds, attrs, params, aux, eta, g, delta, rng,
):
    """Run ``n_steps`` single-toggle Metropolis proposals in place.

    With probability ``p_edge`` a uniformly random dyad is proposed, otherwise
    a uniformly random node outcome.  ``g`` is advanced by accepted change
    statistics.  Returns the number of accepted proposals.
    """
    n = adj.shape[0]
    p = eta.shape[0]
    accepted = 0
    for _ in range(n_steps):
        if p_edge >= 1.0:
            edge_move = True
        elif p_edge <= 0.0:
            edge_move = False
        else:
            edge_move = rng.random() < p_edge
        if edge_move:
            i = rng.integers(0, n)
            j = rng.integers(0, n - 1)
            if j >= i:
                j += 1
            edge_change(i, j, adj, nbr, deg, y, xcat, xnum, kinds, attrs, params, aux, delta)
        else:
            i = rng.integers(0, n)
            j = -1
            node_change(i, nbr, deg, y, xcat, xnum, kinds, attrs, params, aux, delta)
        logit = 0.0
        for t in range(p):
            logit += eta[t] * delta[t]
        if _accept(logit, rng):
            if edge_move:
                _update_aux_edge(i, j, adj[i, j] == 1, y, xcat, kinds, attrs, aux)
                toggle_edge(adj, nbr, pos, deg, i, j)
            else:
                _update_aux_node(i, nbr, deg, y, kinds, attrs, aux)
                y[i] = 1 - y[i]
            for t in range(p):
                g[t] += delta[t]
            accepted += 1
    return accepted


@njit(cache=True, nogil=True)
def mh_sample(
    burn_in, thin, n_samples, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
    kinds, attrs, params, aux, eta, g, rng, out_stats, out_edges,
):
    """Burn in, then record ``g`` and the edge count every ``thin`` proposals."""
    delta = np.zeros(eta.shape[0])
    accepted = mh_steps(
        burn_in, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
        kinds, attrs, params, aux, eta, g, delta, rng,
    )
    for s in range(n_samples):
        accepted += mh_steps(
            thin, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
            kinds, attrs, params, aux, eta, g, delta, rng,
        )
        out_stats[s, :] = g
        out_edges[s] = deg.sum() // 2
    return accepted


@njit(cache=True, nogil=True)
def dag_steps(
    T, node_steps, edge_steps, adj, nbr, pos, deg, y, xcat, xnum,
    kinds, attrs, params, aux, eta, g, rng,
):
    """Alternate an outcome phase and an edge phase ``T`` times."""
    delta = np.zeros(eta.shape[0])
    accepted = 0
    for _ in range(T):
        accepted += mh_steps(
            node_steps, 0.0, adj, nbr, pos, deg, y, xcat, xnum,
            kinds, attrs, params, aux, eta, g, delta, rng,
        )
        accepted += mh_steps(
            edge_steps, 1.0, adj, nbr, pos, deg, y, xcat, xnum,
            kinds, attrs, params, aux, eta, g, delta, rng,
        )
    return accepted


@njit(cache=True, nogil=True)
def neighbor_sums(nbr, deg, v, out):
    for i in range(deg.shape[0]):
        total = 0.0
        for q in range(deg[i]):
            total += v[nbr[i, q]]
        out[i] = total


@njit(cache=True, nogil=True)
def sample_configurations(
    burn_in, thin, n_sims, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
    kinds, attrs, params, aux, eta, g, rng, z, out_y, out_t, out_o,
):
    """Record outcomes and one-step exposures of every node per retained state.

    ``out_t`` receives the number of treated neighbours and ``out_o`` the
    number of neighbours with outcome 1.
    """
    n = y.shape[0]
    delta = np.zeros(eta.shape[0])
    yf = np.empty(n)
    tmp = np.empty(n)
    mh_steps(
        burn_in, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
        kinds, attrs, params, aux, eta, g, delta, rng,
    )
    for s in range(n_sims):
        if s > 0:
            mh_steps(
                thin, p_edge, adj, nbr, pos, deg, y, xcat, xnum,
                kinds, attrs, params, aux, eta, g, delta, rng,
            )
        for i in range(n):
            yf[i] = y[i]
            out_y[s, i] = y[i]
        neighbor_sums(nbr, deg, z, tmp)
        for i in range(n):
            out_t[s, i] = int(tmp[i])
        neighbor_sums(nbr, deg, yf, tmp)
        for i in range(n):
            out_o[s, i] = int(tmp[i])


@njit(cache=True, nogil=True)
def geodesic_counts(nbr, deg):
    """All-pairs BFS; ``counts[d]`` is the number of unordered pairs at
    distance ``d`` and ``counts[0]`` collects unreachable pairs."""
    n = deg.shape[0]
    counts = np.zeros(max(n, 1), dtype=np.int64)
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for src in range(n):
        dist[:] = -1
        dist[src] = 0
        head = 0
        tail = 1
        queue[0] = src
        while head < tail:
            u = queue[head]
            head += 1
            for q in range(deg[u]):
                w = nbr[u, q]
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue[tail] = w
                    tail += 1
        for v in range(src + 1, n):
            if dist[v] < 0:
                counts[0] += 1
            else:
                counts[dist[v]] += 1
    return counts
