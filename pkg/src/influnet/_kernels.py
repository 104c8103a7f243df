"""Jitted hot loops: per-source shortest-path passes and the epidemic step loop.

All kernels take the CSR arrays directly so they stay allocation-light; callers
own the conversion from Graph. Compiled artifacts are cached on disk, so only
the very first call in a fresh environment pays the JIT cost.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def brandes_betweenness(indptr, indices, n):
    """Accumulated pair-dependency betweenness, one BFS/backprop per source.

    Returns the unordered-pair count (forward accumulation over ordered
    source/target pairs, halved), endpoints excluded.
    """
    bc = np.zeros(n)
    dist = np.empty(n, np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, np.int64)
    for s in range(n):
        dist[:] = -1
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head, tail = 0, 1
        while head < tail:
            u = order[head]
            head += 1
            du = dist[u]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if dist[v] < 0:
                    dist[v] = du + 1
                    order[tail] = v
                    tail += 1
                if dist[v] == du + 1:
                    sigma[v] += sigma[u]
        for i in range(tail - 1, 0, -1):
            w = order[i]
            coeff = (1.0 + delta[w]) / sigma[w]
            dw = dist[w]
            for k in range(indptr[w], indptr[w + 1]):
                v = indices[k]
                if dist[v] == dw - 1:
                    delta[v] += sigma[v] * coeff
        for v in range(n):
            if v != s:
                bc[v] += delta[v]
    return bc * 0.5


@njit(cache=True)
def bfs_distance_sums(indptr, indices, n):
    """Per-source (sum of distances to reachable nodes, reachable count)."""
    sums = np.zeros(n, np.int64)
    reach = np.zeros(n, np.int64)
    dist = np.empty(n, np.int64)
    order = np.empty(n, np.int64)
    for s in range(n):
        dist[:] = -1
        dist[s] = 0
        order[0] = s
        head, tail = 0, 1
        total = 0
        while head < tail:
            u = order[head]
            head += 1
            du = dist[u]
            total += du
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if dist[v] < 0:
                    dist[v] = du + 1
                    order[tail] = v
                    tail += 1
        sums[s] = total
        reach[s] = tail
    return sums, reach


@njit(cache=True)
def sir_run(indptr, indices, n, seed_node, beta, gamma, rng):
    """One synchronous epidemic from ``seed_node``; returns final |R| + |I|.

    Each step: every infectious node attacks each susceptible neighbor with
    probability beta (a target attacked k times is infected with probability
    1 - (1-beta)^k, coins drawn in ascending target order); then every node
    that was infectious before the step recovers with probability gamma.
    """
    state = np.zeros(n, np.uint8)  # 0 susceptible, 1 infectious, 2 recovered
    state[seed_node] = 1
    infectious = np.empty(n, np.int64)
    infectious[0] = seed_node
    n_inf = 1
    attacked = np.zeros(n, np.int64)
    touched = np.empty(n, np.int64)
    newly = np.empty(n, np.int64)
    total = 1
    while n_inf > 0:
        n_touch = 0
        for i in range(n_inf):
            u = infectious[i]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if state[v] == 0:
                    if attacked[v] == 0:
                        touched[n_touch] = v
                        n_touch += 1
                    attacked[v] += 1
        n_new = 0
        if n_touch > 0:
            sub = np.sort(touched[:n_touch])
            for i in range(n_touch):
                v = sub[i]
                p = 1.0 - (1.0 - beta) ** attacked[v]
                if rng.random() < p:
                    state[v] = 1
                    newly[n_new] = v
                    n_new += 1
                attacked[v] = 0
        total += n_new
        if gamma >= 1.0:
            for i in range(n_inf):
                state[infectious[i]] = 2
            n_keep = 0
        else:
            n_keep = 0
            for i in range(n_inf):
                u = infectious[i]
                if rng.random() < gamma:
                    state[u] = 2
                else:
                    infectious[n_keep] = u
                    n_keep += 1
        for i in range(n_new):
            infectious[n_keep + i] = newly[i]
        n_inf = n_keep + n_new
    return total
