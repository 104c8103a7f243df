"""The 15 node centralities: 4 whole-graph metrics and 11 neighborhood metrics.

Each metric has a self-contained function so the per-metric wall-clock numbers
reported by :func:`compute` are honest (no hidden work shared between columns).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp

from .graph import Graph

GLOBAL_METRICS = ("Closeness", "Betweenness", "PageRank", "Eigenvector")
LOCAL_METRICS = (
    "Degree",
    "ExtendedDegree",
    "AccumulatedDegree",
    "NodeMass",
    "ConductanceOfEgonet",
    "DensityOfEgonet",
    "LCC",
    "CoredCosine",
    "CoredJaccard",
    "CoredPearson",
    "SPA",
)
ALL_METRICS = GLOBAL_METRICS + LOCAL_METRICS


def is_local(name: str) -> bool:
    if name not in ALL_METRICS:
        raise ValueError(f"unknown metric {name!r}")
    return name in LOCAL_METRICS


def _neighbor_sum(g: Graph, values: np.ndarray) -> np.ndarray:
    """Per-node sum of ``values`` over the node's neighbors."""
    cs = np.concatenate([[0.0], np.cumsum(values[g.indices], dtype=np.float64)])
    return cs[g.indptr[1:]] - cs[g.indptr[:-1]]


def _edge_common_neighbors(g: Graph) -> np.ndarray:
    """|N(u) ∩ N(v)| for every edge row of g.edges."""
    out = np.empty(g.n_edges, dtype=np.int64)
    for i, (u, v) in enumerate(g.edges):
        out[i] = np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True).size
    return out


def _triangles(g: Graph) -> np.ndarray:
    """Number of triangles through each node."""
    common = _edge_common_neighbors(g)
    twice = np.zeros(g.n, dtype=np.int64)
    np.add.at(twice, g.edges[:, 0], common)
    np.add.at(twice, g.edges[:, 1], common)
    return twice // 2


def _sparse_adjacency(g: Graph) -> sp.csr_matrix:
    data = np.ones(g.indices.size, dtype=np.float64)
    return sp.csr_matrix((data, g.indices, g.indptr), shape=(g.n, g.n))


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


# -- degree family -----------------------------------------------------------


def degree(g: Graph) -> np.ndarray:
    """Degree normalized by n - 1."""
    _require(g.n >= 2, "degree centrality needs n >= 2")
    return g.degrees / (g.n - 1)


def extended_degree(g: Graph) -> np.ndarray:
    """d_u plus the summed degrees of u's neighbors."""
    d = g.degrees.astype(np.float64)
    return d + _neighbor_sum(g, d)


def accumulated_degree(g: Graph) -> np.ndarray:
    """Two-hop degree accumulation; the inner sums range over full neighbor
    lists, so u's own degree re-enters through each neighbor."""
    d = g.degrees.astype(np.float64)
    extd = d + _neighbor_sum(g, d)
    return d + _neighbor_sum(g, extd)


def degree_family(g: Graph) -> dict:
    return {
        "Degree": degree(g),
        "ExtendedDegree": extended_degree(g),
        "AccumulatedDegree": accumulated_degree(g),
    }


# -- egonet family ------------------------------------------------------------


def node_mass(g: Graph) -> np.ndarray:
    """Edges inside the closed neighborhood: the d_u spokes plus the edges
    among neighbors."""
    return g.degrees + _triangles(g)


def density_of_egonet(g: Graph) -> np.ndarray:
    d = g.degrees
    nm = node_mass(g)
    denom = np.array([comb(int(k) + 1, 2) for k in d], dtype=np.float64)
    out = np.zeros(g.n)
    ok = denom > 0
    out[ok] = nm[ok] / denom[ok]
    return out


def lcc(g: Graph) -> np.ndarray:
    """Local clustering coefficient; 0 for nodes of degree < 2."""
    d = g.degrees
    tri = _triangles(g)
    out = np.zeros(g.n)
    ok = d >= 2
    out[ok] = tri[ok] / (d[ok] * (d[ok] - 1) / 2)
    return out


def conductance_of_egonet(g: Graph, volume: str = "degrees") -> np.ndarray:
    """Cut ratio of the closed neighborhood.

    ``volume="degrees"`` (default) measures set volume as the sum of member
    degrees; ``volume="nodes"`` counts members instead. Zero when the egonet
    covers the graph or the denominator vanishes.
    """
    d = g.degrees.astype(np.float64)
    inside = node_mass(g)
    vol_plus = d + _neighbor_sum(g, d)
    boundary = vol_plus - 2 * inside
    if volume == "degrees":
        denom = np.minimum(vol_plus, d.sum() - vol_plus)
    elif volume == "nodes":
        size = d + 1
        denom = np.minimum(size, g.n - size)
    else:
        raise ValueError(f"unknown volume mode {volume!r}")
    out = np.zeros(g.n)
    ok = denom > 0
    out[ok] = boundary[ok] / denom[ok]
    return out


def egonet_family(g: Graph, conductance_volume: str = "degrees") -> dict:
    return {
        "NodeMass": node_mass(g).astype(np.float64),
        "ConductanceOfEgonet": conductance_of_egonet(g, volume=conductance_volume),
        "DensityOfEgonet": density_of_egonet(g),
        "LCC": lcc(g),
    }


# -- core-dominance family -----------------------------------------------------

# Each metric sums a pairwise neighborhood similarity over the node's
# neighbors: score(u) = sum over v in N(u) of sim(u, v).


def _sum_over_edges(g: Graph, sims: np.ndarray) -> np.ndarray:
    out = np.zeros(g.n)
    np.add.at(out, g.edges[:, 0], sims)
    np.add.at(out, g.edges[:, 1], sims)
    return out


def cored_cosine(g: Graph) -> np.ndarray:
    common = _edge_common_neighbors(g)
    du = g.degrees[g.edges[:, 0]]
    dv = g.degrees[g.edges[:, 1]]
    return _sum_over_edges(g, common / np.sqrt(du * dv))


def cored_jaccard(g: Graph) -> np.ndarray:
    common = _edge_common_neighbors(g)
    du = g.degrees[g.edges[:, 0]]
    dv = g.degrees[g.edges[:, 1]]
    return _sum_over_edges(g, common / (du + dv - common))


def cored_pearson(g: Graph) -> np.ndarray:
    """Pearson correlation of adjacency rows, in closed form.

    For rows with means d/n, the covariance reduces to |N(u) ∩ N(v)| - d_u d_v/n
    and the variances to d(1 - d/n); endpoints of an edge always have degree
    >= 1 < n, so the zero-variance convention only matters for isolated nodes,
    which have no incident edges and score 0.
    """
    n = g.n
    common = _edge_common_neighbors(g)
    du = g.degrees[g.edges[:, 0]].astype(np.float64)
    dv = g.degrees[g.edges[:, 1]].astype(np.float64)
    cov = common - du * dv / n
    var_u = du * (1.0 - du / n)
    var_v = dv * (1.0 - dv / n)
    return _sum_over_edges(g, cov / np.sqrt(var_u * var_v))


def spa(g: Graph) -> np.ndarray:
    """Preferential-attachment similarity summed over neighbors:
    d_u * sum of neighbor degrees."""
    d = g.degrees.astype(np.float64)
    return d * _neighbor_sum(g, d)


def core_dominance_family(g: Graph) -> dict:
    return {
        "CoredCosine": cored_cosine(g),
        "CoredJaccard": cored_jaccard(g),
        "CoredPearson": cored_pearson(g),
        "SPA": spa(g),
    }


# -- global metrics ------------------------------------------------------------


def closeness(g: Graph) -> np.ndarray:
    """BFS closeness over the reachable set with the reachable-fraction
    rescaling ((r-1)/sum_dist) * ((r-1)/(n-1)); 0 for nodes that reach nothing."""
    _require(g.n >= 2, "closeness needs n >= 2")
    from ._kernels import bfs_distance_sums

    sums, reach = bfs_distance_sums(g.indptr, g.indices, g.n)
    out = np.zeros(g.n)
    ok = reach > 1
    r1 = (reach[ok] - 1).astype(np.float64)
    out[ok] = (r1 / sums[ok]) * (r1 / (g.n - 1))
    return out


def betweenness(g: Graph) -> np.ndarray:
    """Shortest-path betweenness over unordered pairs, endpoints excluded,
    unnormalized (raw pair-dependency counts)."""
    _require(g.n >= 2, "betweenness needs n >= 2")
    from ._kernels import brandes_betweenness

    return brandes_betweenness(g.indptr, g.indices, g.n)


def pagerank(g: Graph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Power iteration with uniform teleport; dangling mass is redistributed
    uniformly so the scores stay a probability distribution.

    Iterates until the update stalls at machine precision (or ``max_iter``);
    ``tol`` is the L1 threshold below which the iteration counts as converged.
    """
    _require(g.n >= 2, "pagerank needs n >= 2")
    n = g.n
    adj = _sparse_adjacency(g)
    deg = g.degrees.astype(np.float64)
    dangling = deg == 0
    inv_deg = np.where(dangling, 0.0, 1.0 / np.maximum(deg, 1.0))
    x = np.full(n, 1.0 / n)
    residual = np.inf
    for _ in range(max_iter):
        spread = adj @ (x * inv_deg)
        new = (1.0 - damping) / n + damping * (spread + x[dangling].sum() / n)
        residual = np.abs(new - x).sum()
        x = new
        if residual < 1e-15:
            break
    if residual > tol:
        warnings.warn(f"pagerank residual {residual:.2e} above tol after {max_iter} iterations")
    return x


def eigenvector(g: Graph, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Dominant-eigenvector scores, componentwise nonnegative, L2-normalized.

    Iterates on A + I so period-2 oscillation on bipartite graphs is damped;
    the identity shift leaves the eigenvector ordering unchanged. Warns and
    returns the last iterate if the update never falls below ``tol``.
    """
    _require(g.n >= 2, "eigenvector centrality needs n >= 2")
    adj = _sparse_adjacency(g)
    x = np.full(g.n, 1.0 / np.sqrt(g.n))
    delta = np.inf
    for _ in range(max_iter):
        y = adj @ x + x
        norm = np.linalg.norm(y)
        if norm == 0:
            return x
        y /= norm
        delta = np.linalg.norm(y - x)
        x = y
        if delta < 1e-13:
            break
    if delta > tol:
        warnings.warn(f"eigenvector iteration stalled at delta {delta:.2e} > tol")
    return x


def global_centralities(g: Graph) -> dict:
    return {
        "Closeness": closeness(g),
        "Betweenness": betweenness(g),
        "PageRank": pagerank(g),
        "Eigenvector": eigenvector(g),
    }


# -- table --------------------------------------------------------------------

_METRIC_FN = {
    "Closeness": closeness,
    "Betweenness": betweenness,
    "PageRank": pagerank,
    "Eigenvector": eigenvector,
    "Degree": degree,
    "ExtendedDegree": extended_degree,
    "AccumulatedDegree": accumulated_degree,
    "NodeMass": lambda g: node_mass(g).astype(np.float64),
    "ConductanceOfEgonet": conductance_of_egonet,
    "DensityOfEgonet": density_of_egonet,
    "LCC": lcc,
    "CoredCosine": cored_cosine,
    "CoredJaccard": cored_jaccard,
    "CoredPearson": cored_pearson,
    "SPA": spa,
}


@dataclass
class CentralityTable:
    """Raw per-node scores for a named, ordered set of metrics."""

    metrics: tuple
    values: np.ndarray  # (n, len(metrics))
    timings: dict

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.metrics.index(name)]

    def subset(self, names) -> "CentralityTable":
        names = tuple(names)
        idx = [self.metrics.index(m) for m in names]
        return CentralityTable(names, self.values[:, idx], {m: self.timings.get(m, 0.0) for m in names})

    def to_csv(self, path, g: Graph) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("node," + ",".join(self.metrics) + "\n")
            for i in range(g.n):
                row = ",".join(repr(float(v)) for v in self.values[i])
                fh.write(f"{g.names[i]},{row}\n")


def resolve_metrics(which) -> tuple:
    """Expand 'local' / 'global' / 'all' or an explicit name list into the
    canonical column order."""
    if which == "local":
        return LOCAL_METRICS
    if which == "global":
        return GLOBAL_METRICS
    if which == "all":
        return ALL_METRICS
    requested = tuple(which)
    unknown = [m for m in requested if m not in ALL_METRICS]
    if unknown:
        raise ValueError(f"unknown metric(s) {unknown}; valid: {list(ALL_METRICS)}")
    return tuple(m for m in ALL_METRICS if m in requested)


def compute(g: Graph, which="all", conductance_volume: str = "degrees") -> CentralityTable:
    """Compute the requested centrality columns with per-metric wall times."""
    names = resolve_metrics(which)
    values = np.empty((g.n, len(names)))
    timings = {}
    for j, name in enumerate(names):
        fn = _METRIC_FN[name]
        start = time.perf_counter()
        if name == "ConductanceOfEgonet":
            col = fn(g, volume=conductance_volume)
        else:
            col = fn(g)
        timings[name] = time.perf_counter() - start
        values[:, j] = col
    return CentralityTable(metrics=names, values=values, timings=timings)
