"""Undirected simple graphs: edge-list ingestion, CSR adjacency, degree statistics,
and the symmetrically normalized self-loop transition matrix used by the GCN models.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

COMMENT_PREFIXES = ("#", "%")


@dataclass(frozen=True)
class IngestReport:
    """Counts of lines silently dropped while reading an edge list."""

    self_loops_dropped: int = 0
    duplicates_dropped: int = 0


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph with contiguous integer node ids.

    Attributes:
        n: number of nodes.
        edges: (E, 2) int array, each row (u, v) with u < v, rows lexsorted.
        indptr/indices: CSR adjacency; neighbor lists sorted ascending.
        names: original label for each node id (first-seen order).
        name_to_id: inverse map of ``names``.
        ingest: drop counts when the graph came from a file.
    """

    n: int
    edges: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    names: tuple
    name_to_id: dict
    ingest: IngestReport = field(default=IngestReport(), compare=False)

    @classmethod
    def from_edges(cls, pairs, names=None, n=None, ingest=None):
        """Build a graph from (u, v) id pairs; self-loops and duplicates dropped.

        ``names`` defaults to the stringified ids. ``n`` may exceed the largest
        id to allow isolated nodes.
        """
        pairs = [(int(a), int(b)) for a, b in pairs]
        loops = sum(1 for a, b in pairs if a == b)
        undirected = {(min(a, b), max(a, b)) for a, b in pairs if a != b}
        dupes = len(pairs) - loops - len(undirected)
        if n is None:
            n = 1 + max((max(p) for p in pairs), default=-1)
        if n <= 0:
            raise ValueError("empty graph: no nodes")
        if names is None:
            names = tuple(str(i) for i in range(n))
        else:
            names = tuple(names)
            if len(names) != n:
                raise ValueError(f"{len(names)} names for {n} nodes")
        edges = np.array(sorted(undirected), dtype=np.int64).reshape(-1, 2)
        if edges.size and edges.max() >= n:
            raise ValueError("edge endpoint out of range")
        indptr, indices = _build_csr(n, edges)
        report = ingest if ingest is not None else IngestReport(loops, dupes)
        return cls(
            n=n,
            edges=edges,
            indptr=indptr,
            indices=indices,
            names=names,
            name_to_id={lbl: i for i, lbl in enumerate(names)},
            ingest=report,
        )

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        """Sorted neighbor ids of node u (a view into the CSR index array)."""
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def edge_set(self):
        return {(int(a), int(b)) for a, b in self.edges}

    def content_hash(self) -> str:
        """Stable hash of (n, edge set), used to key cached SIR scores."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        h.update(np.ascontiguousarray(self.edges).tobytes())
        return h.hexdigest()


def _build_csr(n, edges):
    if edges.size == 0:
        return np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
    heads = np.concatenate([edges[:, 0], edges[:, 1]])
    tails = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((tails, heads))
    indices = tails[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(heads, minlength=n), out=indptr[1:])
    return indptr, indices


def load_edge_list(path, comment_prefixes=COMMENT_PREFIXES, delimiter=None) -> Graph:
    """Read an edge list: one edge per line, first two tokens are the endpoints.

    Lines starting with any of ``comment_prefixes`` are skipped. ``delimiter``
    of None splits on any whitespace. Node ids are assigned in first-seen
    order; self-loops and duplicate edges are dropped and counted in the
    returned graph's ``ingest`` report.
    """
    names: list = []
    ids: dict = {}
    pairs = []

    def _id(token):
        if token not in ids:
            ids[token] = len(names)
            names.append(token)
        return ids[token]

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith(tuple(comment_prefixes)):
                continue
            tokens = line.split(delimiter)
            if len(tokens) < 2:
                raise ValueError(f"{path}:{lineno}: expected >= 2 tokens, got {len(tokens)}")
            pairs.append((_id(tokens[0]), _id(tokens[1])))
    if not names:
        raise ValueError(f"{path}: empty graph (no edges or nodes)")
    return Graph.from_edges(pairs, names=names, n=len(names))


def write_edge_list(g: Graph, path, delimiter=" ") -> None:
    """Write the graph back out in the same one-edge-per-line format."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in g.edges:
            fh.write(f"{g.names[u]}{delimiter}{g.names[v]}\n")


def adjusted_transition(g: Graph) -> sp.csr_matrix:
    """Symmetrically normalized adjacency with self-loops.

    Returns the sparse symmetric matrix with entry
    (u, v) = 1/sqrt((d_u + 1)(d_v + 1)) wherever u == v or {u, v} is an edge.
    """
    if g.n == 0:
        raise ValueError("empty graph")
    deg = g.degrees
    inv = 1.0 / np.sqrt(deg + 1.0)
    rows = np.concatenate([g.edges[:, 0], g.edges[:, 1], np.arange(g.n)])
    cols = np.concatenate([g.edges[:, 1], g.edges[:, 0], np.arange(g.n)])
    vals = inv[rows] * inv[cols]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))
    mat.sum_duplicates()
    return mat


@dataclass(frozen=True)
class DegreeStats:
    """First and second moments of the degree sequence.

    The integer sums are kept alongside the float means so downstream ratios
    (epidemic threshold) can be formed without compounding rounding.
    """

    mean_degree: float
    mean_square_degree: float
    sum_degree: int
    sum_square_degree: int
    n: int


def degree_stats(g: Graph) -> DegreeStats:
    if g.n == 0:
        raise ValueError("empty graph")
    deg = g.degrees
    s1 = int(deg.sum())
    s2 = int((deg.astype(np.int64) ** 2).sum())
    return DegreeStats(
        mean_degree=s1 / g.n,
        mean_square_degree=s2 / g.n,
        sum_degree=s1,
        sum_square_degree=s2,
        n=g.n,
    )
