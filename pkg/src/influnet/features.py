"""Rank-correlation feature network over centrality columns, redundancy-aware
representative selection, and rank normalization into the node-feature matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .centrality import CentralityTable
from .graph import Graph


def spearman(x, y) -> float:
    """Rank correlation: Pearson correlation of the fractional-rank vectors.

    Ties get average ranks. Returns 0.0 when either rank vector is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        return 0.0
    return float((rx @ ry) / denom)


def scc_matrix(values: np.ndarray) -> np.ndarray:
    """Pairwise rank correlations between columns; diagonal fixed at 1."""
    n, m = values.shape
    ranks = np.column_stack([rankdata(values[:, j]) for j in range(m)])
    ranks -= ranks.mean(axis=0)
    norms = np.sqrt((ranks**2).sum(axis=0))
    out = np.zeros((m, m))
    ok = norms > 0
    safe = np.where(ok, norms, 1.0)
    out[np.ix_(ok, ok)] = ((ranks.T @ ranks) / np.outer(safe, safe))[np.ix_(ok, ok)]
    np.fill_diagonal(out, 1.0)
    return out


@dataclass(frozen=True)
class FeatureNetwork:
    """Small graph whose nodes are metric names; edges join metric pairs whose
    rank correlation exceeds the threshold."""

    metrics: tuple
    scc: np.ndarray
    delta: float
    edges: tuple  # sorted (a, b) name pairs, a < b

    def neighbors(self, name: str) -> tuple:
        out = [b if a == name else a for a, b in self.edges if name in (a, b)]
        return tuple(sorted(out))

    def degree(self, name: str) -> int:
        return sum(1 for a, b in self.edges if name in (a, b))


def build_feature_network(table: CentralityTable, delta: float = 0.9) -> FeatureNetwork:
    if len(table.metrics) < 2:
        raise ValueError("need at least 2 metrics to build a feature network")
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"delta must be in [0, 1), got {delta}")
    scc = scc_matrix(table.values)
    edges = []
    for i in range(len(table.metrics)):
        for j in range(i + 1, len(table.metrics)):
            if scc[i, j] > delta:
                pair = tuple(sorted((table.metrics[i], table.metrics[j])))
                edges.append(pair)
    return FeatureNetwork(
        metrics=tuple(table.metrics), scc=scc, delta=float(delta), edges=tuple(sorted(edges))
    )


# -- clustering ----------------------------------------------------------------


def _modularity(members_of, degree, m, assign):
    """Newman modularity (resolution 1) of a name -> community-label map."""
    if m == 0:
        return 0.0
    inside: dict = {}
    total: dict = {}
    for (a, b) in members_of:
        if assign[a] == assign[b]:
            inside[assign[a]] = inside.get(assign[a], 0) + 1
    for v, d in degree.items():
        total[assign[v]] = total.get(assign[v], 0) + d
    q = 0.0
    for label, dc in total.items():
        q += inside.get(label, 0) / m - (dc / (2.0 * m)) ** 2
    return q


def cluster(fn: FeatureNetwork) -> tuple:
    """Deterministic greedy modularity maximization over the feature network.

    Single-node moves in lexicographic name order until stable, then greedy
    community merges, repeated until neither improves modularity. Isolated
    metric nodes stay singleton groups. Returns groups as sorted name tuples,
    ordered by smallest member.
    """
    names = sorted(fn.metrics)
    degree = {v: fn.degree(v) for v in names}
    m = len(fn.edges)
    assign = {v: i for i, v in enumerate(names)}
    if m == 0:
        return tuple((v,) for v in names)

    neighbor: dict = {v: set() for v in names}
    for a, b in fn.edges:
        neighbor[a].add(b)
        neighbor[b].add(a)

    def community_key(label):
        return min(v for v in names if assign[v] == label)

    eps = 1e-12
    improved = True
    while improved:
        improved = False
        moved = True
        while moved:
            moved = False
            for v in names:
                current = assign[v]
                base = _modularity(fn.edges, degree, m, assign)
                fresh = max(assign.values()) + 1
                candidates = sorted(
                    {assign[u] for u in neighbor[v]} | {fresh},
                    key=lambda lbl: (lbl != current, "" if lbl == fresh else community_key(lbl)),
                )
                best_label, best_gain = current, 0.0
                for label in candidates:
                    if label == current:
                        continue
                    assign[v] = label
                    gain = _modularity(fn.edges, degree, m, assign) - base
                    assign[v] = current
                    if gain > best_gain + eps:
                        best_gain, best_label = gain, label
                if best_label != current:
                    assign[v] = best_label
                    moved = improved = True
        # merge whole communities while any merge strictly improves
        merged = True
        while merged:
            merged = False
            labels = sorted(set(assign.values()), key=community_key)
            base = _modularity(fn.edges, degree, m, assign)
            best = (0.0, None, None)
            for i in range(len(labels)):
                for j in range(i + 1, len(labels)):
                    trial = {v: (labels[i] if c == labels[j] else c) for v, c in assign.items()}
                    gain = _modularity(fn.edges, degree, m, trial) - base
                    if gain > best[0] + eps:
                        best = (gain, labels[i], labels[j])
            if best[1] is not None:
                keep, drop = best[1], best[2]
                for v in names:
                    if assign[v] == drop:
                        assign[v] = keep
                merged = improved = True

    groups: dict = {}
    for v in names:
        groups.setdefault(assign[v], []).append(v)
    return tuple(tuple(sorted(g)) for g in sorted(groups.values(), key=lambda g: min(g)))


# -- representative selection ---------------------------------------------------


@dataclass(frozen=True)
class SelectionResult:
    """One representative metric per group plus the full candidate trace."""

    groups: tuple  # in processing order
    chosen: tuple
    provenance: tuple  # per group: tuple of (name, degree, outcome) entries
    fallback_used: bool


def select_representatives(fn: FeatureNetwork, groups) -> SelectionResult:
    """Pick the highest-degree metric of each group whose feature-network
    neighbors are all still unchosen.

    Groups are processed largest first (ties: lexicographically smallest
    member); candidates within a group by (degree desc, name asc). If every
    candidate conflicts, the first candidate is taken anyway and the fallback
    flag is set, so exactly one representative per group is guaranteed.
    """
    node_set = set(fn.metrics)
    flat = [v for group in groups for v in group]
    if sorted(flat) != sorted(node_set):
        raise ValueError("groups must partition the feature-network nodes")
    ordered = tuple(tuple(g) for g in sorted(groups, key=lambda g: (-len(g), min(g))))
    chosen: list = []
    chosen_set: set = set()
    provenance = []
    fallback_used = False
    for group in ordered:
        candidates = sorted(group, key=lambda v: (-fn.degree(v), v))
        trace = []
        pick = None
        for cand in candidates:
            conflicts = tuple(sorted(set(fn.neighbors(cand)) & chosen_set))
            if conflicts:
                trace.append((cand, fn.degree(cand), f"skipped: neighbor {','.join(conflicts)} chosen"))
            else:
                trace.append((cand, fn.degree(cand), "chosen"))
                pick = cand
                break
        if pick is None:
            pick = candidates[0]
            fallback_used = True
            trace.append((pick, fn.degree(pick), "fallback: all candidates conflict"))
        chosen.append(pick)
        chosen_set.add(pick)
        provenance.append(tuple(trace))
    return SelectionResult(
        groups=ordered, chosen=tuple(chosen), provenance=tuple(provenance), fallback_used=fallback_used
    )


def selection_report(fn: FeatureNetwork, sel: SelectionResult) -> dict:
    """JSON-ready summary of the network and the selection outcome."""
    return {
        "delta": fn.delta,
        "metrics": list(fn.metrics),
        "scc_matrix": [[float(v) for v in row] for row in fn.scc],
        "edges": [list(e) for e in fn.edges],
        "groups": [list(g) for g in sel.groups],
        "chosen": list(sel.chosen),
        "fallback_used": sel.fallback_used,
        "provenance": [
            [{"candidate": c, "degree": d, "outcome": o} for c, d, o in group] for group in sel.provenance
        ],
    }


# -- normalization ---------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMatrix:
    """Rank-normalized node features, one column per chosen metric.

    Entries are rank/N - 0.5 with rank 1 for the largest raw value, so every
    entry lies in [1/N - 0.5, 0.5].
    """

    feature_names: tuple
    values: np.ndarray

    def to_csv(self, path, g: Graph) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("node," + ",".join(self.feature_names) + "\n")
            for i in range(self.values.shape[0]):
                row = ",".join(repr(float(v)) for v in self.values[i])
                fh.write(f"{g.names[i]},{row}\n")


def normalize(table: CentralityTable, chosen, ties: str = "node_id") -> FeatureMatrix:
    """Descending-rank normalization of the chosen columns.

    ``ties="node_id"`` (default) breaks equal raw values by ascending node id,
    making each column a permutation image of {1..N}/N - 0.5;
    ``ties="average"`` uses fractional average ranks instead.
    """
    chosen = tuple(chosen)
    missing = [m for m in chosen if m not in table.metrics]
    if missing:
        raise ValueError(f"chosen metrics not in table: {missing}")
    n = table.values.shape[0]
    out = np.empty((n, len(chosen)))
    for j, name in enumerate(chosen):
        col = table.column(name)
        if ties == "node_id":
            order = np.argsort(-col, kind="stable")
            ranks = np.empty(n)
            ranks[order] = np.arange(1, n + 1)
        elif ties == "average":
            ranks = n + 1 - rankdata(col)
        else:
            raise ValueError(f"unknown tie rule {ties!r}")
        out[:, j] = ranks / n - 0.5
    return FeatureMatrix(feature_names=chosen, values=out)
