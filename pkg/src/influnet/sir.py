"""Monte-Carlo epidemic influence scoring, top-share labeling, and balanced
train/test dataset construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, floor

import numpy as np

from .graph import DegreeStats, Graph, degree_stats


class DegenerateTopologyError(ValueError):
    """The epidemic threshold is undefined (mean square degree <= mean degree)."""


def critical_beta(stats: DegreeStats) -> float:
    """Mean-field epidemic threshold <d> / (<d^2> - <d>).

    Formed from the integer degree sums (the 1/n factors cancel) so values on
    small exact cases don't pick up avoidable rounding.
    """
    if stats.sum_square_degree <= stats.sum_degree:
        raise DegenerateTopologyError(
            f"<d^2> = {stats.mean_square_degree} <= <d> = {stats.mean_degree}; "
            "epidemic threshold undefined"
        )
    return stats.sum_degree / (stats.sum_square_degree - stats.sum_degree)


@dataclass(frozen=True)
class SirConfig:
    """Epidemic-run settings. ``beta`` overrides the ``xi * beta_c`` rule when set."""

    runs: int = 1000
    xi: float = 2.0
    gamma: float = 1.0
    seed: int = 0
    beta: float | None = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.xi <= 0:
            raise ValueError("xi must be > 0")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if self.beta is not None and not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta override must be in [0, 1]")


def simulate_once(g: Graph, seed_node: int, beta: float, gamma: float, rng) -> int:
    """One synchronous epidemic; returns the final recovered + infected count.

    Each step every infectious node attacks each susceptible neighbor with
    probability ``beta``; afterwards every node that was infectious before the
    step recovers with probability ``gamma``. Runs until no infectious node
    remains, so beta = 1 sweeps the seed's connected component and beta = 0
    leaves only the seed.
    """
    if not (0.0 <= beta <= 1.0 and 0.0 <= gamma <= 1.0):
        raise ValueError("beta and gamma must be in [0, 1]")
    from ._kernels import sir_run

    return int(sir_run(g.indptr, g.indices, g.n, seed_node, beta, gamma, rng))


def percolation_outbreak(g: Graph, seed_node: int, beta: float, gamma: float, rng) -> int:
    """Outbreak size via the equivalent reachability construction.

    Infectious periods are drawn per node, then each directed edge (u -> v)
    opens with probability 1 - (1-beta)^period(u) against a uniform drawn once
    per edge; the outbreak is the set reachable from the seed over open edges.
    Final sizes match :func:`simulate_once` in distribution, and with a fixed
    generator state the result is nondecreasing in beta, which makes this the
    scheme of choice for common-random-number comparisons across beta.
    """
    if gamma >= 1.0:
        periods = np.ones(g.n)
    else:
        u = rng.random(g.n)
        periods = np.ceil(np.log1p(-u) / np.log1p(-gamma))
    edge_u = rng.random(g.indices.size)
    open_edge = edge_u < 1.0 - (1.0 - beta) ** np.repeat(periods, np.diff(g.indptr))
    seen = np.zeros(g.n, dtype=bool)
    seen[seed_node] = True
    frontier = [seed_node]
    while frontier:
        nxt = []
        for u in frontier:
            lo, hi = g.indptr[u], g.indptr[u + 1]
            for k in range(lo, hi):
                if open_edge[k] and not seen[g.indices[k]]:
                    seen[g.indices[k]] = True
                    nxt.append(int(g.indices[k]))
        frontier = nxt
    return int(seen.sum())


@dataclass(frozen=True)
class InfluenceScores:
    """Per-node mean outbreak fraction; always in [1/n, 1] because the seed
    itself counts."""

    ic: np.ndarray
    beta_c: float | None
    beta: float
    config: SirConfig = field(compare=False, default=SirConfig())

    def to_csv(self, path, g: Graph) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("node,ic\n")
            for i in range(g.n):
                fh.write(f"{g.names[i]},{repr(float(self.ic[i]))}\n")


def _node_run_rng(seed: int, node: int, run: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, node, run)))


def resolve_beta(g: Graph, cfg: SirConfig):
    """(beta_c or None, effective beta). xi * beta_c is clamped to 1."""
    if cfg.beta is not None:
        try:
            bc = critical_beta(degree_stats(g))
        except DegenerateTopologyError:
            bc = None
        return bc, float(cfg.beta)
    bc = critical_beta(degree_stats(g))
    return bc, min(1.0, cfg.xi * bc)


def influence_scores(g: Graph, cfg: SirConfig, scheme: str = "frontier") -> InfluenceScores:
    """Mean outbreak fraction per node over ``cfg.runs`` independent epidemics.

    Every (node, run) pair gets its own generator derived from
    (cfg.seed, node id, run index), so scores do not depend on execution
    order. ``scheme="percolation"`` swaps in the reachability construction
    (same distribution, monotone in beta under fixed seeds).
    """
    if scheme not in ("frontier", "percolation"):
        raise ValueError(f"unknown scheme {scheme!r}")
    beta_c, beta = resolve_beta(g, cfg)
    totals = np.zeros(g.n)
    for node in range(g.n):
        acc = 0
        for run in range(cfg.runs):
            rng = _node_run_rng(cfg.seed, node, run)
            if scheme == "frontier":
                acc += simulate_once(g, node, beta, cfg.gamma, rng)
            else:
                acc += percolation_outbreak(g, node, beta, cfg.gamma, rng)
        totals[node] = acc
    ic = totals / (g.n * cfg.runs)
    return InfluenceScores(ic=ic, beta_c=beta_c, beta=beta, config=cfg)


# -- dataset -------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledDataset:
    """Binary influence labels with a stratified train/test split.

    ``labels`` is defined on all n nodes (1 on positives, 0 elsewhere); only
    entries selected by the masks take part in training or evaluation.
    """

    positives: np.ndarray
    negatives: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    test_mask: np.ndarray

    @property
    def members(self) -> np.ndarray:
        return np.sort(np.concatenate([self.positives, self.negatives]))


def _round_half_up(x: float) -> int:
    return int(floor(x + 0.5))


def build_dataset(
    scores: InfluenceScores,
    top_fraction: float = 0.05,
    neg_ratio: float = 2.0,
    split: float = 0.7,
    seed: int = 0,
    neg_fraction: float | None = None,
) -> LabeledDataset:
    """Label the top share of nodes positive and sample score-weighted negatives.

    Positives are the top ``ceil(top_fraction * n)`` nodes by score, ties broken
    by ascending node id. Negatives are drawn without replacement from the
    rest, with probability proportional to score, ``neg_ratio`` per positive
    (or ``ceil(neg_fraction * n)`` when ``neg_fraction`` is given). The split
    is stratified per class with half-up rounding of ``split * count``.
    """
    ic = scores.ic
    n = ic.shape[0]
    k = ceil(top_fraction * n)
    if k < 1:
        raise ValueError("top_fraction selects no nodes")
    ranked = np.lexsort((np.arange(n), -ic))
    positives = np.sort(ranked[:k])
    rest = ranked[k:]
    n_neg = ceil(neg_fraction * n) if neg_fraction is not None else int(round(neg_ratio * k))
    if rest.size < n_neg or n_neg < 1:
        raise ValueError(f"need {n_neg} negatives but only {rest.size} nodes remain")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0x6E6567)))
    weights = ic[rest] / ic[rest].sum()
    negatives = np.sort(rng.choice(rest, size=n_neg, replace=False, p=weights, shuffle=False))

    labels = np.zeros(n, dtype=np.int8)
    labels[positives] = 1
    total_train = _round_half_up(split * (k + n_neg))
    train_p = min(max(_round_half_up(split * k), total_train - n_neg), k)
    train_n = total_train - train_p
    perm_p = rng.permutation(positives)
    perm_n = rng.permutation(negatives)
    train_nodes = np.concatenate([perm_p[:train_p], perm_n[:train_n]])
    test_nodes = np.concatenate([perm_p[train_p:], perm_n[train_n:]])
    train_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    train_mask[train_nodes] = True
    test_mask[test_nodes] = True
    return LabeledDataset(
        positives=positives,
        negatives=negatives,
        labels=labels,
        train_mask=train_mask,
        test_mask=test_mask,
    )


def dataset_to_dict(ds: LabeledDataset, g: Graph, config_echo: dict | None = None) -> dict:
    """JSON-ready view of the dataset using original node labels."""
    name = lambda i: g.names[int(i)]
    return {
        "positives": [name(i) for i in ds.positives],
        "negatives": [name(i) for i in ds.negatives],
        "train": [name(i) for i in np.flatnonzero(ds.train_mask)],
        "test": [name(i) for i in np.flatnonzero(ds.test_mask)],
        "labels": {name(i): int(ds.labels[i]) for i in ds.members},
        "config": dict(config_echo or {}),
    }
