"""End-to-end orchestration: load -> centralities -> feature selection ->
labeling -> training -> evaluation, plus the ablation sweeps and the
local-vs-global timing benchmark. Every run persists a replayable record.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from jsonschema import validate as _validate_schema

from . import centrality as ce
from . import features as fx
from . import gcn
from . import sir
from .evalmetrics import MetricsReport, compute_metrics
from .graph import Graph, adjusted_transition, load_edge_list

INFGCN4_FEATURES = ("Degree", "Betweenness", "Closeness", "LCC")

FEATURE_MODES = (
    "fn-selected",
    "all-local",
    "all-global",
    "all",
    "infgcn4",
    "explicit",
    "leave-one-out",
)


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that caused it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a pipeline run needs; serializes to a flat key/value table."""

    graph: str = ""
    feature_mode: str = "fn-selected"
    metrics: tuple | None = None
    leave_out: str | None = None
    delta: float = 0.9
    conductance_volume: str = "degrees"
    ties: str = "node_id"
    variant: str = "shallow"
    hidden_layers: int | None = None
    hidden_dim: int = 64
    alpha: float = 0.1
    lam: float = 0.5
    beta_rule: str = "log"
    dropout: float = 0.4
    learning_rate: float | None = None
    weight_decay_hidden: float = 0.01
    weight_decay_fc: float = 0.0005
    patience: int | None = None
    max_epochs: int = 1500
    early_stop_on: str = "test"
    holdout_fraction: float = 0.2
    runs: int = 1000
    xi: float = 2.0
    gamma: float = 1.0
    beta: float | None = None
    top_fraction: float = 0.05
    neg_ratio: float = 2.0
    neg_fraction: float | None = None
    split: float = 0.7
    sir_seed: int = 0
    dataset_seed: int = 0
    model_seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.feature_mode!r}; valid: {FEATURE_MODES}")
        if self.feature_mode == "explicit" and not self.metrics:
            raise ValueError("explicit feature mode needs a metric list")
        if self.feature_mode == "leave-one-out" and not self.leave_out:
            raise ValueError("leave-one-out feature mode needs the metric to drop")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["metrics"] = list(self.metrics) if self.metrics else None
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.get("metrics"):
            d["metrics"] = tuple(d["metrics"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def sir_config(self) -> sir.SirConfig:
        return sir.SirConfig(runs=self.runs, xi=self.xi, gamma=self.gamma, seed=self.sir_seed, beta=self.beta)

    def model_config(self) -> gcn.ModelConfig:
        return gcn.ModelConfig(
            variant=self.variant,
            hidden_layers=self.hidden_layers,
            hidden_dim=self.hidden_dim,
            alpha=self.alpha,
            lam=self.lam,
            beta_rule=self.beta_rule,
            dropout=self.dropout,
            learning_rate=self.learning_rate,
            weight_decay_hidden=self.weight_decay_hidden,
            weight_decay_fc=self.weight_decay_fc,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.model_seed,
            early_stop_on=self.early_stop_on,
            holdout_fraction=self.holdout_fraction,
        )


# -- cached SIR scoring -----------------------------------------------------------

_SCORE_CACHE: dict = {}


def _sir_key(cfg: sir.SirConfig):
    return (cfg.runs, cfg.xi, cfg.gamma, cfg.seed, cfg.beta)


def cached_influence_scores(g: Graph, cfg: sir.SirConfig, cache_dir=None) -> sir.InfluenceScores:
    """Influence scores memoized by (graph hash, epidemic settings), optionally
    spilled to ``cache_dir`` as .npz so separate invocations can reuse them."""
    key = (g.content_hash(), _sir_key(cfg))
    if key in _SCORE_CACHE:
        return _SCORE_CACHE[key]
    path = None
    if cache_dir is not None:
        tag = hashlib.sha256(repr(key).encode()).hexdigest()[:16]
        path = Path(cache_dir) / f"sir_{tag}.npz"
        if path.exists():
            data = np.load(path, allow_pickle=False)
            beta_c = float(data["beta_c"]) if np.isfinite(data["beta_c"]) else None
            scores = sir.InfluenceScores(ic=data["ic"], beta_c=beta_c, beta=float(data["beta"]), config=cfg)
            _SCORE_CACHE[key] = scores
            return scores
    scores = sir.influence_scores(g, cfg)
    _SCORE_CACHE[key] = scores
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, ic=scores.ic, beta=scores.beta, beta_c=np.nan if scores.beta_c is None else scores.beta_c)
    return scores


# -- run record --------------------------------------------------------------------

RUN_RECORD_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "config", "dataset", "training", "metrics", "timings", "features"],
    "properties": {
        "schema_version": {"const": 1},
        "config": {"type": "object"},
        "selection": {"type": ["object", "null"]},
        "features": {"type": "array", "items": {"type": "string"}},
        "dataset": {
            "type": "object",
            "required": ["n_positive", "n_negative", "n_train", "n_test", "dataset_hash", "scores_hash"],
            "properties": {
                "n_positive": {"type": "integer", "minimum": 1},
                "n_negative": {"type": "integer", "minimum": 1},
                "n_train": {"type": "integer", "minimum": 1},
                "n_test": {"type": "integer", "minimum": 0},
                "dataset_hash": {"type": "string"},
                "scores_hash": {"type": "string"},
            },
        },
        "training": {
            "type": "object",
            "required": ["train_losses", "test_losses", "best_epoch", "epochs_run", "wall_time"],
        },
        "metrics": {
            "type": "object",
            "required": ["accuracy", "f1", "auc", "tp", "fp", "tn", "fn"],
            "properties": {
                "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                "f1": {"type": "number", "minimum": 0, "maximum": 1},
                "auc": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "timings": {"type": "object"},
    },
}


@dataclass
class RunRecord:
    """Self-contained, replayable summary of one pipeline run."""

    config: ExperimentConfig
    features: tuple
    selection: dict | None
    dataset_summary: dict
    trace: gcn.TrainTrace
    metrics: MetricsReport
    timings: dict
    chosen_set: tuple = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "features": list(self.features),
            "selection": self.selection,
            "dataset": self.dataset_summary,
            "training": {
                "train_losses": [float(v) for v in self.trace.train_losses],
                "test_losses": [float(v) for v in self.trace.test_losses],
                "best_epoch": self.trace.best_epoch,
                "epochs_run": self.trace.epochs_run,
                "wall_time": self.trace.wall_time,
            },
            "metrics": self.metrics.to_dict(),
            "timings": self.timings,
        }

    def save(self, path) -> None:
        payload = self.to_dict()
        _validate_schema(instance=payload, schema=RUN_RECORD_SCHEMA)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def validate_record(payload: dict) -> None:
    _validate_schema(instance=payload, schema=RUN_RECORD_SCHEMA)


def _dataset_hash(ds: sir.LabeledDataset) -> str:
    h = hashlib.sha256()
    for arr in (ds.positives, ds.negatives, ds.labels, ds.train_mask, ds.test_mask):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _scores_hash(scores: sir.InfluenceScores) -> str:
    return hashlib.sha256(np.ascontiguousarray(scores.ic).tobytes()).hexdigest()


# -- pipeline ----------------------------------------------------------------------


def _metrics_for_mode(cfg: ExperimentConfig):
    mode = cfg.feature_mode
    if mode in ("fn-selected", "all-local", "leave-one-out"):
        return "local"
    if mode == "all-global":
        return "global"
    if mode == "all":
        return "all"
    if mode == "infgcn4":
        return INFGCN4_FEATURES
    return cfg.metrics


def run_pipeline(
    cfg: ExperimentConfig,
    graph: Graph | None = None,
    scores: sir.InfluenceScores | None = None,
    dataset: sir.LabeledDataset | None = None,
    save_artifacts: bool = True,
) -> RunRecord:
    """Execute the full run described by ``cfg``; precomputed pieces may be
    passed in so ablation sweeps share one labeling."""
    out = Path(cfg.out_dir)
    if save_artifacts:
        out.mkdir(parents=True, exist_ok=True)
    stage_times: dict = {}

    def _stage(name, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as err:  # noqa: BLE001 - rethrown with the stage tag
            raise StageError(name, err) from err
        stage_times[name] = time.perf_counter() - start
        return result

    if graph is None:
        graph = _stage("load", lambda: load_edge_list(cfg.graph))
    g = graph

    table = _stage(
        "centrality",
        lambda: ce.compute(g, which=_metrics_for_mode(cfg), conductance_volume=cfg.conductance_volume),
    )
    if save_artifacts:
        table.to_csv(out / "centralities.csv", g)
        (out / "centrality_timings.json").write_text(json.dumps(table.timings, indent=2))

    selection_payload = None
    chosen_set: tuple = ()
    if cfg.feature_mode in ("fn-selected", "leave-one-out"):
        def _select():
            fn = fx.build_feature_network(table, delta=cfg.delta)
            sel = fx.select_representatives(fn, fx.cluster(fn))
            return fn, sel

        fn, sel = _stage("feature-selection", _select)
        selection_payload = fx.selection_report(fn, sel)
        chosen_set = sel.chosen
        feature_names = chosen_set
        if cfg.feature_mode == "leave-one-out":
            if cfg.leave_out not in chosen_set:
                raise StageError(
                    "feature-selection",
                    ValueError(f"leave_out metric {cfg.leave_out!r} not in chosen set {chosen_set}"),
                )
            feature_names = tuple(m for m in chosen_set if m != cfg.leave_out)
        if save_artifacts:
            (out / "selection.json").write_text(json.dumps(selection_payload, indent=2))
    else:
        feature_names = table.metrics

    feats = _stage("normalize", lambda: fx.normalize(table, feature_names, ties=cfg.ties))
    if save_artifacts:
        feats.to_csv(out / "features.csv", g)

    if scores is None:
        cache_dir = out / "sir_cache" if save_artifacts else None
        scores = _stage("sir", lambda: cached_influence_scores(g, cfg.sir_config(), cache_dir=cache_dir))
    if save_artifacts:
        scores.to_csv(out / "sir_scores.csv", g)

    if dataset is None:
        dataset = _stage(
            "dataset",
            lambda: sir.build_dataset(
                scores,
                top_fraction=cfg.top_fraction,
                neg_ratio=cfg.neg_ratio,
                split=cfg.split,
                seed=cfg.dataset_seed,
                neg_fraction=cfg.neg_fraction,
            ),
        )
    if save_artifacts:
        (out / "dataset.json").write_text(
            json.dumps(sir.dataset_to_dict(dataset, g, cfg.to_dict()), indent=2)
        )

    model_cfg = cfg.model_config()
    params, trace = _stage("train", lambda: gcn.train(g, feats, dataset, model_cfg))
    if save_artifacts:
        (out / "checkpoint.json").write_text(json.dumps(gcn.checkpoint_dict(params, model_cfg)))

    def _evaluate():
        P = adjusted_transition(g)
        classes, prob1 = gcn.predict(params, model_cfg, P, feats)
        test = np.flatnonzero(dataset.test_mask)
        return compute_metrics(classes[test], prob1[test], dataset.labels[test])

    metrics = _stage("evaluate", _evaluate)
    if save_artifacts:
        (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2))

    record = RunRecord(
        config=cfg,
        features=tuple(feats.feature_names),
        selection=selection_payload,
        dataset_summary={
            "n_positive": int(dataset.positives.size),
            "n_negative": int(dataset.negatives.size),
            "n_train": int(dataset.train_mask.sum()),
            "n_test": int(dataset.test_mask.sum()),
            "dataset_hash": _dataset_hash(dataset),
            "scores_hash": _scores_hash(scores),
        },
        trace=trace,
        metrics=metrics,
        timings={"stages": stage_times, "centrality": dict(table.timings)},
        chosen_set=chosen_set,
    )
    if save_artifacts:
        record.save(out / "run_record.json")
    return record


def _shared_pieces(cfg: ExperimentConfig, graph: Graph | None = None):
    g = graph if graph is not None else load_edge_list(cfg.graph)
    scores = cached_influence_scores(g, cfg.sir_config(), cache_dir=Path(cfg.out_dir) / "sir_cache")
    dataset = sir.build_dataset(
        scores,
        top_fraction=cfg.top_fraction,
        neg_ratio=cfg.neg_ratio,
        split=cfg.split,
        seed=cfg.dataset_seed,
        neg_fraction=cfg.neg_fraction,
    )
    return g, scores, dataset


def ablate_depth(cfg: ExperimentConfig, depths=(3, 8, 16, 24, 32, 64), graph: Graph | None = None):
    """One run per hidden-layer count, sharing a single labeling and dataset."""
    if cfg.variant != "deep":
        raise ValueError("depth ablation applies to the deep variant")
    depths = tuple(depths)
    if not depths:
        raise ValueError("empty depth list")
    g, scores, dataset = _shared_pieces(cfg, graph)
    records = []
    for d in depths:
        sub = dataclasses.replace(cfg, hidden_layers=d, out_dir=str(Path(cfg.out_dir) / f"depth_{d}"))
        records.append(run_pipeline(sub, graph=g, scores=scores, dataset=dataset))
    rows = ["depth,accuracy,f1,auc"]
    for d, rec in zip(depths, records):
        m = rec.metrics
        rows.append(f"{d},{m.accuracy!r},{m.f1!r},{m.auc!r}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "ablate_depth.csv").write_text("\n".join(rows) + "\n")
    return records


def ablate_features(
    cfg: ExperimentConfig,
    modes=("all-local", "all-global", "all", "fn-selected", "infgcn4"),
    graph: Graph | None = None,
):
    """One run per feature mode over a shared SIR labeling and dataset."""
    modes = tuple(modes)
    if not modes:
        raise ValueError("empty mode list")
    bad = [m for m in modes if m not in FEATURE_MODES or m in ("explicit", "leave-one-out")]
    if bad:
        raise ValueError(f"modes not usable in the feature ablation: {bad}")
    if graph is not None:
        cfg = dataclasses.replace(cfg, graph=graph)  # type: ignore[arg-type]
    g, scores, dataset = _shared_pieces(cfg)
    records = []
    for mode in modes:
        sub = dataclasses.replace(
            cfg, feature_mode=mode, out_dir=str(Path(cfg.out_dir) / f"mode_{mode}"), graph=cfg.graph
        )
        records.append(run_pipeline(sub, graph=g, scores=scores, dataset=dataset))
    rows = ["mode,n_features,accuracy,f1,auc"]
    for mode, rec in zip(modes, records):
        m = rec.metrics
        rows.append(f"{mode},{len(rec.features)},{m.accuracy!r},{m.f1!r},{m.auc!r}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "ablate_features.csv").write_text("\n".join(rows) + "\n")
    return records


def ablate_leave_one_out(cfg: ExperimentConfig, graph: Graph | None = None):
    """Drop each selected feature in turn and rank them by the damage done."""
    if graph is not None:
        cfg = dataclasses.replace(cfg, graph=graph)  # type: ignore[arg-type]
    g, scores, dataset = _shared_pieces(cfg)
    base_cfg = dataclasses.replace(
        cfg, feature_mode="fn-selected", out_dir=str(Path(cfg.out_dir) / "baseline"), graph=cfg.graph
    )
    baseline = run_pipeline(base_cfg, graph=g, scores=scores, dataset=dataset)
    chosen = baseline.chosen_set
    records = []
    for metric in chosen:
        sub = dataclasses.replace(
            cfg,
            feature_mode="leave-one-out",
            leave_out=metric,
            out_dir=str(Path(cfg.out_dir) / f"without_{metric}"),
            graph=cfg.graph,
        )
        records.append(run_pipeline(sub, graph=g, scores=scores, dataset=dataset))
    base = baseline.metrics
    summary = []
    for metric, rec in zip(chosen, records):
        m = rec.metrics
        summary.append(
            (base.accuracy - m.accuracy, base.f1 - m.f1, base.auc - m.auc, metric, m)
        )
    summary.sort(key=lambda row: (-row[0], -row[1], -row[2], row[3]))
    rows = ["excluded,accuracy,f1,auc,delta_accuracy,delta_f1,delta_auc"]
    for da, df, dauc, metric, m in summary:
        rows.append(f"{metric},{m.accuracy!r},{m.f1!r},{m.auc!r},{da!r},{df!r},{dauc!r}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "ablate_loo.csv").write_text("\n".join(rows) + "\n")
    return baseline, records


def timing_benchmark(g: Graph, name: str = "graph", out_path=None) -> dict:
    """Single-threaded wall clock for the local group, the global group, and
    all metrics together."""
    timings = {}
    for group in ("local", "global", "all"):
        start = time.perf_counter()
        ce.compute(g, which=group)
        timings[group] = time.perf_counter() - start
    if out_path is not None:
        Path(out_path).write_text(
            "network,all,global,local\n"
            f"{name},{timings['all']!r},{timings['global']!r},{timings['local']!r}\n"
        )
    return timings
