"""Graph-convolutional classifiers over the normalized self-loop transition
matrix: a 3-layer plain stack and a deep residual/identity-map stack, trained
full-batch with Adam, L2 weight decay, dropout, and early stopping.

The architecture set is closed, so gradients come from a hand-written
layer-wise backward pass rather than an autodiff framework; every run is
bitwise reproducible from its seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import log

import numpy as np

from .graph import Graph, adjusted_transition

N_CLASSES = 2


class TrainingDivergenceError(RuntimeError):
    """Raised when a nonfinite loss or activation appears; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and optimization settings.

    ``hidden_layers``, ``learning_rate`` and ``patience`` default per variant
    (shallow: 3 / 0.01 / 30, deep: 64 / 0.05 / 100). ``lam`` feeds the
    per-layer identity-map weight: beta_l = ln(lam/l + 1) under the default
    "log" rule, or lam/l under "linear".
    """

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
    seed: int = 0
    early_stop_on: str = "test"
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.variant not in ("shallow", "deep"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.beta_rule not in ("log", "linear"):
            raise ValueError(f"unknown beta rule {self.beta_rule!r}")
        if self.early_stop_on not in ("test", "holdout"):
            raise ValueError(f"unknown early-stop monitor {self.early_stop_on!r}")
        deep = self.variant == "deep"
        if self.hidden_layers is None:
            object.__setattr__(self, "hidden_layers", 64 if deep else 3)
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", 0.05 if deep else 0.01)
        if self.patience is None:
            object.__setattr__(self, "patience", 100 if deep else 30)
        if self.hidden_layers < 1 or self.hidden_dim < 1:
            raise ValueError("hidden_layers and hidden_dim must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")
        for name in ("learning_rate", "alpha", "lam"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def beta(self, layer_index: int) -> float:
        if layer_index < 1:
            raise ValueError("layer index starts at 1")
        if self.beta_rule == "log":
            return log(self.lam / layer_index + 1.0)
        return self.lam / layer_index


@dataclass
class ModelParameters:
    """Named weight tensors plus the initialization record."""

    tensors: dict
    init_scheme: str
    seed: int

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            init_scheme=self.init_scheme,
            seed=self.seed,
        )


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def parameter_shapes(config: ModelConfig, n_features: int) -> dict:
    h = config.hidden_dim
    if config.variant == "shallow":
        shapes = {"W0": (n_features, h), "W1": (h, h), "W2": (h, h)}
    else:
        shapes = {"W_in": (n_features, h), "b_in": (h,)}
        for l in range(1, config.hidden_layers + 1):
            shapes[f"W_{l}"] = (h, h)
    shapes["W_out"] = (h, N_CLASSES)
    shapes["b_out"] = (N_CLASSES,)
    return shapes


def init_parameters(config: ModelConfig, n_features: int) -> ModelParameters:
    """Fan-scaled uniform weights, zero biases, drawn in a fixed tensor order."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(config.seed, 0x1417)))
    tensors = {}
    for name, shape in parameter_shapes(config, n_features).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = _glorot(rng, *shape)
    return ModelParameters(tensors=tensors, init_scheme="glorot-uniform", seed=config.seed)


# -- layers ----------------------------------------------------------------------


def _relu(x):
    return np.maximum(x, 0.0)


def shallow_layer(P, H, W) -> np.ndarray:
    """One plain graph-convolution step: rectified P @ H @ W (sparse product
    first, then dense)."""
    return _relu((P @ H) @ W)


def gcnii_layer(P, H, H0, W, layer_index: int, alpha: float, lam: float,
                beta_rule: str = "log", beta_override: float | None = None) -> np.ndarray:
    """Residual/identity-map graph convolution.

    Mixes the propagated signal with the initial representation H0 by alpha,
    then applies (1-beta) I + beta W with beta = ln(lam/layer + 1) (or lam/layer
    under the "linear" rule). With alpha = 0 and beta forced to 1 this reduces
    exactly to :func:`shallow_layer`.
    """
    if H.shape != H0.shape:
        raise ValueError(f"H {H.shape} and H0 {H0.shape} must match")
    if beta_override is not None:
        beta = beta_override
    elif beta_rule == "log":
        beta = log(lam / layer_index + 1.0)
    else:
        beta = lam / layer_index
    support = (1.0 - alpha) * (P @ H) + alpha * H0
    return _relu((1.0 - beta) * support + beta * (support @ W))


def _log_softmax(logits):
    shift = logits - logits.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(params, config, P, X, dropout_active=False, rng=None):
    """Log-probabilities plus the cache the backward pass needs."""
    t = params.tensors
    rate = config.dropout
    use_drop = dropout_active and rate > 0.0
    if use_drop and rng is None:
        raise ValueError("dropout_active requires an rng")
    cache = {"X": X, "masks": {}}
    if config.variant == "shallow":
        H = X
        acts, pres = [], []
        for i, wname in enumerate(("W0", "W1", "W2")):
            if i > 0 and use_drop:
                mask = _dropout_mask(rng, H.shape, rate)
                cache["masks"][i] = mask
                H = H * mask
            A = P @ H
            Z = A @ t[wname]
            H = _relu(Z)
            acts.append(A)
            pres.append(Z)
        cache["A"] = acts
        cache["Z"] = pres
        cache["H_last"] = H
        logits = H @ t["W_out"] + t["b_out"]
    else:
        Zin = X @ t["W_in"] + t["b_in"]
        H0 = _relu(Zin)
        cache["Zin"] = Zin
        cache["H0"] = H0
        H = H0
        supports, pres = [], []
        for l in range(1, config.hidden_layers + 1):
            if use_drop:
                mask = _dropout_mask(rng, H.shape, rate)
                cache["masks"][l] = mask
                H = H * mask
            beta = config.beta(l)
            S = (1.0 - config.alpha) * (P @ H) + config.alpha * H0
            T = (1.0 - beta) * S + beta * (S @ t[f"W_{l}"])
            H = _relu(T)
            supports.append(S)
            pres.append(T)
        cache["S"] = supports
        cache["T"] = pres
        cache["H_last"] = H
        logits = H @ t["W_out"] + t["b_out"]
    if not np.isfinite(logits).all():
        raise TrainingDivergenceError("nonfinite activations in forward pass")
    cache["logits"] = logits
    return _log_softmax(logits), cache


def forward(params, config, P, X, dropout_active=False, rng=None) -> np.ndarray:
    """Row-wise log-probabilities over the two classes."""
    return _forward(params, config, P, X, dropout_active=dropout_active, rng=rng)[0]


def loss(log_probs, labels, mask) -> float:
    """Mean negative log-probability of the true class over the masked nodes.

    Weight-decay penalties live in the optimizer, not here.
    """
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty mask")
    return float(-log_probs[idx, np.asarray(labels)[idx]].mean())


def _grad_logits(log_probs, labels, mask):
    n = log_probs.shape[0]
    idx = np.flatnonzero(mask)
    G = np.zeros((n, N_CLASSES))
    probs = np.exp(log_probs[idx])
    probs[np.arange(idx.size), np.asarray(labels)[idx]] -= 1.0
    G[idx] = probs / idx.size
    return G


def _backward(params, config, P, cache, G):
    t = params.tensors
    grads = {}
    H_last = cache["H_last"]
    grads["W_out"] = H_last.T @ G
    grads["b_out"] = G.sum(axis=0)
    dH = G @ t["W_out"].T
    masks = cache["masks"]
    if config.variant == "shallow":
        for i in (2, 1, 0):
            wname = f"W{i}"
            dZ = dH * (cache["Z"][i] > 0)
            grads[wname] = cache["A"][i].T @ dZ
            if i > 0:
                dD = P @ (dZ @ t[wname].T)
                dH = dD * masks[i] if i in masks else dD
    else:
        dH0 = np.zeros_like(cache["H0"])
        for l in range(config.hidden_layers, 0, -1):
            beta = config.beta(l)
            dT = dH * (cache["T"][l - 1] > 0)
            S = cache["S"][l - 1]
            grads[f"W_{l}"] = beta * (S.T @ dT)
            dS = (1.0 - beta) * dT + beta * (dT @ t[f"W_{l}"].T)
            dH0 += config.alpha * dS
            dD = P @ ((1.0 - config.alpha) * dS)
            dH = dD * masks[l] if l in masks else dD
        dH0 += dH  # the first layer's input path also lands on H0
        dZin = dH0 * (cache["Zin"] > 0)
        grads["W_in"] = cache["X"].T @ dZin
        grads["b_in"] = dZin.sum(axis=0)
    return grads


def loss_and_grads(params, config, P, X, labels, mask, dropout_active=False, rng=None):
    """(loss, gradient dict) for the masked cross-entropy; used by training and
    by the finite-difference checks."""
    log_probs, cache = _forward(params, config, P, X, dropout_active=dropout_active, rng=rng)
    value = loss(log_probs, labels, mask)
    grads = _backward(params, config, P, cache, _grad_logits(log_probs, labels, mask))
    return value, grads


# -- optimization -----------------------------------------------------------------


def _decay_rate(name: str, config: ModelConfig) -> float:
    if config.variant == "shallow":
        return config.weight_decay_hidden
    if name in ("W_in", "b_in", "W_out", "b_out"):
        return config.weight_decay_fc
    return config.weight_decay_hidden


class _Adam:
    def __init__(self, tensors, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors, grads, decay):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, w in tensors.items():
            g = grads[k] + decay[k] * w
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            w -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainTrace:
    """Per-epoch losses and the early-stopping outcome."""

    train_losses: list = field(default_factory=list)
    test_losses: list = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    wall_time: float = 0.0


def train(g: Graph, X, dataset, config: ModelConfig):
    """Full-batch transductive training with early stopping.

    Loss is evaluated on the training mask; early stopping watches the
    loss on the test mask (or on a held-out slice of the training nodes when
    ``config.early_stop_on == "holdout"``), and the returned parameters are
    the snapshot from the best-monitored epoch.
    """
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    P = adjusted_transition(g)
    labels = dataset.labels
    train_mask = dataset.train_mask.copy()
    if config.early_stop_on == "holdout":
        ids = np.flatnonzero(train_mask)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(config.seed, 0x686F)))
        held = rng.permutation(ids)[: max(1, int(round(config.holdout_fraction * ids.size)))]
        monitor_mask = np.zeros_like(train_mask)
        monitor_mask[held] = True
        train_mask[held] = False
    else:
        monitor_mask = dataset.test_mask

    params = init_parameters(config, X.shape[1])
    decay = {k: _decay_rate(k, config) for k in params.tensors}
    adam = _Adam(params.tensors, lr=config.learning_rate)
    drop_rng = np.random.default_rng(np.random.SeedSequence(entropy=(config.seed, 0xD0)))

    trace = TrainTrace()
    best = np.inf
    best_params = params.copy()
    bad = 0
    start = time.perf_counter()
    for epoch in range(config.max_epochs):
        try:
            train_loss, grads = loss_and_grads(
                params, config, P, X, labels, train_mask, dropout_active=True, rng=drop_rng
            )
        except TrainingDivergenceError as err:
            trace.wall_time = time.perf_counter() - start
            raise TrainingDivergenceError(str(err), trace=trace) from None
        if not np.isfinite(train_loss):
            trace.wall_time = time.perf_counter() - start
            raise TrainingDivergenceError(f"nonfinite loss at epoch {epoch}", trace=trace)
        adam.step(params.tensors, grads, decay)
        monitor_loss = loss(forward(params, config, P, X), labels, monitor_mask)
        trace.train_losses.append(train_loss)
        trace.test_losses.append(monitor_loss)
        trace.epochs_run = epoch + 1
        if monitor_loss < best:
            best = monitor_loss
            best_params = params.copy()
            trace.best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad > config.patience:
                break
    trace.wall_time = time.perf_counter() - start
    return best_params, trace


def predict(params: ModelParameters, config: ModelConfig, P, X):
    """Per-node (class, positive-class probability), dropout off; equal logits
    resolve to class 0."""
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    log_probs = forward(params, config, P, X)
    classes = np.argmax(log_probs, axis=1)
    return classes, np.exp(log_probs[:, 1])


# -- checkpoints --------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def checkpoint_dict(params: ModelParameters, config: ModelConfig) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "variant": config.variant,
            "hidden_layers": config.hidden_layers,
            "hidden_dim": config.hidden_dim,
            "alpha": config.alpha,
            "lam": config.lam,
            "beta_rule": config.beta_rule,
            "dropout": config.dropout,
            "learning_rate": config.learning_rate,
            "weight_decay_hidden": config.weight_decay_hidden,
            "weight_decay_fc": config.weight_decay_fc,
            "patience": config.patience,
            "max_epochs": config.max_epochs,
            "seed": config.seed,
            "early_stop_on": config.early_stop_on,
            "holdout_fraction": config.holdout_fraction,
        },
        "init": {"scheme": params.init_scheme, "seed": params.seed},
        "tensors": {
            name: {"shape": list(w.shape), "data": w.ravel().tolist()}
            for name, w in params.tensors.items()
        },
    }


def checkpoint_from_dict(payload: dict):
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
    config = ModelConfig(**payload["config"])
    tensors = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["tensors"].items()
    }
    params = ModelParameters(
        tensors=tensors, init_scheme=payload["init"]["scheme"], seed=payload["init"]["seed"]
    )
    return params, config
