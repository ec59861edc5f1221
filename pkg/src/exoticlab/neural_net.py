"""From-scratch multilayer perceptron for price surrogates.

Fixed architecture: three hidden layers of 30 sigmoid units and a linear
output. Training minimizes mean absolute error with Adam, checkpointing the
weights at every new validation low and stopping once the validation loss
has not improved for ``patience`` epochs; the checkpointed (not final)
weights are returned. Input gradients come from the same reverse-mode pass
used for training, extended one step down to the inputs, without touching
the weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import substream

HIDDEN_WIDTH = 30
N_HIDDEN = 3


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 5000
    patience: int = 50
    val_fraction: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class Mlp:
    """Weight matrices (fan_in x fan_out) and bias vectors per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class Normalizer:
    """Feature standardization plus a target scale divisor."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_scale: float
    constant_features: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.constant_features is None:
            object.__setattr__(
                self, "constant_features", np.zeros(len(self.feature_mean), dtype=bool)
            )
        if np.any(self.feature_std <= 0):
            raise ValueError("feature stds must be positive")

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.feature_mean) / self.feature_std

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.feature_std + self.feature_mean

    @classmethod
    def fit(cls, features: np.ndarray, targets: np.ndarray) -> "Normalizer":
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        constant = std < 1e-12
        std = np.where(constant, 1.0, std)
        scale = float(targets.std())
        if scale < 1e-12:
            scale = 1.0
        return cls(feature_mean=mean, feature_std=std, target_scale=scale,
                   constant_features=constant)


def init_mlp(d_in: int, seed: int, widths: tuple[int, ...] = (HIDDEN_WIDTH,) * N_HIDDEN) -> Mlp:
    """Glorot-style uniform initialization, seeded."""
    rng = substream(seed, "init")
    dims = [d_in, *widths, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights=weights, biases=biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cached(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer; x is (n, d_in) normalized features."""
    acts = [x]
    a = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = _sigmoid(a @ w + b)
        acts.append(a)
    acts.append(a @ net.weights[-1] + net.biases[-1])
    return acts


def forward(net: Mlp, features: np.ndarray) -> np.ndarray | float:
    """Network output for normalized features; accepts (d,) or (n, d)."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.d_in:
        raise ValueError(f"expected {net.d_in} features, got {x.shape[1]}")
    y = _forward_cached(net, x)[-1][:, 0]
    return float(y[0]) if single else y


def predict(net: Mlp, normalizer: Normalizer, features: np.ndarray) -> np.ndarray | float:
    """Price prediction in original target units from raw features."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    z = normalizer.normalize(x if not single else x[None, :])
    y = forward(net, z) * normalizer.target_scale
    return float(y[0]) if single else y


def input_gradient(net: Mlp, normalizer: Normalizer, features: np.ndarray) -> np.ndarray:
    """Exact d(prediction)/d(feature) in original units, by reverse mode.

    Accepts raw (un-normalized) features, (d,) or (n, d); weights are read,
    never written.
    """
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.d_in:
        raise ValueError(f"expected {net.d_in} features, got {x.shape[1]}")
    acts = _forward_cached(net, normalizer.normalize(x))
    grad = np.repeat(net.weights[-1].T, x.shape[0], axis=0)  # d y / d a_last
    for w, a in zip(reversed(net.weights[:-1]), reversed(acts[1:-1])):
        grad = (grad * a * (1.0 - a)) @ w.T
    grad = grad / normalizer.feature_std * normalizer.target_scale
    return grad[0] if single else grad


@dataclass(frozen=True)
class TrainResult:
    net: Mlp
    normalizer: Normalizer
    history: list[dict]
    best_val_mae: float
    best_epoch: int
    stopped_epoch: int


def train(features: np.ndarray, targets: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Train the surrogate on (features, targets) rows.

    Splits train/validation by a seeded shuffle, standardizes features and
    scales targets on the training split, and runs Adam on the mean absolute
    error. History rows carry per-epoch train/validation MAE in original
    target units.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be (n, d) with matching targets")
    if len(x) < 100:
        raise ValueError("need at least 100 rows to fit a surrogate")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")

    order = substream(cfg.seed, "split").permutation(len(x))
    n_val = max(1, int(round(cfg.val_fraction * len(x))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    normalizer = Normalizer.fit(x[train_idx], y[train_idx])
    x_train = normalizer.normalize(x[train_idx])
    y_train = y[train_idx] / normalizer.target_scale
    x_val = normalizer.normalize(x[val_idx])
    y_val = y[val_idx] / normalizer.target_scale

    net = init_mlp(x.shape[1], cfg.seed)
    m = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
    v = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
    step = 0
    batch_rng = substream(cfg.seed, "batches")

    best = net.copy()
    best_val = math.inf
    best_epoch = -1
    history: list[dict] = []
    epoch = 0
    for epoch in range(cfg.max_epochs):
        perm = batch_rng.permutation(len(train_idx))
        train_abs_err = 0.0
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            acts = _forward_cached(net, xb)
            resid = acts[-1][:, 0] - yb
            train_abs_err += float(np.abs(resid).sum())
            delta = (np.sign(resid) / len(idx))[:, None]  # d MAE / d output
            grads_w: list[np.ndarray] = []
            grads_b: list[np.ndarray] = []
            for layer in range(len(net.weights) - 1, -1, -1):
                grads_w.append(acts[layer].T @ delta)
                grads_b.append(delta.sum(axis=0))
                if layer > 0:
                    a = acts[layer]
                    delta = (delta @ net.weights[layer].T) * a * (1.0 - a)
            grads_w.reverse()
            grads_b.reverse()

            step += 1
            params = net.weights + net.biases
            grads = grads_w + grads_b
            bias1 = 1.0 - cfg.beta1 ** step
            bias2 = 1.0 - cfg.beta2 ** step
            for i, (p, g) in enumerate(zip(params, grads)):
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (m[i] / bias1) / (np.sqrt(v[i] / bias2) + cfg.eps)

        val_pred = _forward_cached(net, x_val)[-1][:, 0]
        val_mae = float(np.mean(np.abs(val_pred - y_val)))
        train_mae = train_abs_err / len(train_idx)
        if not math.isfinite(val_mae):
            raise RuntimeError(
                f"validation loss became non-finite at epoch {epoch}; "
                "check feature/target scaling"
            )
        history.append({
            "epoch": epoch,
            "train_mae": train_mae * normalizer.target_scale,
            "val_mae": val_mae * normalizer.target_scale,
        })
        if val_mae < best_val:
            best_val = val_mae
            best = net.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break

    return TrainResult(
        net=best,
        normalizer=normalizer,
        history=history,
        best_val_mae=best_val * normalizer.target_scale,
        best_epoch=best_epoch,
        stopped_epoch=epoch,
    )


def sensitivity(
    net: Mlp,
    normalizer: Normalizer,
    feature_panel: np.ndarray,
    vol_columns: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-input relative gradient dispersion over a panel.

    For each selected column i, s = | |g_i| / mean_panel(|g_i|) - 1 |, where
    g_i is the prediction gradient for that input. Columns whose mean
    absolute gradient is zero are flagged and returned as NaN.
    """
    panel = np.asarray(feature_panel, dtype=float)
    if panel.ndim != 2 or panel.shape[0] < 1:
        raise ValueError("panel must be (n, d) with n >= 1")
    if vol_columns is None:
        vol_columns = np.arange(panel.shape[1])
    grads = np.abs(input_gradient(net, normalizer, panel))[:, vol_columns]
    mean_abs = grads.mean(axis=0)
    flagged = mean_abs <= 0.0
    safe = np.where(flagged, 1.0, mean_abs)
    s = np.abs(grads / safe - 1.0)
    s[:, flagged] = np.nan
    return s, flagged


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_network(net: Mlp, normalizer: Normalizer, metadata: dict | None = None) -> str:
    doc = {
        "layer_dims": [net.d_in] + [w.shape[1] for w in net.weights],
        "weights": [w.flatten().tolist() for w in net.weights],  # row-major
        "biases": [b.tolist() for b in net.biases],
        "feature_mean": normalizer.feature_mean.tolist(),
        "feature_std": normalizer.feature_std.tolist(),
        "target_scale": normalizer.target_scale,
        "constant_features": normalizer.constant_features.astype(int).tolist(),
        "metadata": metadata or {},
    }
    return json.dumps(doc, sort_keys=True)


def load_network(text: str) -> tuple[Mlp, Normalizer, dict]:
    doc = json.loads(text)
    dims = doc["layer_dims"]
    weights = [
        np.array(flat, dtype=float).reshape(dims[i], dims[i + 1])
        for i, flat in enumerate(doc["weights"])
    ]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    net = Mlp(weights=weights, biases=biases)
    normalizer = Normalizer(
        feature_mean=np.array(doc["feature_mean"], dtype=float),
        feature_std=np.array(doc["feature_std"], dtype=float),
        target_scale=float(doc["target_scale"]),
        constant_features=np.array(doc["constant_features"], dtype=bool),
    )
    return net, normalizer, doc["metadata"]
