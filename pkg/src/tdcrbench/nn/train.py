"""Mini-batch Adam training with early stopping, and the architecture ablation grid."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, forward, init_model, loss_and_gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 1500
    patience: int = 10


@dataclass
class TrainData:
    """Normalized windows for one training run."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    def __post_init__(self):
        if len(self.x_train) == 0 or len(self.x_val) == 0:
            raise ValueError("training and validation splits must be non-empty")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_mae: float
    seconds: float


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict, grads: dict):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            params[k] -= c.learning_rate * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def evaluate(model: ModelParams, x, y, batch: int = 512):
    """(L2 loss, MAE) in normalized units."""
    sq, ab, n = 0.0, 0.0, 0
    for s in range(0, len(x), batch):
        r = forward(model, x[s:s + batch]) - y[s:s + batch]
        sq += float(np.sum(r * r))
        ab += float(np.sum(np.abs(r)))
        n += len(r)
    return 0.5 * sq / n, ab / (n * y.shape[1])


def train(model: ModelParams, data: TrainData, cfg: TrainConfig | None = None, seed: int = 0):
    """Train a copy of ``model``; returns (best_validation_snapshot, history).

    ``history[0]`` is the untrained model (epoch 0). Stops when validation
    MAE has not improved for ``cfg.patience`` epochs.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    model = model.copy()
    opt = Adam(model.weights, cfg)
    tl, _ = evaluate(model, data.x_train, data.y_train)
    vl, vm = evaluate(model, data.x_val, data.y_val)
    history = [EpochRecord(0, tl, vl, vm, 0.0)]
    best, best_mae, since = model.copy(), vm, 0
    n = len(data.x_train)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = loss_and_gradients(model, data.x_train[idx], data.y_train[idx])
            opt.update(model.weights, grads)
            total += loss * len(idx)
        vl, vm = evaluate(model, data.x_val, data.y_val)
        history.append(EpochRecord(epoch, total / n, vl, vm, time.perf_counter() - t0))
        if vm < best_mae:
            best, best_mae, since = model.copy(), vm, 0
        else:
            since += 1
            if since >= cfg.patience:
                log.info("early stop at epoch %d (best val MAE %.5f)", epoch, best_mae)
                break
    best.metadata.update({
        "seed": seed,
        "epochs_run": history[-1].epoch,
        "best_val_mae": best_mae,
        "final_train_loss": history[-1].train_loss,
        "final_val_loss": min(h.val_loss for h in history),
    })
    return best, history


def best_val_loss(history) -> float:
    return min(h.val_loss for h in history)


def ablation_grid(configs, data: TrainData, input_size: int, output_size: int, seq_len: int = 5,
                  cfg: TrainConfig | None = None, seed: int = 0):
    """Train every (arch, layers, hidden) on the same data.

    Returns rows of dicts with the best validation loss and mean seconds per
    epoch, in the order given.
    """
    rows = []
    for arch, layers, hidden in configs:
        model = init_model(arch, input_size, output_size, layers, hidden, seq_len, seed)
        trained, history = train(model, data, cfg, seed)
        epochs = history[1:]
        rows.append({
            "arch": arch,
            "layers": layers,
            "hidden": hidden,
            "validation_loss": best_val_loss(history),
            "seconds_per_epoch": float(np.mean([h.seconds for h in epochs])) if epochs else 0.0,
            "epochs": len(epochs),
            "model": trained,
        })
    return rows
