"""Mini-batch Adam training with early stopping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import (ConfigError, GraphBatch, ModelConfig, init_params, loss_and_grad,
                    predict_proba, to_float32_grid)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc")


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        out = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            out[k] = p - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        # keep parameters exactly representable in the float32 checkpoint
        return to_float32_grid(out)


def split_corpus(graphs: Sequence, seed: int, fractions=(0.8, 0.1, 0.1)):
    """Deterministic train/val/test split by shuffled id order."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    items = sorted(graphs, key=lambda g: g.id)
    perm = np.random.default_rng(seed).permutation(len(items))
    items = [items[i] for i in perm]
    n_train = int(round(fractions[0] * len(items)))
    n_val = int(round(fractions[1] * len(items)))
    return items[:n_train], items[n_train:n_train + n_val], items[n_train + n_val:]


def _labels(graphs, task):
    return np.array([g.label(task) for g in graphs], dtype=np.int64)


def _chunks(graphs, cfg, size=64):
    return [GraphBatch(graphs[i:i + size], cfg.n_edge_types) for i in range(0, len(graphs), size)]


def evaluate_loss_acc(params, batches, labels, cfg):
    total, correct, n = 0.0, 0, 0
    for b in batches:
        y = labels[n:n + b.n_graphs]
        loss, _ = loss_and_grad(params, b, y, cfg, need_grad=False)
        p = predict_proba(params, b, cfg)
        total += loss * b.n_graphs
        correct += int(np.sum((p >= 0.5) == (y == 1)))
        n += b.n_graphs
    return total / n, correct / n


def accuracy(params, graphs, cfg) -> float:
    return evaluate_loss_acc(params, _chunks(list(graphs), cfg), _labels(graphs, cfg.task), cfg)[1]


@dataclass
class TrainResult:
    params: dict
    history: list
    best_epoch: int


def train(train_graphs: Sequence, val_graphs: Sequence, cfg: ModelConfig,
          params: Optional[dict] = None, log: Optional[Callable[[str], None]] = None) -> TrainResult:
    """Train one binary task model; return the best-validation parameters."""
    cfg.validate()
    if not train_graphs or not val_graphs:
        raise ConfigError("training and validation splits must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng) if params is None else dict(params)
    opt = Adam(params, cfg.lr)
    y_train = _labels(train_graphs, cfg.task)
    val_batches = _chunks(list(val_graphs), cfg)
    y_val = _labels(val_graphs, cfg.task)

    best = (np.inf, params, 0)
    history, stale = [], 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_graphs))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            batch = GraphBatch([train_graphs[i] for i in idx], cfg.n_edge_types)
            loss, grads = loss_and_grad(params, batch, y_train[idx], cfg)
            params = opt.step(params, grads)
            total += loss * len(idx)
        val_loss, val_acc = evaluate_loss_acc(params, val_batches, y_val, cfg)
        row = {"epoch": epoch, "train_loss": total / len(order), "val_loss": val_loss, "val_acc": val_acc}
        history.append(row)
        if log:
            log(f"epoch {epoch:3d}  train {row['train_loss']:.4f}  val {val_loss:.4f}  acc {val_acc:.3f}")
        if val_loss < best[0] - cfg.min_delta:
            best, stale = (val_loss, params, epoch), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(best[1], history, best[2])


def history_csv(history: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for row in history:
        w.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])
    return buf.getvalue()


def write_history(history: list, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(history_csv(history))
