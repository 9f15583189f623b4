"""Losses, stratified splits, the training loop and the metric suite."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .model import ClusterGT, GraphInput
from .tensor import Adam, ShapeError, Tensor

FPR_LEVELS = (1e-4, 1e-3, 1e-2, 1e-1)
PROB_CLAMP = 1e-7


class InsufficientData(ValueError):
    pass


class DegenerateSplit(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-5
    batch_size: int = 16
    max_epochs: int = 60
    patience: int = 10
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    stratified: bool = True
    pos_weight: float = 1.0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split ratios {self.split} must be nonnegative and sum to 1")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, batch_size and max_epochs must be positive")
        object.__setattr__(self, "split", tuple(self.split))


# -- losses ------------------------------------------------------------------------

def bce_loss(z: Tensor, label: int, weight: float = 1.0) -> Tensor:
    """Binary cross-entropy on a (1, 1) logit, with the probability clamped
    to [1e-7, 1 - 1e-7]."""
    if z.data.size != 1:
        raise ShapeError(f"bce_loss expects a single logit, got shape {z.shape}")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    y_hat = T.clip(T.sigmoid(z), PROB_CLAMP, 1 - PROB_CLAMP)
    term = T.log(y_hat) if label == 1 else T.log(1.0 - y_hat)
    return T.sum(term) * (-weight)


def softmax_ce(z: Tensor, label: int, weight: float = 1.0) -> Tensor:
    """Categorical cross-entropy on (1, K) logits."""
    if z.data.ndim != 2 or z.shape[0] != 1:
        raise ShapeError(f"softmax_ce expects (1, K) logits, got {z.shape}")
    shifted = z - z.data.max()
    log_norm = T.log(T.sum(T.exp(shifted)))
    return (log_norm - T.cols(shifted, label, label + 1)) * weight


def sample_loss(z: Tensor, label: int, pos_weight: float = 1.0) -> Tensor:
    w = pos_weight if label == 1 else 1.0
    loss = bce_loss(z, label, w) if z.data.size == 1 else softmax_ce(z, label, w)
    return T.sum(loss)


# -- splitting -----------------------------------------------------------------------

def split(labels: Sequence[int], cfg: TrainConfig = TrainConfig()
          ) -> tuple[list[int], list[int], list[int]]:
    """Stratified train/val/test index lists, each sorted."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(cfg.seed)
    groups = [np.flatnonzero(labels == c) for c in (0, 1)] if cfg.stratified \
        else [np.arange(len(labels))]
    for g, c in zip(groups, (0, 1)):
        if cfg.stratified and len(g) < 10:
            raise InsufficientData(f"class {c} has {len(g)} samples, need at least 10")
    out: list[list[int]] = [[], [], []]
    for g in groups:
        g = rng.permutation(g)
        n_train = int(round(cfg.split[0] * len(g)))
        n_val = int(round(cfg.split[1] * len(g)))
        out[0] += g[:n_train].tolist()
        out[1] += g[n_train:n_train + n_val].tolist()
        out[2] += g[n_train + n_val:].tolist()
    return sorted(out[0]), sorted(out[1]), sorted(out[2])


# -- metrics ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def of(cls, scores, labels, threshold: float = 0.5) -> "ConfusionCounts":
        pred = np.asarray(scores) >= threshold
        y = np.asarray(labels) == 1
        return cls(int(np.sum(pred & y)), int(np.sum(pred & ~y)),
                   int(np.sum(~pred & ~y)), int(np.sum(~pred & y)))


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    tpr_at_fpr: dict[float, float]
    counts: ConfusionCounts
    precision_undefined: bool = False

    def row(self, split_name: str) -> list:
        return [split_name, self.accuracy, self.precision, self.recall, self.f1, self.auc,
                *(self.tpr_at_fpr[level] for level in FPR_LEVELS)]

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "auc": self.auc,
                "tpr_at_fpr": {repr(k): v for k, v in self.tpr_at_fpr.items()},
                "counts": vars(self.counts), "precision_undefined": self.precision_undefined}


def point_metrics(c: ConfusionCounts) -> tuple[float, float, float, float, bool]:
    """accuracy, precision, recall, f1, precision_undefined."""
    acc = (c.tp + c.tn) / c.total if c.total else 0.0
    undefined = c.tp + c.fp == 0
    prec = 0.0 if undefined else c.tp / (c.tp + c.fp)
    rec = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return acc, prec, rec, f1, undefined


def _check_both_classes(labels) -> np.ndarray:
    y = np.asarray(labels)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateSplit("both classes must be present")
    return y


def roc_curve(scores, labels) -> list[tuple[float, float, float]]:
    """Operating points (fpr, tpr, threshold) sweeping the threshold down
    through every distinct score; starts at (0, 0, inf)."""
    y = _check_both_classes(labels)
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    P, N = int(np.sum(y == 1)), int(np.sum(y == 0))
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            tp += int(y[j] == 1)
            fp += int(y[j] == 0)
            j += 1
        points.append((fp / N, tp / P, float(s[i])))
        i = j
    return points


def auc(points: Sequence[tuple[float, float, float]]) -> float:
    area = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    return area


def tpr_at_fpr(scores, labels, levels: Sequence[float] = FPR_LEVELS,
               points=None) -> dict[float, float]:
    pts = points if points is not None else roc_curve(scores, labels)
    return {lvl: max(tpr for fpr, tpr, _ in pts if fpr <= lvl) for lvl in levels}


def metrics_from_scores(scores, labels, threshold: float = 0.5) -> tuple[Metrics, list]:
    pts = roc_curve(scores, labels)
    c = ConfusionCounts.of(scores, labels, threshold)
    acc, prec, rec, f1, undefined = point_metrics(c)
    return Metrics(acc, prec, rec, f1, auc(pts), tpr_at_fpr(scores, labels, points=pts), c,
                   undefined), pts


def predict_scores(model: ClusterGT, inputs: Sequence[GraphInput]) -> np.ndarray:
    return np.array([model.predict_proba(g) for g in inputs])


def evaluate(model: ClusterGT, inputs: Sequence[GraphInput], threshold: float = 0.5
             ) -> tuple[Metrics, list, np.ndarray]:
    scores = predict_scores(model, inputs)
    m, pts = metrics_from_scores(scores, [g.label for g in inputs], threshold)
    return m, pts, scores


# -- training ---------------------------------------------------------------------------

class EarlyStopping:
    """Tracks the best score; ``update`` returns True once ``patience``
    epochs pass without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0

    def update(self, epoch: int, score: float) -> tuple[bool, bool]:
        """(improved, should_stop)"""
        if score > self.best:
            self.best, self.best_epoch = score, epoch
            return True, False
        return False, epoch - self.best_epoch >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    val_auc: float


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_val_f1: float
    stopped_early: bool
    initial_loss: float = field(default=math.nan)


def _snapshot(model: ClusterGT) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in model.params.items()}


def train(model: ClusterGT, train_set: Sequence[GraphInput], val_set: Sequence[GraphInput],
          cfg: TrainConfig = TrainConfig(),
          log: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Minibatch Adam with early stopping on validation F1.  The model ends
    up holding the best-epoch parameters."""
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience)
    best = _snapshot(model)
    history: list[EpochRecord] = []
    initial = math.nan
    stopped = False
    val_labels = [g.label for g in val_set]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            opt.zero_grad()
            for i in batch:
                g = train_set[i]
                with T.Tape() as tape:
                    z = model.forward(g, train=True, rng=drop_rng)
                    loss = sample_loss(z, g.label, cfg.pos_weight) * (1.0 / len(batch))
                value = float(loss.data)
                if not math.isfinite(value):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, sample {int(i)}: logit={z.data.ravel()}")
                tape.backward(loss)
                total += value * len(batch)
            for k, p in model.params.items():
                if p.grad is not None and not np.all(np.isfinite(p.grad)):
                    raise FloatingPointError(f"non-finite gradient for {k} at epoch {epoch}")
            opt.step()
        train_loss = total / max(1, len(order))
        if epoch == 1:
            initial = train_loss
        val_scores = predict_scores(model, val_set)
        vm, _ = metrics_from_scores(val_scores, val_labels)
        rec = EpochRecord(epoch, train_loss, vm.f1, vm.auc)
        history.append(rec)
        if log:
            log(rec)
        improved, stop = stopper.update(epoch, vm.f1)
        if improved:
            best = _snapshot(model)
        if stop:
            stopped = True
            break
    for k, arr in best.items():
        model.params[k].data = arr
    return TrainResult(history, stopper.best_epoch, stopper.best, stopped, initial)


# -- CSV outputs ---------------------------------------------------------------------------

METRICS_HEADER = ["split", "accuracy", "precision", "recall", "f1", "auc",
                  "tpr@1e-4", "tpr@1e-3", "tpr@1e-2", "tpr@1e-1"]


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def metrics_csv(results: dict[str, Metrics]) -> str:
    return _csv(METRICS_HEADER, [m.row(name) for name, m in results.items()])


def roc_csv(points) -> str:
    return _csv(["fpr", "tpr", "threshold"], points)


def history_csv(history: Sequence[EpochRecord]) -> str:
    return _csv(["epoch", "train_loss", "val_f1", "val_auc"],
                [[r.epoch, r.train_loss, r.val_f1, r.val_auc] for r in history])


def write_text(path: str | Path, text: str) -> None:
    from .deob.batch import atomic_write

    atomic_write(Path(path), text)
