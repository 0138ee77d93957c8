"""Mini-batch SGD with momentum, step learning-rate decay, and early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import substream

MIN_IMPROVEMENT = 1e-6
EVAL_BATCH = 256

# derivation-path tags under the training seed
_STREAM_SHUFFLE = 0
_STREAM_DROPOUT = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    lr_drop_factor: float = 0.5
    lr_drop_period_epochs: int = 10
    early_stop_patience_epochs: int = 3
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 < self.lr_drop_factor <= 1.0:
            raise ValueError("lr_drop_factor must lie in (0, 1]")
        if self.lr_drop_period_epochs < 1 or self.max_epochs < 1:
            raise ValueError("epoch counts must be at least 1")
        if self.early_stop_patience_epochs < 1:
            raise ValueError("early_stop_patience_epochs must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")


def sgd_momentum_step(params, grads, velocity, learning_rate, momentum):
    """Heavy-ball update: v <- m v - lr g; p <- p + v.  In place."""
    for p, g, v in zip(params, grads, velocity):
        v *= momentum
        v -= learning_rate * g.astype(v.dtype, copy=False)
        p += v.astype(p.dtype, copy=False)
    return params, velocity


def evaluate_loss(net, inputs, targets, batch: int = EVAL_BATCH) -> float:
    """Mean per-sample loss in infer mode, accumulated in float64."""
    total = 0.0
    n = inputs.shape[0]
    for lo in range(0, n, batch):
        hi = min(lo + batch, n)
        total += net.loss(inputs[lo:hi], targets[lo:hi], mode="infer") * (hi - lo)
    return total / n


def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for a 1-based epoch under the step decay schedule."""
    drops = (epoch - 1) // cfg.lr_drop_period_epochs
    return cfg.learning_rate * cfg.lr_drop_factor ** drops


def train_network(net, train_inputs, train_targets, val_inputs, val_targets,
                  cfg: TrainConfig, log_fn=None) -> TrainingLog:
    """Train ``net`` and leave it holding the best-validation-epoch state.

    Each epoch shuffles the training set (final partial batch kept), applies
    the momentum update per batch, then scores the validation split in infer
    mode.  Training stops once the validation loss has not improved by at
    least ``1e-6`` for ``early_stop_patience_epochs`` consecutive epochs, or
    at ``max_epochs``.  All randomness (shuffling, dropout) derives from
    cfg.seed, so reruns reproduce identical parameters.
    """
    if train_inputs.shape[0] == 0 or val_inputs.shape[0] == 0:
        raise ValueError("training and validation splits must be nonempty")
    params = net.parameters()
    velocity = [np.zeros_like(p) for p in params]
    log = TrainingLog()
    best_state = net.snapshot()
    stall = 0

    n = train_inputs.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        lr = learning_rate_at(cfg, epoch)
        shuffle_rng = substream(cfg.seed, _STREAM_SHUFFLE, epoch)
        dropout_rng = substream(cfg.seed, _STREAM_DROPOUT, epoch)
        perm = shuffle_rng.permutation(n)
        batches = [perm[lo:lo + cfg.batch_size] for lo in range(0, n, cfg.batch_size)]
        if len(batches) > 1 and batches[-1].size == 1:
            # a singleton batch cannot batch-normalize; fold it into the previous one
            batches[-2:] = [np.concatenate(batches[-2:])]
        running = 0.0
        for batch in batches:
            loss, grads = net.loss_and_grads(
                train_inputs[batch], train_targets[batch], rng=dropout_rng
            )
            sgd_momentum_step(params, grads, velocity, lr, cfg.momentum)
            running += loss * batch.size
        train_loss = running / n
        val_loss = evaluate_loss(net, val_inputs, val_targets)
        log.epochs.append(EpochRecord(epoch, train_loss, val_loss, lr))
        if log_fn is not None:
            log_fn(log.epochs[-1])

        if val_loss < log.best_val_loss - MIN_IMPROVEMENT:
            log.best_val_loss = val_loss
            log.best_epoch = epoch
            best_state = net.snapshot()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.early_stop_patience_epochs:
                break

    net.restore(best_state)
    return log
