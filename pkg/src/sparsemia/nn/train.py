"""Training loop with seeded shuffling and best-validation checkpointing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sparsemia.nn.network import accuracy, cross_entropy, cross_entropy_grad
from sparsemia.nn.optim import SGD, lr_at_epoch

__all__ = ["TrainConfig", "TrainedModel", "train"]


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    initial_lr: float = 0.03
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 0.0
    lr_drop_points: tuple = (0.5, 0.75)
    lr_drop_factor: float = 10.0
    seed: int = 0
    augment: bool = False
    decoupled_weight_decay: bool = False
    decay_norm_and_bias: bool = True

    def __post_init__(self):
        pts = tuple(self.lr_drop_points)
        if any(not 0.0 < f < 1.0 for f in pts):
            raise ValueError(f"lr drop points must lie in (0, 1), got {pts}")
        if any(b >= a for a, b in zip(pts[1:], pts)):
            raise ValueError(f"lr drop points must be strictly increasing, got {pts}")
        self.lr_drop_points = pts


@dataclass
class TrainedModel:
    network: object
    history: list = field(default_factory=list)  # per-epoch {train_loss, val_accuracy, lr}
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")
    best_state: dict = None

    def restore_best(self):
        """Load the best-validation-epoch weights into the network."""
        self.network.set_state(self.best_state)
        return self.network


def train(network, train_set, val_set, config, augment_fn=None):
    """Train with SGD + momentum, recording history and the best checkpoint.

    Shuffling is driven by a generator seeded from ``config.seed``, so a
    fixed seed gives bitwise-identical results.  The stored checkpoint is the
    state at the epoch of maximum validation accuracy (earliest on ties);
    with zero epochs it is the initial state and the history is empty.
    """
    if len(train_set.labels) == 0 or len(val_set.labels) == 0:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    opt = SGD(
        network.params(),
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        nesterov=config.nesterov,
        decoupled=config.decoupled_weight_decay,
        decay_norm_and_bias=config.decay_norm_and_bias,
    )
    model = TrainedModel(network=network, best_state=network.get_state())
    inputs, labels = train_set.inputs, train_set.labels
    n = len(labels)
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = inputs[idx]
            if config.augment and augment_fn is not None:
                batch = augment_fn(batch, rng)
            network.zero_grads()
            logits = network.forward(batch, training=True)
            losses.append(cross_entropy(logits, labels[idx]))
            network.backward(cross_entropy_grad(logits, labels[idx]))
            opt.step(lr)
        val_acc = accuracy(network, val_set)
        model.history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)),
             "val_accuracy": val_acc, "lr": lr}
        )
        if model.best_epoch < 0 or val_acc > model.best_val_accuracy:
            model.best_epoch = epoch
            model.best_val_accuracy = val_acc
            model.best_state = network.get_state()
    return model
