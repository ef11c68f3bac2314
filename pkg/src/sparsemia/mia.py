"""Shadow-model membership-inference attack and the defense metric.

The attacker holds a shadow model trained like the target but on its own
data, so it knows the shadow membership function exactly.  A discriminator
is trained to reproduce that function from black-box features of the shadow
model, then pointed at the target.  Everything in this module sees models
only as callables ``inputs -> probabilities``; no weight access.

Per-sample features are the true class (one-hot), the model's softmax
prediction, and a Monte-Carlo estimate of local sensitivity: the mean of
``|R(x) - R(x + eps * noise)| / eps`` over fresh standard-gaussian noise
vectors, observed componentwise on all class outputs.

Attack precision P over a balanced member/non-member set maps to the
defense score D = 200 - 2P: 100 means the attacker is reduced to coin
flipping, 0 means total membership leakage.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from sparsemia.nn.layers import Dense, ReLU
from sparsemia.nn.network import Network, cross_entropy, cross_entropy_grad, softmax
from sparsemia.nn.optim import Adam

__all__ = [
    "MembershipSplit",
    "FeatureSet",
    "AttackOutcome",
    "Discriminator",
    "DiscriminatorGrid",
    "partition",
    "membership_label",
    "extract_features",
    "train_discriminators",
    "attack",
    "write_feature_csv",
]

DISCRIMINATOR_ARCHS = ((30,), (30, 30), (100, 100, 100))
DISCRIMINATOR_LRS = (0.01, 0.001, 0.0001)


@dataclass(frozen=True)
class MembershipSplit:
    """Four disjoint equal-size index sets plus fixed validation carve-outs."""

    target_train: np.ndarray
    target_test: np.ndarray
    shadow_train: np.ndarray
    shadow_test: np.ndarray
    target_val: np.ndarray
    shadow_val: np.ndarray

    def __post_init__(self):
        quarters = [self.target_train, self.target_test,
                    self.shadow_train, self.shadow_test]
        sizes = {len(q) for q in quarters}
        if len(sizes) != 1:
            raise ValueError("the four subsets must have equal sizes")
        seen = set()
        for q in quarters:
            s = set(q.tolist())
            if seen & s:
                raise ValueError("subsets must be pairwise disjoint")
            seen |= s
        if not set(self.target_val.tolist()) <= set(self.target_train.tolist()):
            raise ValueError("target validation must be a subset of target train")
        if not set(self.shadow_val.tolist()) <= set(self.shadow_train.tolist()):
            raise ValueError("shadow validation must be a subset of shadow train")

    def side(self, name):
        if name == "target":
            return self.target_train, self.target_test
        if name == "shadow":
            return self.shadow_train, self.shadow_test
        raise ValueError(f"side must be 'target' or 'shadow', got {name!r}")


def partition(dataset_size, master_seed, val_per_15000=1000):
    """Uniform random split into four equal quarters with validation carve-outs.

    Sizes not divisible by 4 are truncated to the largest multiple.  Each
    train quarter donates ceil(quarter * val_per_15000 / 15000) indices as a
    fixed validation set (1000 of 15000 at full scale).
    """
    quarter = dataset_size // 4
    if quarter < 4:
        raise ValueError(f"dataset size {dataset_size} too small to partition")
    rng = np.random.default_rng(np.random.SeedSequence((int(master_seed), 0x5BA11)))
    order = rng.permutation(dataset_size)[: 4 * quarter]
    tt, te, st, se = (order[i * quarter:(i + 1) * quarter] for i in range(4))
    n_val = int(np.ceil(quarter * val_per_15000 / 15000))
    return MembershipSplit(
        target_train=np.sort(tt), target_test=np.sort(te),
        shadow_train=np.sort(st), shadow_test=np.sort(se),
        target_val=np.sort(tt[:n_val]), shadow_val=np.sort(st[:n_val]),
    )


def membership_label(index, split, side):
    """1 if the index was trained on (for that side), 0 if held out."""
    train, test = split.side(side)
    if index in set(train.tolist()):
        return 1
    if index in set(test.tolist()):
        return 0
    raise ValueError(f"index {index} is not part of the {side} dataset")


@dataclass
class FeatureSet:
    """Per-sample attack features: one-hot class, prediction, sensitivity."""

    class_onehot: np.ndarray
    prediction: np.ndarray
    sensitivity: np.ndarray

    def __post_init__(self):
        sums = self.prediction.sum(axis=-1)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise ValueError("predictions must sum to 1 within 1e-9")
        if self.sensitivity.min() < 0:
            raise ValueError("sensitivity must be nonnegative")

    @property
    def matrix(self):
        return np.concatenate([self.class_onehot, self.prediction, self.sensitivity], axis=1)

    def __len__(self):
        return len(self.prediction)


def extract_features(predict, inputs, labels, class_count, eps=0.001,
                     mc_samples=5, rng=None):
    """Black-box features for a batch of samples.

    ``predict`` maps an input batch to softmax probabilities.  Each Monte
    Carlo round draws one fresh gaussian perturbation per sample and observes
    all class outputs; the sensitivity is the componentwise mean of
    ``|R(x) - R(x + eps*noise)| / eps`` over the rounds.
    """
    rng = rng or np.random.default_rng(0)
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    base = predict(inputs)
    sens = np.zeros_like(base)
    for _ in range(mc_samples):
        noise = rng.standard_normal(inputs.shape)
        sens += np.abs(base - predict(inputs + eps * noise))
    sens /= mc_samples * eps
    onehot = np.zeros((len(labels), class_count))
    onehot[np.arange(len(labels)), labels] = 1.0
    return FeatureSet(class_onehot=onehot, prediction=base, sensitivity=sens)


class Discriminator:
    """Perceptron deciding membership from an attack feature vector."""

    def __init__(self, feature_dim, hidden, seed):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xD15C)))
        layers = []
        dims = [feature_dim] + list(hidden)
        for a, b in zip(dims, dims[1:]):
            layers.extend([Dense(a, b, rng=rng), ReLU()])
        layers.append(Dense(dims[-1], 2, rng=rng))
        self.network = Network(layers)
        self.hidden = tuple(hidden)

    def fit(self, features, members, lr, epochs=80, batch_size=64, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xF17)))
        opt = Adam(self.network.params())
        n = len(members)
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                self.network.zero_grads()
                logits = self.network.forward(features[idx], training=True)
                self.network.backward(cross_entropy_grad(logits, members[idx]))
                opt.step(lr)
        return self

    def scores(self, features):
        """Probability that each sample is a member."""
        return softmax(self.network.forward(features, training=False))[:, 1]

    def predict_member(self, features):
        return (self.scores(features) >= 0.5).astype(np.int64)

    def accuracy(self, features, members):
        return 100.0 * float((self.predict_member(features) == members).mean())


@dataclass
class DiscriminatorGrid:
    """Grid-search result: the selected discriminator plus all nine entries."""

    best: Discriminator
    best_entry: dict
    entries: list = field(default_factory=list)
    degenerate_features: bool = False


def _balanced_feature_block(predict, dataset, split, side, eps, mc_samples, rng):
    train_idx, test_idx = split.side(side)
    indices = np.concatenate([train_idx, test_idx])
    members = np.concatenate([
        np.ones(len(train_idx), dtype=np.int64),
        np.zeros(len(test_idx), dtype=np.int64),
    ])
    feats = extract_features(
        predict, dataset.inputs[indices], dataset.labels[indices],
        dataset.class_count, eps=eps, mc_samples=mc_samples, rng=rng,
    )
    return feats, members, indices


def train_discriminators(shadow_predict, dataset, split, seed, eps=0.001,
                         mc_samples=5, epochs=80, batch_size=64,
                         holdout_fraction=0.2, membership=None):
    """Train the 3 architectures x 3 learning rates grid on shadow features.

    Features come from the balanced shadow member/non-member sets, labeled by
    the shadow membership function (or ``membership`` when given, e.g. for
    shuffled-label baselines).  A held-out slice of the shadow features
    selects the grid winner by attack accuracy; ties go to the earlier grid
    entry, so selection is deterministic.  Degenerate (all-identical)
    features are flagged but still trained on.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xFEA7)))
    feats, members, _ = _balanced_feature_block(
        shadow_predict, dataset, split, "shadow", eps, mc_samples, rng
    )
    if membership is not None:
        members = np.asarray(membership, dtype=np.int64)
    matrix = feats.matrix
    degenerate = bool(np.all(matrix == matrix[0]))

    order = rng.permutation(len(members))
    n_holdout = max(1, int(holdout_fraction * len(members)))
    hold_idx, fit_idx = order[:n_holdout], order[n_holdout:]

    entries = []
    best = None
    best_entry = None
    for hidden in DISCRIMINATOR_ARCHS:
        for lr in DISCRIMINATOR_LRS:
            disc = Discriminator(matrix.shape[1], hidden, seed=seed)
            disc.fit(matrix[fit_idx], members[fit_idx], lr=lr, epochs=epochs,
                     batch_size=batch_size, seed=seed)
            acc = disc.accuracy(matrix[hold_idx], members[hold_idx])
            entry = {"depth": len(hidden), "width": hidden[0], "lr": lr,
                     "holdout_accuracy": acc}
            entries.append(entry)
            if best_entry is None or acc > best_entry["holdout_accuracy"]:
                best, best_entry = disc, entry
    return DiscriminatorGrid(best=best, best_entry=best_entry, entries=entries,
                             degenerate_features=degenerate)


@dataclass
class AttackOutcome:
    """Attack precision P (percent) and the defense score D = 200 - 2P."""

    precision: float
    discriminator: dict
    scores: np.ndarray
    membership: np.ndarray

    @property
    def defense(self):
        return 200.0 - 2.0 * self.precision

    def to_dict(self):
        return {
            "precision": self.precision,
            "defense": self.defense,
            "discriminator": self.discriminator,
            "scores": self.scores.tolist(),
            "membership": self.membership.tolist(),
        }

    def write_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def attack(grid, target_predict, dataset, split, seed, eps=0.001, mc_samples=5,
           eval_indices=None):
    """Point the selected discriminator at the target's balanced evaluation set.

    By default the evaluation set is the full target side (members plus
    non-members, balanced by construction).  ``eval_indices`` restricts it to
    a subset of dataset indices, which must still be balanced.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xA77AC)))
    if eval_indices is None:
        feats, members, _ = _balanced_feature_block(
            target_predict, dataset, split, "target", eps, mc_samples, rng
        )
    else:
        eval_indices = np.asarray(eval_indices)
        members = np.array(
            [membership_label(i, split, "target") for i in eval_indices],
            dtype=np.int64,
        )
        feats = extract_features(
            target_predict, dataset.inputs[eval_indices],
            dataset.labels[eval_indices], dataset.class_count,
            eps=eps, mc_samples=mc_samples, rng=rng,
        )
    if members.sum() * 2 != len(members):
        raise ValueError("attack evaluation set must be balanced")
    disc = grid.best
    precision = disc.accuracy(feats.matrix, members)
    return AttackOutcome(
        precision=precision,
        discriminator=dict(grid.best_entry),
        scores=disc.scores(feats.matrix),
        membership=members,
    )


def write_feature_csv(features, members, path):
    """CSV export: class_0..C-1, pred_0..C-1, sens_0..C-1, member."""
    c = features.prediction.shape[1]
    header = (
        [f"class_{i}" for i in range(c)]
        + [f"pred_{i}" for i in range(c)]
        + [f"sens_{i}" for i in range(c)]
        + ["member"]
    )
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row, m in zip(features.matrix, members):
            writer.writerow([repr(v) for v in row] + [int(m)])
