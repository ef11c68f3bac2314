"""Iterative magnitude pruning: train, rewind, prune, retrain.

Shows the survivor-count recurrence, the nested masks, and how validation
accuracy evolves as the network loses 20% of its surviving weights per round.
"""

import numpy as np

from sparsemia import datasets, imp
from sparsemia.nn import TrainConfig, models
from sparsemia.nn.network import accuracy, count_params

rng_seed = 0
data = datasets.make_synthetic("blobs", 1200, 4, noise=1.2, seed=rng_seed, dim=4)
train_set = data.subset(np.arange(900))
val_set = data.subset(np.arange(900, 1200))

net = models.mlp(4, [32, 32], 4, rng=np.random.default_rng(rng_seed))
total, _ = count_params(net)
print(f"dense model: {total} parameters")

config = TrainConfig(epochs=30, batch_size=64, initial_lr=0.05, seed=rng_seed)
schedule = imp.ImpSchedule(rounds=6, prune_fraction=0.2)

# the exact survivor trajectory is fixed before any training happens
prunable = sum(p.size for p in net.params() if p.prunable)
counts = imp.survivor_counts(prunable, schedule.rounds, schedule.prune_fraction)
print("predicted survivor counts:", counts)

results = imp.imp_run(net, train_set, val_set, config, schedule)

print(f"\n{'round':>5} {'nonzero %':>10} {'val accuracy':>13}")
for k, (fraction, model) in enumerate(results):
    print(f"{k:>5} {100 * fraction:>9.1f}% {model.best_val_accuracy:>12.1f}%")

# pruned weights are exactly zero in the final network
weights = [p for p in net.params() if p.prunable]
all_zero = all(np.all(p.value[p.mask == 0] == 0.0) for p in weights if p.mask is not None)
print(f"\npruned weights bitwise zero: {all_zero}")
print(f"final nonzero fraction matches recurrence: "
      f"{np.isclose(results[-1][0], counts[-1] / prunable)}")
