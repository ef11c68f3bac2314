"""Sparse network training and membership-inference robustness toolkit.

Subpackages and modules:

* ``butterfly``: sparse butterfly supports, monotone chains, fast factorized
  matrix-vector products.
* ``nn``: layers with explicit gradients, optimizers, schedules, training.
* ``imp``: iterative magnitude pruning with best-epoch weight rewinding.
* ``mia``: shadow-model membership-inference attack and the defense metric.
* ``datasets``: synthetic generators, binary containers, augmentation.
* ``resnet20``: static parameter accounting against the reference network.
* ``experiment``: seeded pipelines, sweeps, reports, trade-off analysis.
* ``cli``: command-line interface (train / imp / attack / sweep / report / plot).
"""

from sparsemia import butterfly, datasets, experiment, imp, mia, nn, resnet20

__version__ = "0.1.0"

__all__ = ["butterfly", "datasets", "experiment", "imp", "mia", "nn",
           "resnet20", "__version__"]
