"""Model builders for the desk-scale benchmarks."""

from __future__ import annotations

import numpy as np

from sparsemia.butterfly import select_min_param_chain
from sparsemia.nn import layers as L
from sparsemia.nn.network import Network

__all__ = ["mlp", "butterfly_mlp", "small_convnet"]


def mlp(input_dim, hidden, classes, rng=None, batchnorm=False):
    """Plain MLP with ReLU hidden layers; ``hidden`` is a width sequence."""
    rng = rng or np.random.default_rng(0)
    layers = []
    dims = [input_dim] + list(hidden)
    for a, b in zip(dims, dims[1:]):
        layers.append(L.Dense(a, b, rng=rng))
        if batchnorm:
            layers.append(L.BatchNorm(b))
        layers.append(L.ReLU())
    layers.append(L.Dense(dims[-1], classes, rng=rng))
    return Network(layers)


def butterfly_mlp(input_dim, hidden, classes, segments, depth, rng=None):
    """MLP whose last ``segments`` hidden weight matrices are butterfly chains.

    Mirrors substituting the final segments of a convolutional net: the first
    layer (and the classifier head) stay dense, the selected hidden layers
    are replaced by minimal monotone chains with ``depth`` factors.
    """
    rng = rng or np.random.default_rng(0)
    dims = [input_dim] + list(hidden)
    n_hidden = len(dims) - 1
    substitutable = n_hidden - 1  # layer 0 (the stem) is never substituted
    if not 1 <= segments <= substitutable:
        raise ValueError(
            f"{n_hidden} hidden layers support 1..{substitutable} butterfly "
            f"segments, got {segments}"
        )
    first_butterfly = n_hidden - segments
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        if i >= first_butterfly:
            chain = select_min_param_chain(b, a, depth)
            layers.append(L.ButterflyLinear(chain, rng=rng))
        else:
            layers.append(L.Dense(a, b, rng=rng))
        layers.append(L.ReLU())
    layers.append(L.Dense(dims[-1], classes, rng=rng))
    return Network(layers)


def small_convnet(in_channels, classes, rng=None, width=8, image_size=8):
    """Tiny conv-bn-relu-pool network for gradient and pipeline tests."""
    rng = rng or np.random.default_rng(0)
    flat = width * 2 * (image_size // 4) ** 2
    return Network([
        L.Conv2d(in_channels, width, 3, padding=1, rng=rng),
        L.BatchNorm(width),
        L.ReLU(),
        L.AvgPool2d(2),
        L.Conv2d(width, width * 2, 3, padding=1, rng=rng),
        L.ReLU(),
        L.AvgPool2d(2),
        L.Flatten(),
        L.Dense(flat, classes, rng=rng),
    ])
