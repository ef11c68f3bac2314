from sparsemia.nn.layers import (
    AvgPool2d,
    BatchNorm,
    ButterflyConv2d,
    ButterflyLinear,
    Conv2d,
    Dense,
    Flatten,
    Parameter,
    ReLU,
    init_uniform,
)
from sparsemia.nn.network import (
    Network,
    accuracy,
    count_params,
    cross_entropy,
    cross_entropy_grad,
    softmax,
)
from sparsemia.nn.optim import SGD, Adam, lr_at_epoch
from sparsemia.nn.train import TrainConfig, TrainedModel, train
from sparsemia.nn.checkpoint import load_network, save_network
from sparsemia.nn import models

__all__ = [
    "AvgPool2d", "BatchNorm", "ButterflyConv2d", "ButterflyLinear", "Conv2d",
    "Dense", "Flatten", "Parameter", "ReLU", "init_uniform",
    "Network", "accuracy", "count_params", "cross_entropy",
    "cross_entropy_grad", "softmax",
    "SGD", "Adam", "lr_at_epoch",
    "TrainConfig", "TrainedModel", "train",
    "load_network", "save_network",
    "models",
]
