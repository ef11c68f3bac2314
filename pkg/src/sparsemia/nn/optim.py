"""SGD with momentum, Adam, and the step-drop learning-rate schedule."""

from __future__ import annotations

import numpy as np

__all__ = ["SGD", "Adam", "lr_at_epoch"]


class SGD:
    """Stochastic gradient descent with classical (non-Nesterov) momentum.

    Weight decay is coupled by default: v <- mu*v + (g + wd*w); w <- w - lr*v.
    With ``decoupled=True`` the decay term is applied directly to the weights
    instead of entering the momentum buffer.  Masked entries are forced back
    to exact zero after every step.
    """

    def __init__(self, params, momentum=0.9, weight_decay=0.0, nesterov=False,
                 decoupled=False, decay_norm_and_bias=True):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.nesterov = nesterov
        self.decoupled = decoupled
        self.decay_norm_and_bias = decay_norm_and_bias
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def _decays(self, p):
        if self.weight_decay == 0.0:
            return False
        return p.decay or self.decay_norm_and_bias

    def step(self, lr):
        for p, v in zip(self.params, self.velocity):
            g = p.grad
            if self._decays(p) and not self.decoupled:
                g = g + self.weight_decay * p.value
            v *= self.momentum
            v += g
            step = g + self.momentum * v if self.nesterov else v
            p.value -= lr * step
            if self._decays(p) and self.decoupled:
                p.value -= lr * self.weight_decay * p.value
            p.apply_mask()


class Adam:
    """Adam with bias correction; defaults beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p.value -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.apply_mask()


def lr_at_epoch(config, epoch):
    """Initial LR divided by drop_factor at each drop point.

    Drop points are fractions of the total epoch count; a drop at fraction f
    takes effect from epoch floor(f * epochs) onward.
    """
    drops = sum(1 for f in config.lr_drop_points if epoch >= int(f * config.epochs))
    return config.initial_lr / config.lr_drop_factor ** drops
