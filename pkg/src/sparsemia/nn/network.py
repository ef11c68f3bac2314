"""Network container: a layer stack with shared parameter bookkeeping."""

from __future__ import annotations

import numpy as np


__all__ = ["Network", "softmax", "cross_entropy", "cross_entropy_grad",
           "accuracy", "count_params"]


class Network:
    def __init__(self, layer_list):
        self.layers = list(layer_list)

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grads(self):
        for p in self.params():
            p.grad[...] = 0.0

    def buffers(self):
        out = []
        for layer in self.layers:
            if hasattr(layer, "buffers"):
                out.extend(layer.buffers())
        return out

    def get_state(self):
        """Copies of all parameter values, masks, and buffers (a checkpoint)."""
        return {
            "params": [p.value.copy() for p in self.params()],
            "masks": [None if p.mask is None else p.mask.copy() for p in self.params()],
            "buffers": [b.copy() for b in self.buffers()],
        }

    def set_state(self, state):
        params = self.params()
        if len(state["params"]) != len(params):
            raise ValueError("state does not match network parameter list")
        for p, v, m in zip(params, state["params"], state["masks"]):
            p.value[...] = v
            p.mask = None if m is None else m.copy()
        for buf, v in zip(self.buffers(), state["buffers"]):
            buf[...] = v

    def predict_proba(self, x):
        """Black-box prediction: softmax probabilities in eval mode."""
        return softmax(self.forward(np.asarray(x, dtype=np.float64), training=False))

    def predictor(self):
        """A plain callable x -> probabilities, hiding everything else."""
        return self.predict_proba

    def manifest(self):
        return [layer.manifest() for layer in self.layers]


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean negative log-softmax of the true class."""
    labels = np.asarray(labels)
    c = logits.shape[-1]
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return -log_probs[np.arange(len(labels)), labels].mean()


def cross_entropy_grad(logits, labels):
    """Gradient of mean cross-entropy w.r.t. the logits."""
    n = logits.shape[0]
    g = softmax(logits)
    g[np.arange(n), np.asarray(labels)] -= 1.0
    return g / n


def accuracy(network, dataset, batch_size=512):
    """Percent of samples whose argmax prediction (lowest index on ties) is correct."""
    inputs, labels = dataset.inputs, dataset.labels
    correct = 0
    for start in range(0, len(labels), batch_size):
        logits = network.forward(inputs[start:start + batch_size], training=False)
        correct += int((np.argmax(logits, axis=-1) == labels[start:start + batch_size]).sum())
    return 100.0 * correct / len(labels)


def count_params(network):
    """(total, nonzero) over all trainable parameters."""
    total = sum(p.size for p in network.params())
    nonzero = sum(int(np.count_nonzero(p.value)) for p in network.params())
    return total, nonzero
