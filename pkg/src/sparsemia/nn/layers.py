"""Layers with explicit forward/backward passes on float64 numpy arrays.

Convolutions are evaluated as matrix products on unfolded patches (im2col),
so a butterfly convolution is just a butterfly linear map applied to the
patch matrix: the factorized matrix stands in for the (out_channels,
in_channels * kh * kw) kernel-concatenation matrix.

Masked layers keep pruned weights at exactly 0: the mask zeroes the weight
gradient, and the optimizer re-applies the mask after every update.
"""

from __future__ import annotations

import numpy as np

from sparsemia.butterfly import (
    FactorizedMatrix,
    apply_factor,
    apply_factor_transpose,
)

__all__ = [
    "Parameter",
    "init_uniform",
    "Dense",
    "Conv2d",
    "ButterflyLinear",
    "ButterflyConv2d",
    "BatchNorm",
    "ReLU",
    "AvgPool2d",
    "Flatten",
    "im2col",
    "col2im",
]


class Parameter:
    """A trainable array with its gradient and optional pruning mask."""

    def __init__(self, value, name="", prunable=False, decay=True, mask=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.prunable = prunable
        self.decay = decay
        self.mask = mask  # uint8 array congruent with value, or None

    @property
    def size(self):
        return self.value.size

    def set_mask(self, mask):
        mask = np.asarray(mask, dtype=np.uint8)
        if mask.shape != self.value.shape:
            raise ValueError(f"mask shape {mask.shape} != value shape {self.value.shape}")
        self.mask = mask
        self.value[mask == 0] = 0.0

    def apply_mask(self):
        if self.mask is not None:
            self.value[self.mask == 0] = 0.0

    def mask_grad(self):
        if self.mask is not None:
            self.grad[self.mask == 0] = 0.0


def init_uniform(shape, fan_in, rng):
    """I.i.d. uniform samples on (-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def params(self):
        return []

    def manifest(self):
        raise NotImplementedError

    @property
    def kind(self):
        raise NotImplementedError


class Dense(Layer):
    """y = x W^T + b with W of shape (out_features, in_features)."""

    def __init__(self, in_features, out_features, rng=None, bias=True):
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng(0)
        self.weight = Parameter(
            init_uniform((out_features, in_features), in_features, rng),
            name="weight", prunable=True,
        )
        self.bias = None
        if bias:
            self.bias = Parameter(
                init_uniform((out_features,), in_features, rng),
                name="bias", decay=False,
            )
        self._x = None

    @property
    def kind(self):
        return "masked_dense" if self.weight.mask is not None else "dense"

    def forward(self, x, training=False):
        self._x = x
        y = x @ self.weight.value.T
        if self.bias is not None:
            y = y + self.bias.value
        return y

    def backward(self, grad):
        self.weight.grad += grad.T @ self._x
        self.weight.mask_grad()
        if self.bias is not None:
            self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value

    def params(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def manifest(self):
        return {
            "kind": "dense",
            "in_features": self.in_features,
            "out_features": self.out_features,
            "bias": self.bias is not None,
        }


def im2col(x, kh, kw, stride, padding):
    """Unfold (N, C, H, W) into patch rows of shape (N*OH*OW, C*kh*kw)."""
    n, c, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), (oh, ow)


def col2im(cols, x_shape, kh, kw, stride, padding):
    """Adjoint of im2col: scatter patch-row gradients back onto the input."""
    n, c, h, w = x_shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    cols = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            img[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    if padding:
        img = img[:, :, padding:padding + h, padding:padding + w]
    return img


class Conv2d(Layer):
    """2D convolution on (N, C, H, W) realized as a patch-matrix product."""

    def __init__(self, in_channels, out_channels, ksize, stride=1, padding=0,
                 rng=None, bias=True):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.ksize = ksize
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * ksize * ksize
        self.weight = Parameter(
            init_uniform((out_channels, in_channels, ksize, ksize), fan_in, rng),
            name="weight", prunable=True,
        )
        self.bias = None
        if bias:
            self.bias = Parameter(init_uniform((out_channels,), fan_in, rng),
                                  name="bias", decay=False)
        self._cols = None
        self._x_shape = None
        self._out_hw = None

    @property
    def kind(self):
        return "masked_conv" if self.weight.mask is not None else "conv2d"

    def forward(self, x, training=False):
        self._x_shape = x.shape
        cols, (oh, ow) = im2col(x, self.ksize, self.ksize, self.stride, self.padding)
        self._cols = cols
        self._out_hw = (oh, ow)
        wmat = self.weight.value.reshape(self.out_channels, -1)
        y = cols @ wmat.T
        if self.bias is not None:
            y = y + self.bias.value
        n = x.shape[0]
        return y.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        n = grad.shape[0]
        oh, ow = self._out_hw
        gmat = grad.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)
        self.weight.grad += (gmat.T @ self._cols).reshape(self.weight.value.shape)
        self.weight.mask_grad()
        if self.bias is not None:
            self.bias.grad += gmat.sum(axis=0)
        dcols = gmat @ self.weight.value.reshape(self.out_channels, -1)
        return col2im(dcols, self._x_shape, self.ksize, self.ksize,
                      self.stride, self.padding)

    def params(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def manifest(self):
        return {
            "kind": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "ksize": self.ksize,
            "stride": self.stride,
            "padding": self.padding,
            "bias": self.bias is not None,
        }


class _ButterflyCore:
    """Shared factor bookkeeping for butterfly layers.

    Only the stored nonzero values of each factor are trainable.  Each factor
    is initialized uniform on (-1/sqrt(s), 1/sqrt(s)) where s is its nonzeros
    per row, the per-factor analogue of fan-in scaling.
    """

    def __init__(self, chain, rng):
        values = []
        for (p, r, s, q) in chain.factor_specs:
            bound = 1.0 / np.sqrt(s)
            values.append(rng.uniform(-bound, bound, size=p * r * s * q))
        self.fm = FactorizedMatrix(chain, values)
        self.factors = [
            Parameter(v, name=f"factor{l}", prunable=False)
            for l, v in enumerate(self.fm.factor_values)
        ]
        # parameters own the storage; keep fm views in sync
        self.fm.factor_values = [p.value for p in self.factors]
        self._inputs = None

    def apply(self, x):
        """Chain product on the last axis of x; caches factor inputs for backward."""
        blocks = self.fm.value_blocks()
        inputs = [None] * len(blocks)
        t = x
        for l in range(len(blocks) - 1, -1, -1):
            inputs[l] = t
            t = apply_factor(blocks[l], t)
        self._inputs = inputs
        return t

    def apply_grad(self, grad):
        """Accumulates factor gradients, returns gradient w.r.t. the input."""
        blocks = self.fm.value_blocks()
        g = grad
        for l, block in enumerate(blocks):
            p, r, q, s = block.shape
            t_in = self._inputs[l]
            g4 = g.reshape((-1, p, r, q))
            x4 = t_in.reshape((-1, p, s, q))
            dv = np.einsum("nabc,nadc->abcd", g4, x4)
            self.factors[l].grad += dv.reshape(-1)
            g = apply_factor_transpose(block, g)
        return g


class ButterflyLinear(Layer):
    """Linear layer whose weight matrix is a product of butterfly factors."""

    def __init__(self, chain, rng=None, bias=True):
        rng = rng or np.random.default_rng(0)
        self.core = _ButterflyCore(chain, rng)
        m, n = chain.shape
        self.out_features, self.in_features = m, n
        self.bias = None
        if bias:
            self.bias = Parameter(init_uniform((m,), n, rng), name="bias", decay=False)

    @property
    def kind(self):
        return "butterfly_linear"

    @property
    def chain(self):
        return self.core.fm.chain

    def forward(self, x, training=False):
        y = self.core.apply(x)
        if self.bias is not None:
            y = y + self.bias.value
        return y

    def backward(self, grad):
        if self.bias is not None:
            self.bias.grad += grad.sum(axis=0)
        return self.core.apply_grad(grad)

    def params(self):
        return self.core.factors + ([self.bias] if self.bias is not None else [])

    def manifest(self):
        return {
            "kind": "butterfly_linear",
            "chain": [list(spec) for spec in self.chain.factor_specs],
            "bias": self.bias is not None,
        }


class ButterflyConv2d(Layer):
    """Convolution whose kernel-concatenation matrix is butterfly-factorized."""

    def __init__(self, chain, in_channels, out_channels, ksize, stride=1,
                 padding=0, rng=None, bias=True):
        m, n = chain.shape
        if m != out_channels or n != in_channels * ksize * ksize:
            raise ValueError(
                f"chain shape {chain.shape} does not match conv matrix "
                f"({out_channels}, {in_channels * ksize * ksize})"
            )
        rng = rng or np.random.default_rng(0)
        self.core = _ButterflyCore(chain, rng)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.ksize = ksize
        self.stride = stride
        self.padding = padding
        self.bias = None
        if bias:
            self.bias = Parameter(init_uniform((out_channels,), n, rng),
                                  name="bias", decay=False)
        self._x_shape = None
        self._out_hw = None

    @property
    def kind(self):
        return "butterfly_conv"

    @property
    def chain(self):
        return self.core.fm.chain

    def forward(self, x, training=False):
        self._x_shape = x.shape
        cols, (oh, ow) = im2col(x, self.ksize, self.ksize, self.stride, self.padding)
        self._out_hw = (oh, ow)
        y = self.core.apply(cols)
        if self.bias is not None:
            y = y + self.bias.value
        n = x.shape[0]
        return y.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        n = grad.shape[0]
        oh, ow = self._out_hw
        gmat = grad.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)
        if self.bias is not None:
            self.bias.grad += gmat.sum(axis=0)
        dcols = self.core.apply_grad(gmat)
        return col2im(dcols, self._x_shape, self.ksize, self.ksize,
                      self.stride, self.padding)

    def params(self):
        return self.core.factors + ([self.bias] if self.bias is not None else [])

    def manifest(self):
        return {
            "kind": "butterfly_conv",
            "chain": [list(spec) for spec in self.chain.factor_specs],
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "ksize": self.ksize,
            "stride": self.stride,
            "padding": self.padding,
            "bias": self.bias is not None,
        }


class BatchNorm(Layer):
    """Batch normalization over (N,) for 2D inputs or (N, H, W) for 4D inputs."""

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(num_features), name="gamma", decay=False)
        self.beta = Parameter(np.zeros(num_features), name="beta", decay=False)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self._cache = None

    @property
    def kind(self):
        return "batchnorm"

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _reshape(self, v, ndim):
        return v if ndim == 2 else v.reshape(1, -1, 1, 1)

    def forward(self, x, training=False):
        axes = self._axes(x)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._reshape(mean, x.ndim)) * self._reshape(inv_std, x.ndim)
        self._cache = (xhat, inv_std, axes, x.ndim, training)
        return self._reshape(self.gamma.value, x.ndim) * xhat + self._reshape(self.beta.value, x.ndim)

    def backward(self, grad):
        xhat, inv_std, axes, ndim, training = self._cache
        self.gamma.grad += (grad * xhat).sum(axis=axes)
        self.beta.grad += grad.sum(axis=axes)
        gscaled = grad * self._reshape(self.gamma.value, ndim)
        if not training:
            return gscaled * self._reshape(inv_std, ndim)
        count = np.prod([xhat.shape[a] for a in axes])
        term = (
            gscaled
            - self._reshape(gscaled.sum(axis=axes) / count, ndim)
            - xhat * self._reshape((gscaled * xhat).sum(axis=axes) / count, ndim)
        )
        return term * self._reshape(inv_std, ndim)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def manifest(self):
        return {"kind": "batchnorm", "num_features": self.num_features,
                "momentum": self.momentum, "eps": self.eps}


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    @property
    def kind(self):
        return "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)

    def manifest(self):
        return {"kind": "relu"}


class AvgPool2d(Layer):
    """Non-overlapping average pooling with a square window."""

    def __init__(self, window):
        self.window = window
        self._x_shape = None

    @property
    def kind(self):
        return "avgpool"

    def forward(self, x, training=False):
        n, c, h, w = x.shape
        k = self.window
        if h % k or w % k:
            raise ValueError(f"input {h}x{w} not divisible by window {k}")
        self._x_shape = x.shape
        return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(self, grad):
        n, c, h, w = self._x_shape
        k = self.window
        g = grad[:, :, :, None, :, None] / (k * k)
        return np.broadcast_to(g, (n, c, h // k, k, w // k, k)).reshape(n, c, h, w)

    def manifest(self):
        return {"kind": "avgpool", "window": self.window}


class Flatten(Layer):
    def __init__(self):
        self._x_shape = None

    @property
    def kind(self):
        return "flatten"

    def forward(self, x, training=False):
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._x_shape)

    def manifest(self):
        return {"kind": "flatten"}
