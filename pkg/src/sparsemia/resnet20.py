"""Static parameter accounting for ResNet-20 and its butterfly substitutions.

Pure arithmetic on layer shapes; nothing here builds or trains a network.
The counting convention is the one that reproduces the reference total of
272,474 parameters for the CIFAR-10 ResNet-20:

  * convolutions carry no bias (batchnorm follows every one),
  * every batchnorm contributes scale + shift (2 per channel),
  * the two downsampling blocks use 1x1 projection shortcuts, each followed
    by its own batchnorm,
  * the classifier head is a dense 64 -> 10 layer with bias.

Butterfly substitution replaces the (out_channels, in_channels * 9) kernel
matrix of every 3x3 convolution in the last ``segments`` stages by the
minimal-parameter monotone chain with ``depth`` factors.  The 1x1 projection
shortcuts, the stem convolution, batchnorms, and the head stay dense.
"""

from __future__ import annotations

from dataclasses import dataclass

from sparsemia.butterfly import select_min_param_chain

__all__ = ["ConvShape", "resnet20_shapes", "param_count", "butterfly_fraction"]

REFERENCE_TOTAL = 272_474


@dataclass(frozen=True)
class ConvShape:
    in_channels: int
    out_channels: int
    ksize: int
    stage: int  # 0 = stem, 1..3 = residual stages
    projection: bool = False  # 1x1 shortcut convolutions

    @property
    def weight_params(self):
        return self.out_channels * self.in_channels * self.ksize * self.ksize

    @property
    def matrix_shape(self):
        """Shape of the kernel-concatenation matrix used for factorization."""
        return self.out_channels, self.in_channels * self.ksize * self.ksize

    @property
    def bn_params(self):
        return 2 * self.out_channels


def resnet20_shapes():
    """All convolutions of CIFAR-10 ResNet-20, plus (head, bias) handled apart."""
    convs = [ConvShape(3, 16, 3, stage=0)]
    widths = {1: 16, 2: 32, 3: 64}
    for stage in (1, 2, 3):
        w = widths[stage]
        w_prev = widths.get(stage - 1, 16)
        for block in range(3):
            cin = w_prev if block == 0 and stage > 1 else w
            convs.append(ConvShape(cin, w, 3, stage=stage))
            convs.append(ConvShape(w, w, 3, stage=stage))
            if block == 0 and stage > 1:
                convs.append(ConvShape(w_prev, w, 1, stage=stage, projection=True))
    return convs


def param_count():
    """Total trainable parameters of dense ResNet-20 (expected 272,474)."""
    convs = resnet20_shapes()
    total = sum(c.weight_params + c.bn_params for c in convs)
    total += 64 * 10 + 10  # classifier head with bias
    return total


def butterfly_fraction(segments, depth):
    """Percent of the dense parameter count after butterfly substitution.

    ``segments`` is the number of final stages substituted (1..3) and
    ``depth`` the number of factors per chain (2 or 3).
    """
    if segments not in (0, 1, 2, 3):
        raise ValueError(f"segments must be in 0..3, got {segments}")
    if segments and depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    dense_total = param_count()
    substituted_stages = set(range(4 - segments, 4))
    total = 0
    for conv in resnet20_shapes():
        total += conv.bn_params
        if conv.stage in substituted_stages and not conv.projection:
            m, n = conv.matrix_shape
            total += select_min_param_chain(m, n, depth).param_count
        else:
            total += conv.weight_params
    total += 64 * 10 + 10
    return 100.0 * total / dense_total
