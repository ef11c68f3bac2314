"""Iterative magnitude pruning with best-validation-epoch weight rewinding.

One IMP round: train, rewind every weight to its value at the epoch of best
validation accuracy, prune the smallest-magnitude surviving weights, then
retrain the survivors (pruned weights are masked and never move again).
Pruning is global across all prunable tensors by default; biases and
batchnorm parameters are never prunable.

Survivor counts follow the exact integer recurrence
``n_next = n - floor(fraction * n)``, which tracks ``0.8**k`` for the
default fraction of 0.2.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from sparsemia.nn.checkpoint import save_network
from sparsemia.nn.train import train

__all__ = [
    "ImpSchedule",
    "magnitude_prune",
    "rewind",
    "imp_run",
    "survivor_counts",
    "save_masks",
    "load_masks",
]


@dataclass
class ImpSchedule:
    rounds: int = 24
    prune_fraction: float = 0.2
    scope: str = "global"  # or "layer"
    prune_biases: bool = False

    def __post_init__(self):
        if not 0.0 < self.prune_fraction < 1.0:
            raise ValueError(f"prune fraction must be in (0, 1), got {self.prune_fraction}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.scope not in ("global", "layer"):
            raise ValueError(f"scope must be 'global' or 'layer', got {self.scope!r}")


def survivor_counts(n0, rounds, fraction=0.2):
    """Exact survivor-count sequence [n0, n1, ...] of the floor recurrence."""
    counts = [n0]
    for _ in range(rounds):
        n = counts[-1]
        counts.append(n - int(np.floor(fraction * n)))
    return counts


def _prunable(params, schedule):
    return [p for p in params
            if p.prunable or (schedule.prune_biases and p.name == "bias")]


def magnitude_prune(params, fraction, scope="global"):
    """New masks removing the smallest-magnitude surviving weights.

    Prunes ``floor(fraction * surviving)`` weights, globally across all given
    parameters or per tensor.  Ties at the magnitude cut are broken by flat
    index (parameters in list order, entries row-major), so the result is
    deterministic.  The new mask is always a subset of the old one.  Raises
    if pruning would leave no surviving weight.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if scope == "layer":
        return [magnitude_prune([p], fraction, scope="global")[0] for p in params]

    old_masks = [
        p.mask.copy() if p.mask is not None else np.ones(p.value.shape, dtype=np.uint8)
        for p in params
    ]
    live = np.concatenate([m.ravel().astype(bool) for m in old_masks])
    magnitudes = np.concatenate([np.abs(p.value).ravel() for p in params])
    live_idx = np.flatnonzero(live)
    n_live = live_idx.size
    k = int(np.floor(fraction * n_live))
    if k >= n_live:
        raise ValueError("pruning would remove every surviving weight")
    order = np.argsort(magnitudes[live_idx], kind="stable")
    pruned = live_idx[order[:k]]
    live[pruned] = False

    new_masks = []
    offset = 0
    for p, old in zip(params, old_masks):
        bits = live[offset:offset + p.size].reshape(p.value.shape).astype(np.uint8)
        offset += p.size
        new_masks.append(bits & old)
    return new_masks


def rewind(network, checkpoint_state, masks=None, schedule=None):
    """Restore checkpoint weights, then impose masks (masked weights become 0).

    With no masks this is exactly the checkpoint; rewinding twice equals
    rewinding once.
    """
    network.set_state(checkpoint_state)
    if masks is not None:
        targets = _prunable(network.params(), schedule or ImpSchedule())
        if len(targets) != len(masks):
            raise ValueError(f"{len(masks)} masks for {len(targets)} prunable tensors")
        for p, m in zip(targets, masks):
            p.set_mask(m)
    return network


def prunable_fraction(network, schedule=None):
    """Nonzero fraction over the prunable tensors (the 0.8**k trajectory)."""
    params = _prunable(network.params(), schedule or ImpSchedule())
    total = sum(p.size for p in params)
    nonzero = sum(int(np.count_nonzero(p.value)) for p in params)
    return nonzero / total


def imp_run(network, train_set, val_set, config, schedule, out_dir=None,
            augment_fn=None):
    """Run the full prune/rewind/retrain cycle.

    Returns a list of (nonzero_fraction, TrainedModel), one entry per round
    including the initial dense round.  After each round the network holds
    the best-validation checkpoint of that round.  When ``out_dir`` is given,
    emits per-round checkpoint and mask files plus a summary CSV.
    """
    results = []
    rows = []
    for round_idx in range(schedule.rounds + 1):
        model = train(network, train_set, val_set, config, augment_fn=augment_fn)
        model.restore_best()
        fraction = prunable_fraction(network, schedule)
        results.append((fraction, model))
        rows.append((round_idx, fraction, model.best_val_accuracy))
        if out_dir is not None:
            save_network(network, os.path.join(out_dir, f"round_{round_idx:02d}.ckpt"))
            masks_now = [
                p.mask if p.mask is not None else np.ones(p.value.shape, dtype=np.uint8)
                for p in _prunable(network.params(), schedule)
            ]
            save_masks(masks_now, os.path.join(out_dir, f"round_{round_idx:02d}.mask"))
        if round_idx == schedule.rounds:
            break
        targets = _prunable(network.params(), schedule)
        new_masks = magnitude_prune(targets, schedule.prune_fraction, scope=schedule.scope)
        rewind(network, model.best_state, masks=new_masks, schedule=schedule)
    if out_dir is not None:
        with open(os.path.join(out_dir, "imp_summary.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["round", "sparsity", "val_accuracy"])
            writer.writerows(rows)
    return results


_MASK_MAGIC = b"MASK"
_MASK_VERSION = 1


def save_masks(masks, path):
    """Bit-packed mask container: magic, version, tensor count, shapes, bits."""
    out = [_MASK_MAGIC, struct.pack("<II", _MASK_VERSION, len(masks))]
    for m in masks:
        m = np.ascontiguousarray(m, dtype=np.uint8)
        out.append(struct.pack("<B", m.ndim))
        out.append(struct.pack(f"<{m.ndim}I", *m.shape))
        out.append(np.packbits(m.ravel()).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(out))


def load_masks(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MASK_MAGIC:
        raise ValueError("not a mask container (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != _MASK_VERSION:
        raise ValueError(f"unsupported mask container version {version}")
    offset = 12
    masks = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        size = int(np.prod(shape))
        nbytes = (size + 7) // 8
        if offset + nbytes > len(data):
            raise ValueError("truncated mask container")
        bits = np.unpackbits(
            np.frombuffer(data[offset:offset + nbytes], dtype=np.uint8), count=size
        )
        offset += nbytes
        masks.append(bits.reshape(shape).astype(np.uint8))
    return masks
