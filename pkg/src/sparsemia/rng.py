"""Deterministic named random streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["seed_stream"]


def seed_stream(master_seed, label):
    """Independent generator for (master_seed, label); stable across runs."""
    tag = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), tag)))
