"""Labeled derivation of independent random streams from one master seed."""
from __future__ import annotations

import zlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(seed: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & ((1 << 64) - 1),
        spawn_key=tuple(_label_key(lab) for lab in labels),
    )


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named by ``labels`` under ``seed``.

    The same ``(seed, labels)`` always yields the same stream, and distinct
    labels yield statistically independent streams.
    """
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *labels)))


def derive_int(seed: int, *labels) -> int:
    """A 63-bit integer seed for a child computation."""
    return int(derive_seed(seed, *labels).generate_state(1, np.uint64)[0] >> np.uint64(1))
