"""Counter-based random streams split deterministically by block index."""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "block_streams"]


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for ``(seed, key...)``; independent of call order."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def block_streams(seed: int, n_blocks: int, tag: int = 0):
    """One generator per replica block, keyed by ``(tag, block)``."""
    return [stream(seed, tag, b) for b in range(n_blocks)]
