"""Deterministic named randomness substreams.

Every random decision in the pipeline draws from a generator derived from
one global seed plus a path of labels, e.g. ``substream(seed, "gan", rp_id)``.
Paths hash identically across runs, platforms and processes, so per-RP work
can fan out to workers without losing reproducibility.
"""

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, (float, np.floating)):
        return int.from_bytes(struct.pack("<d", float(part)), "little")
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "little")
    raise TypeError(f"unsupported substream path element: {part!r}")


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for the substream named by ``path`` under ``seed``."""
    entropy = [_encode(seed)] + [_encode(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
