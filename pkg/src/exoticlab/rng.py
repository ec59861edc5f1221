"""Deterministic named RNG substreams.

All randomness in the library flows from one master seed through
``substream(seed, *tags)``. Tags are small ints or short strings; strings are
hashed with crc32 so a stream's identity is stable across runs and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag) & 0xFFFFFFFF


def substream(seed: int, *tags: int | str) -> np.random.Generator:
    """Generator for the named substream (seed, tags...)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
