"""Deterministic RNG seed derivation.

All randomness in the package flows from numpy ``SeedSequence`` objects so
that experiments are reproducible bit-for-bit: a master seed plus a path of
tags (stage names, loop indices) always yields the same child sequence, no
matter in which order or on how many workers the children are consumed.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def as_seedseq(seed: SeedLike) -> np.random.SeedSequence:
    """Coerce an int or SeedSequence into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _tag_value(tag: Union[int, str]) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"seed tag must be non-negative, got {tag}")
        return int(tag)
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    raise TypeError(f"seed tag must be int or str, got {type(tag).__name__}")


def derive(seed: SeedLike, *tags: Union[int, str]) -> np.random.SeedSequence:
    """Derive a child SeedSequence identified by a path of tags.

    String tags are mapped through CRC-32 so the derivation is stable across
    processes and platforms.
    """
    base = as_seedseq(seed)
    key = tuple(base.spawn_key) + tuple(_tag_value(t) for t in tags)
    return np.random.SeedSequence(entropy=base.entropy, spawn_key=key)
