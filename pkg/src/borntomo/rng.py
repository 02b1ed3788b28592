"""Deterministic random-stream derivation.

Every stochastic component (initialization, sampling, batching, trials)
draws from its own counter-based stream derived from a master seed plus
string tags, so independent jobs are reproducible and order-independent.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed_words(master: int, *tags: object) -> list[int]:
    """Hash (master, tags) into spawn words for a SeedSequence."""
    text = repr(tuple(str(t) for t in tags)).encode("utf-8")
    digest = hashlib.blake2b(text, digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return [int(master) & 0xFFFFFFFFFFFFFFFF, *words]


def derive_rng(master: int, *tags: object) -> np.random.Generator:
    """Independent Philox stream for (master seed, purpose tags)."""
    ss = np.random.SeedSequence(derive_seed_words(master, *tags))
    return np.random.Generator(np.random.Philox(ss))
