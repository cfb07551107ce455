"""Labeled random streams derived from one integer seed."""

import zlib

import numpy as np


def derive_seed(seed: int, label: str, *index: int) -> np.random.SeedSequence:
    """Child stream of ``seed`` for ``label`` (``"generation"``, ``"chain"``,
    ``"evaluation"``, ...) and optional integer indices."""
    return np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(label.encode()), *map(int, index)))


def rng_for(seed: int, label: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label, *index))
