import zlib

import numpy as np


def substream_seed(seed: int, name: str) -> np.random.SeedSequence:
    """Seed sequence for the named sub-stream of a master seed; stable across runs and platforms."""
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, name))
