"""Named, reproducible random substreams derived from one master seed."""

import zlib

import numpy as np

DEFAULT_SEED = 42


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; same (seed, name) gives the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
