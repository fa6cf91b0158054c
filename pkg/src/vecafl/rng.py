"""Deterministic random-stream derivation.

Every stochastic component of the simulation pulls from its own named
substream so that runs are reproducible bit for bit and the environment
realisation (channels, compute draws, data partition) is identical across
schemes that share a seed, no matter which vehicles each scheme selects.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    # crc32 keeps string tags stable across interpreter runs (hash() is salted)
    return zlib.crc32(str(tag).encode("utf-8"))


def substream(seed: int, *tags) -> np.random.Generator:
    """Derive an independent generator from a root seed and a tag path.

    Distinct tag paths give statistically independent streams; the same
    (seed, tags) pair always gives the same stream.
    """
    entropy = [int(seed) & _MASK64] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
