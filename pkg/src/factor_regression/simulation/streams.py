"""
Random streams. Everything random in a run descends from the root seed
through numpy.random.SeedSequence spawn keys:

    (SPLIT_KEY,)        the train/test split
    (CHAIN_KEY, i)      chain i

so a chain's stream depends only on the seed and its index, never on how
many chains run or in which process.
"""

import numpy

SPLIT_KEY = 0
CHAIN_KEY = 1


def split_stream(seed: int) -> numpy.random.Generator:
    """Stream used to choose the test observations."""
    return numpy.random.default_rng(numpy.random.SeedSequence(seed, spawn_key=(SPLIT_KEY,)))


def chain_stream(seed: int, index: int) -> numpy.random.Generator:
    """Stream of chain index."""
    return numpy.random.default_rng(
        numpy.random.SeedSequence(seed, spawn_key=(CHAIN_KEY, index))
    )
