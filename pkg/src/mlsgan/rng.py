"""Named random streams derived from one root seed."""

import numpy as np

STREAMS = {"data": 1, "init": 2, "z": 3, "shuffle": 4, "split": 5, "probe": 6, "inference": 7}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for sub-stream ``name``; ``extra`` (e.g. an epoch) refines it."""
    return np.random.default_rng([int(seed), STREAMS[name], *map(int, extra)])
