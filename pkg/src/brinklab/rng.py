"""Counter-based splittable random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by ``(master_seed, *path)``.  Philox is counter-based, so streams derived
from distinct paths are statistically independent and the derivation is
order-insensitive: replicate k of an experiment always sees the same stream
no matter how many workers run or in which order replicates complete.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the generator for a (master seed, sub-stream path) pair.

    ``stream(s)`` is the root stream; ``stream(s, k)`` is replicate k's
    stream; deeper paths (``stream(s, k, j)``) split further.  Identical
    arguments always produce the identical bit stream.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))
