"""Counter-based random substreams.

A stream is identified by a seed plus a tuple of non-negative integer keys
(species index, block index, sample index, ...). Streams are built from
``numpy.random.SeedSequence`` spawn keys feeding a Philox generator, so the
numbers drawn for a given key never depend on how work is split across
workers.
"""

from __future__ import annotations

import numpy as np

# Fixed block size for particle sampling; results depend on it, worker counts do not.
BLOCK = 65536


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
