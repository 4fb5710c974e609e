"""Seed -> random stream mapping.

Every stream is ``numpy.random.Generator(PCG64(SeedSequence(entropy=seed, spawn_key=key)))``.
The key is ``()`` for a single path, ``(block,)`` for block ``block`` of an
ensemble, and ``(block, tag)`` when a block needs several independent streams.
The mapping depends only on (seed, key), so results do not depend on the
number of worker threads.
"""

import numpy as np

# ensembles are simulated in blocks of this many paths, one stream per block
BLOCK_SIZE = 1024


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(n_paths: int, block_size: int = BLOCK_SIZE):
    """Yield (block_index, start, stop) covering range(n_paths)."""
    for i, start in enumerate(range(0, n_paths, block_size)):
        yield i, start, min(start + block_size, n_paths)
