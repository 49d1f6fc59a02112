"""Counter-based random streams keyed by path block.

Paths are grouped in fixed-size blocks; block ``j`` draws from a Philox
generator whose key is derived from ``(seed, j)``. A block's numbers never
depend on which other blocks were drawn or in what order, so a path set is
reproducible whether the blocks are filled sequentially or by a thread pool.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 4096


def block_generator(seed, block):
    """Philox generator for one block of paths."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def block_slices(n_paths, block=BLOCK):
    return [slice(i, min(i + block, n_paths)) for i in range(0, n_paths, block)]


def standard_normals(seed, n_paths, shape, antithetic=False, threads=1, block=BLOCK):
    """Draw an ``(n_paths, *shape)`` array of N(0,1) variates, block by block.

    With ``antithetic`` each block draws half its rows and appends their
    negatives, so pairs (z, -z) stay inside one block.
    """
    shape = tuple(int(k) for k in shape)
    out = np.empty((n_paths,) + shape)
    slices = block_slices(n_paths, block)

    def fill(j):
        sl = slices[j]
        rows = sl.stop - sl.start
        gen = block_generator(seed, j)
        if antithetic:
            half = (rows + 1) // 2
            z = gen.standard_normal((half,) + shape)
            out[sl.start:sl.start + half] = z
            out[sl.start + half:sl.stop] = -z[: rows - half]
        else:
            out[sl] = gen.standard_normal((rows,) + shape)

    if threads and threads > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(len(slices))))
    else:
        for j in range(len(slices)):
            fill(j)
    return out


def child_seed(seed, *keys):
    """Derive an independent integer seed from ``seed`` and integer keys."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
