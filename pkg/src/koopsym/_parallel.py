"""Deterministic chunked evaluation over batches of points."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 256


def chunked_map(fn, X, threads=1, chunk_size=CHUNK_SIZE):
    """Apply ``fn`` to fixed-size row chunks of ``X`` and concatenate the results.

    Chunk boundaries depend only on ``chunk_size``, never on ``threads``, so
    the output is identical for any level of parallelism. ``fn`` returns a
    tuple of arrays whose first axis runs over the chunk's rows.
    """
    X = np.asarray(X)
    bounds = [(a, min(a + chunk_size, len(X))) for a in range(0, len(X), chunk_size)]
    chunks = [X[a:b] for a, b in bounds]
    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
