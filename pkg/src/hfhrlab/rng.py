"""Counter-based noise streams for reproducible parallel chains.

Every Gaussian block is produced by a Philox generator keyed on
``(seed, channel)`` with the counter set to ``(step, chunk)``.  A chain's
draw at a given step is therefore a pure function of
``(seed, step, channel, chain index)``: chains are grouped into fixed-size
chunks (:data:`CHUNK`), chunk ``c`` covers chains ``[c * CHUNK, (c+1) * CHUNK)``,
and chain ``i`` reads row ``i - c * CHUNK`` of the chunk's block.  Worker
scheduling can never change the draws because nothing about the stream
depends on how chunks are assigned to workers.
"""

import numpy as np

# Fixed chunk width; part of the reproducibility contract, never derived
# from the worker count or the ensemble size.
CHUNK = 512

# Noise channels.
CH_Q = 0        # position noise of the HFHR update
CH_P = 1        # momentum noise (shared by HFHR / KLMC / ULA)
CH_INIT = 2     # Gaussian cloud initialization
CH_DATA = 3     # synthetic data generation
CH_REF = 4      # reference sampling (inverse-CDF uniforms)
CH_PROJ = 5     # random projection directions


def _philox(seed, channel, step, chunk):
    # Philox's 256-bit counter increments from word 0 while generating, so
    # word 0 must stay free for in-block draws; step and chunk go in the
    # high words, making distinct (step, chunk) streams disjoint.
    key = np.array([np.uint64(seed % (1 << 64)), np.uint64(channel)], dtype=np.uint64)
    counter = np.array(
        [np.uint64(0), np.uint64(step), np.uint64(chunk), np.uint64(0)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def normal_block(seed, channel, step, chunk, rows, cols):
    """Standard-normal block of shape (rows, cols) for one (step, chunk)."""
    return _philox(seed, channel, step, chunk).standard_normal((rows, cols))


def uniform_block(seed, channel, step, chunk, rows, cols):
    return _philox(seed, channel, step, chunk).random((rows, cols))


def chain_chunks(n_chains):
    """Fixed chunking of chain indices: [(chunk_index, start, stop), ...]."""
    out = []
    start = 0
    c = 0
    while start < n_chains:
        stop = min(start + CHUNK, n_chains)
        out.append((c, start, stop))
        start = stop
        c += 1
    return out
