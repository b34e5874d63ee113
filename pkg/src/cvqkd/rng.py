"""Counter-based, reproducible randomness for slot simulation.

Slots are partitioned into fixed-size chunks and every chunk owns an
independent Philox stream keyed by (master_seed, stream_id, chunk_index).
The mapping never depends on thread count or execution order, so a session
is bit-identical however the chunks are scheduled. Within a chunk the
simulation draws its per-slot columns in a fixed sequence, making each
slot's randomness a pure function of the master seed and the slot index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SLOTS = 1 << 16

# stream ids keep unrelated consumers of the same master seed independent
STREAM_SESSION = 0
STREAM_TEST = 7


def chunk_generator(master_seed: int, stream: int, chunk_index: int) -> np.random.Generator:
    """Philox generator for one chunk of one stream."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, chunk_index))
    return np.random.Generator(np.random.Philox(ss))


def chunk_bounds(n_slots: int, chunk_slots: int = CHUNK_SLOTS):
    """Yield (chunk_index, start_slot, stop_slot) covering [0, n_slots)."""
    for j in range(0, -(-n_slots // chunk_slots)):
        yield j, j * chunk_slots, min((j + 1) * chunk_slots, n_slots)


def run_chunked(n_slots: int, master_seed: int, fill, *, stream: int = STREAM_SESSION,
                threads: int = 1, chunk_slots: int = CHUNK_SLOTS) -> list:
    """Evaluate ``fill(rng, start, stop)`` once per chunk, in chunk order.

    ``fill`` typically writes into preallocated [start:stop) slices; chunks are
    disjoint, so threaded execution is safe. ``threads`` only affects
    scheduling; results come back ordered by chunk index regardless.
    """
    bounds = list(chunk_bounds(n_slots, chunk_slots))

    def one(args):
        j, start, stop = args
        return fill(chunk_generator(master_seed, stream, j), start, stop)

    if threads <= 1 or len(bounds) <= 1:
        return [one(b) for b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, bounds))
