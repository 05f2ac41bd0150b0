"""Deterministic random-stream derivation.

Splitting rule used everywhere in the package: a stream is addressed by a
tuple of nonnegative integers ``(master_seed, part, ...)`` fed to
``numpy.random.SeedSequence``.  Chunked population updates give chunk ``c``
the stream ``(update_seed, c)``, so results depend only on the seed and the
declared chunk size, never on how chunks are scheduled across workers.
"""

import numpy as np

DEFAULT_CHUNK = 16384


def rng_for(*key: int) -> np.random.Generator:
    """Generator addressed by an integer tuple."""
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def derive_seed(*key: int) -> int:
    """Collapse an integer tuple into a single 64-bit child seed."""
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint64)[0])


def chunk_slices(total: int, chunk: int = DEFAULT_CHUNK):
    """Successive (start, stop) pairs covering range(total)."""
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
