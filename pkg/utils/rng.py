"""Seeded random streams.

Every random draw in the project comes from a PCG64 generator keyed by the
run seed plus a tuple of integers (purpose tag, query id, stage, ...), so the
result of a draw never depends on thread scheduling.
"""

import numpy as np

# purpose tags, first key after the run seed
STREAM_GEN = 1
STREAM_PARTITION = 2
STREAM_GHOST = 3
STREAM_SEARCH = 4
STREAM_VISIT_SAMPLE = 5


def stream(seed, *keys):
    """Return a fresh Generator for (seed, *keys)."""
    entropy = [int(seed), *(int(key) for key in keys)]
    if any(value < 0 for value in entropy):
        raise ValueError(f"seed and stream keys must be non-negative, got {entropy}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
