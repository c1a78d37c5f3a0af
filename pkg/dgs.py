"""Direction-guided neighbor selection.

Directions are stored as sign bits packed into 32-bit words, bit t of word
t // 32 at position t % 32. A zero difference counts as a set bit. Bits past
d in the last word are always zero.
"""

import math

import numpy as np


def n_words(d):
    return (d + 31) // 32


def pack_sign_bits(bits):
    """Pack a boolean array (..., d) into uint32 words (..., ceil(d/32))."""
    bits = np.asarray(bits, dtype=bool)
    d = bits.shape[-1]
    width = n_words(d) * 32
    if width != d:
        pad = [(0, 0)] * (bits.ndim - 1) + [(0, width - d)]
        bits = np.pad(bits, pad)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u4").astype(np.uint32)


def unpack_sign_bits(words, d):
    words = np.ascontiguousarray(words, dtype="<u4")
    bits = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")
    return bits[..., :d].astype(bool)


def query_direction_bits(query, node):
    """Bit t is set iff query[t] - node[t] >= 0."""
    query = np.asarray(query, dtype=np.float32)
    node = np.asarray(node, dtype=np.float32)
    if query.shape != node.shape:
        raise ValueError(f"dimension mismatch: {query.shape} vs {node.shape}")
    return pack_sign_bits(query - node >= 0)


def matching_count(a, b, d):
    """d minus the Hamming distance of two zero-padded packed vectors."""
    differing = np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int64)
    if np.ndim(differing) == 0:
        return d - int(differing)
    return d - differing


def keep_count(j, discard_ratio):
    if not 0 <= discard_ratio < 1:
        raise ValueError(f"discard_ratio must be in [0, 1), got {discard_ratio}")
    # round half up
    return max(1, int(math.floor((1 - discard_ratio) * j + 0.5)))


def select_neighbors(parent, query_bits, directions, d, discard_ratio):
    """Slots of `parent`'s best-aligned neighbors, most matching bits first.

    `directions` is the (n_local, j, W) word table. Ties go to the lower slot.
    """
    row = directions[parent]
    j = row.shape[0]
    counts = matching_count(row, query_bits, d)
    order = np.lexsort((np.arange(j), -counts))
    return order[:keep_count(j, discard_ratio)]


def random_discard(j, discard_ratio, rng):
    """Comparison arm: keep a uniform random subset of the same size."""
    return rng.choice(j, size=keep_count(j, discard_ratio), replace=False)


def in_cooldown(iteration, max_iter, cooldown_ratio):
    if not 0 <= cooldown_ratio <= 1:
        raise ValueError(f"cooldown_ratio must be in [0, 1], got {cooldown_ratio}")
    start = math.ceil((1 - cooldown_ratio) * max_iter - 1e-9)
    return iteration >= start
