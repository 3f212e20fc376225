"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, block)`` through numpy's Philox
generator, so a shot's randomness depends only on its index and never on
how shots are chunked or distributed over workers.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1

# Stream identifiers keep independent uses of one seed apart.
STREAM_NOISE = 1
STREAM_DIFFUSION = 2
STREAM_TRAIN = 3
STREAM_MIX = 4


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def words(seed: int, stream: int, start_block: int, n_blocks: int) -> np.ndarray:
    """Return ``4 * n_blocks`` raw 64-bit words beginning at ``start_block``."""
    key = check_seed(seed) | (int(stream) << 64)
    bitgen = np.random.Philox(key=key, counter=int(start_block))
    return bitgen.random_raw(4 * int(n_blocks))


def to_uniform(raw: np.ndarray) -> np.ndarray:
    """Map raw 64-bit words to doubles in ``[0, 1)`` using the top 53 bits."""
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def below(prob: float) -> np.uint64:
    """Integer threshold ``T`` with ``word < T`` iff ``to_uniform(word) < prob``.

    Lets Bernoulli draws compare raw words without a float conversion.
    """
    k = math.ceil(float(prob) * 9007199254740992.0)
    return np.uint64(min(k << 11, MASK64)) if k < (1 << 53) else np.uint64(MASK64)


def generator(seed: int, stream: int) -> np.random.Generator:
    """Ordinary numpy generator on a dedicated Philox stream."""
    key = check_seed(seed) | (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key))
