"""Small constructors shared by several test modules."""

import numpy as np

from sqec.lattice import ANCILLA_OFFSETS
from sqec.noise import RawErrorBits
from sqec.propagation import ErrorVolume


def site_of(i, j):
    """Cell site of the physical ancilla at corner (i, j)."""
    y, x = i + 1, j + 1
    return y // 2, x // 2, ANCILLA_OFFSETS.index((y % 2, x % 2))


def zero_raw(layout, cycles):
    shape = (cycles, layout.rows, layout.cols, 4)
    return RawErrorBits(
        np.zeros(shape, bool), np.zeros(shape, bool), np.zeros(shape, bool),
        np.zeros((cycles, layout.rows, layout.cols, 16, 4), bool),
    )


def random_volume(layout, cycles, seed, density=0.05, basis="Z", shots=None):
    gen = np.random.default_rng(seed)
    batch = () if shots is None else (shots,)
    shape = (*batch, cycles, layout.rows, layout.cols, 4)
    dp, ap = layout.data_presence, layout.ancilla_presence
    return ErrorVolume(
        (gen.random(shape) < density) & dp,
        (gen.random(shape) < density) & dp,
        (gen.random(shape) < density) & ap,
        layout,
        basis,
    )
