"""Real-valued parity: fuzzy XOR and soft residual syndromes."""

from __future__ import annotations

import numpy as np

from ..lattice import NE, NW, SE, SW, from_grid, shift_from, to_grid
from ..propagation import SyndromeVolume, detector_slots


def _check_unit(name, a):
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise ValueError(f"{name} must lie in [0, 1]")


def fuzzy_xor(x, y):
    """``x (1 - y) + (1 - x) y``; agrees with XOR on {0, 1}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_unit("x", x)
    _check_unit("y", y)
    out = x * (1.0 - y) + (1.0 - x) * y
    return float(out) if out.ndim == 0 else out


def fuzzy_fold(values, axis=-1):
    """Fuzzy XOR of all values along ``axis``, via ``(1 - prod(1 - 2x)) / 2``."""
    values = np.asarray(values, dtype=float)
    return (1.0 - np.prod(1.0 - 2.0 * values, axis=axis)) / 2.0


def _shift_product(grid, dy, dx):
    # shift_from fills with zero; shift (m - 1) so the fill becomes a neutral 1.
    return shift_from(grid - 1.0, dy, dx) + 1.0


def fuzzy_residual(syn: SyndromeVolume, soft: np.ndarray) -> np.ndarray:
    """Soft residual syndrome ``[..., cycles + 1, rows, cols, 4]``.

    ``soft`` holds per-bit error probabilities ``[..., cycles, rows, cols,
    12]`` (space_x, space_z, time_like).  Each detector folds the fuzzy XOR
    of the adjacent soft bits exactly as :func:`detection_events` sums the
    binary ones, then fuzzy-XORs the result with the observed event.
    """
    soft = np.asarray(soft, dtype=float)
    _check_unit("soft_correction", soft)
    layout = syn.layout
    present = layout.presence[..., [0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 6, 7]]
    m = np.where(present, 1.0 - 2.0 * soft, 1.0)  # product form; absent bits are neutral
    mx = to_grid(m[..., 0:4], "data")
    mz = to_grid(m[..., 4:8], "data")
    px = np.ones_like(mx)
    pz = np.ones_like(mz)
    for o in (NW, NE, SW, SE):
        px = px * _shift_product(mz, *o)  # X stabilisers see Z errors
        pz = pz * _shift_product(mx, *o)
    xs = layout.xanc_grid
    space = np.where(xs, px, np.where(layout.zanc_grid, pz, 1.0))
    space = from_grid(space, "ancilla")

    mt = m[..., 8:12]
    prev = np.ones_like(mt)
    prev[..., 1:, :, :, :] = mt[..., :-1, :, :, :]
    body = space * mt * prev
    final = np.ones_like(mt[..., -1:, :, :, :])
    slots = list(detector_slots(syn.basis))
    final[..., slots] = mt[..., -1:, :, :, slots]
    prod = np.concatenate([body, final], axis=-4)
    fuzzy = np.where(layout.ancilla_presence, (1.0 - prod) / 2.0, 0.0)
    s = syn.events.astype(float)
    return s + fuzzy - 2.0 * s * fuzzy
