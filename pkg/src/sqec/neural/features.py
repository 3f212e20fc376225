"""Conversion between volumes and network tensors.

Network tensors are ``(batch, channels, layers, rows, cols)`` with
``layers = cycles + 1`` so that the final data-measurement comparison layer
fits; error channels are zero on that last layer.
"""

from __future__ import annotations

import numpy as np

from ..lattice import CodeLayout
from ..propagation import ErrorVolume, SyndromeVolume


def presence_channels(layout: CodeLayout, layers: int) -> np.ndarray:
    """``[8, layers, rows, cols]`` presence bits repeated over layers."""
    p = np.moveaxis(layout.presence, -1, 0).astype(np.float32)
    return np.repeat(p[:, None], layers, axis=1)


def syndrome_channels(events: np.ndarray) -> np.ndarray:
    """``[..., layers, rows, cols, 4]`` -> ``[..., 4, layers, rows, cols]``."""
    return np.moveaxis(np.asarray(events, dtype=np.float32), -1, -4)


def volume_channels(arr: np.ndarray) -> np.ndarray:
    """``[..., cycles, rows, cols, 12]`` -> ``[..., 12, cycles + 1, rows, cols]``."""
    arr = np.moveaxis(np.asarray(arr, dtype=np.float32), -1, -4)
    pad = [(0, 0)] * arr.ndim
    pad[-3] = (0, 1)
    return np.pad(arr, pad)


def channels_to_volume(out: np.ndarray, layout: CodeLayout, cycles: int) -> np.ndarray:
    """Network output -> presence-masked ``[..., cycles, rows, cols, 12]``."""
    arr = np.moveaxis(np.asarray(out)[..., :cycles, :, :], -4, -1)
    return arr * layout.presence[..., [0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 6, 7]]


def target_mask(layout: CodeLayout, cycles: int) -> np.ndarray:
    """``[12, cycles + 1, rows, cols]``: present slots on error layers."""
    slot = layout.presence[..., [0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 6, 7]]
    mask = np.zeros((12, cycles + 1, layout.rows, layout.cols), dtype=np.float32)
    mask[:, :cycles] = np.moveaxis(slot, -1, 0)[:, None]
    return mask


def model_input(syn: SyndromeVolume, tentative=None, fuzzy=None) -> np.ndarray:
    """Stack syndrome, presence and (for diffusion) tentative/fuzzy channels."""
    events = syn.events
    if events.ndim == 4:
        events = events[None]
    batch, layers = events.shape[0], events.shape[1]
    parts = [
        syndrome_channels(events),
        np.broadcast_to(presence_channels(syn.layout, layers), (batch, 8, layers, syn.layout.rows, syn.layout.cols)),
    ]
    if tentative is not None:
        parts.append(volume_channels(np.asarray(tentative).reshape(batch, *np.shape(tentative)[-4:])))
        parts.append(syndrome_channels(np.asarray(fuzzy).reshape(batch, *np.shape(fuzzy)[-4:])))
    return np.concatenate(parts, axis=1)


def error_target(vol: ErrorVolume) -> np.ndarray:
    return volume_channels(vol.channels())
