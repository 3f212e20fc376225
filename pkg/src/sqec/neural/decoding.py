"""Local decoding with trained networks: one-shot classifiers and diffusion."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .. import rng
from ..lattice import CodeLayout
from ..propagation import ErrorVolume, SyndromeVolume, detection_events
from .features import channels_to_volume, model_input
from .fuzzy import fuzzy_residual
from .model import ModelParams, forward


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")


def _batched(syn: SyndromeVolume) -> Tuple[SyndromeVolume, bool]:
    if syn.events.ndim == 4:
        return SyndromeVolume(syn.events[None], syn.layout, syn.basis), True
    return syn, False


def soft_correction(params: ModelParams, syn: SyndromeVolume) -> np.ndarray:
    """Per-bit error probabilities ``[..., cycles, rows, cols, 12]``."""
    syn, single = _batched(syn)
    out = forward(params, model_input(syn))
    soft = channels_to_volume(out, syn.layout, syn.cycles)
    return soft[0] if single else soft


def binarise(soft: np.ndarray, layout: CodeLayout, basis: str, threshold: float = 0.5) -> ErrorVolume:
    _check_threshold(threshold)
    return ErrorVolume.from_channels(np.asarray(soft) >= threshold, layout, basis)


def residual_of(syn: SyndromeVolume, correction: ErrorVolume) -> SyndromeVolume:
    """Syndrome left after applying ``correction``."""
    return SyndromeVolume(syn.events ^ detection_events(correction).events, syn.layout, syn.basis)


def local_decode(
    params: ModelParams, syn: SyndromeVolume, layout: CodeLayout | None = None, threshold: float = 0.5
) -> Tuple[ErrorVolume, SyndromeVolume]:
    """Thresholded network correction and the residual syndrome."""
    _check_threshold(threshold)
    if layout is not None and layout.distance != syn.layout.distance:
        raise ValueError("syndrome was produced on a different layout")
    soft = soft_correction(params, syn)
    correction = binarise(soft, syn.layout, syn.basis, threshold)
    return correction, residual_of(syn, correction)


def diffusion_passes(
    params: ModelParams, syn: SyndromeVolume, passes: int = 11, seed: int = 0, start: np.ndarray | None = None
) -> np.ndarray:
    """Soft corrections after ``passes`` refinements of random tentative values."""
    if passes < 1:
        raise ValueError(f"passes must be >= 1, got {passes}")
    syn, single = _batched(syn)
    layout = syn.layout
    shape = (syn.events.shape[0], syn.cycles, layout.rows, layout.cols, 12)
    if start is None:
        u = rng.generator(seed, rng.STREAM_DIFFUSION).random(shape)
        mask = layout.presence[..., [0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 6, 7]]
        tentative = u * mask
    else:
        tentative = np.asarray(start, dtype=float).reshape(shape)
    for _ in range(passes):
        fuzzy = fuzzy_residual(syn, tentative)
        out = forward(params, model_input(syn, tentative, fuzzy))
        tentative = channels_to_volume(out, layout, syn.cycles).astype(float)
        tentative = np.clip(tentative, 0.0, 1.0)
    return tentative[0] if single else tentative


def diffusion_decode(
    params: ModelParams,
    syn: SyndromeVolume,
    layout: CodeLayout | None = None,
    passes: int = 11,
    seed: int = 0,
    threshold: float = 0.5,
) -> Tuple[ErrorVolume, SyndromeVolume]:
    """Iterative diffusion decoding followed by thresholding."""
    _check_threshold(threshold)
    soft = diffusion_passes(params, syn, passes, seed)
    correction = binarise(soft, syn.layout, syn.basis, threshold)
    return correction, residual_of(syn, correction)


def binary_entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 1e-12, 1 - 1e-12)
    return -(p * np.log2(p) + (1 - p) * np.log2(1 - p))


def mean_output_entropy(params: ModelParams, syn: SyndromeVolume) -> float:
    """Mean binary entropy of the network outputs over present slots."""
    soft = soft_correction(params, syn)
    layout = syn.layout
    mask = np.broadcast_to(layout.presence[..., [0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 6, 7]], soft.shape)
    return float(binary_entropy(soft)[mask].mean())
