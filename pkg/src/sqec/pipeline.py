"""Full decoders: optional neural local stage followed by matching mop-up."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .lattice import CodeLayout
from .matching import DecodingGraph, build_graph, decode, decode_batch
from .neural.decoding import diffusion_decode, local_decode
from .neural.model import ModelParams, load_checkpoint
from .propagation import ErrorVolume, SyndromeVolume, logical_flip

VARIANTS = ("matching", "classifier", "simplified", "diffusion")
STATS_VERSION = 1


@dataclass(frozen=True)
class DecoderSpec:
    """What to run: local stage variant, graph mode and model settings."""

    variant: str = "matching"
    graph_mode: str = "uniform"
    model_path: Optional[str] = None
    threshold: float = 0.5
    passes: int = 11
    seed: int = 0
    model: Optional[ModelParams] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.graph_mode not in ("uniform", "weighted"):
            raise ValueError(f"graph mode must be 'uniform' or 'weighted', got {self.graph_mode!r}")
        if self.neural and self.model is None and self.model_path is None:
            raise ValueError(f"variant {self.variant!r} needs a model")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")

    @property
    def neural(self) -> bool:
        return self.variant != "matching"

    def params(self) -> Optional[ModelParams]:
        if not self.neural:
            return None
        if self.model is not None:
            return self.model
        params = load_checkpoint(self.model_path)
        object.__setattr__(self, "model", params)
        return params

    def label(self) -> str:
        return f"{self.variant}+{self.graph_mode}" if self.neural else f"matching-{self.graph_mode}"


@dataclass
class DecodeStats:
    """Per-call record; times in nanoseconds from a monotonic clock."""

    input_events: np.ndarray
    residual_events: np.ndarray
    local_ns: int = 0
    matching_ns: int = 0
    total_ns: int = 0
    version: int = STATS_VERSION

    def as_dict(self) -> Dict:
        return {
            "version": self.version,
            "input_events": float(np.mean(self.input_events)),
            "residual_events": float(np.mean(self.residual_events)),
            "local_ns": self.local_ns,
            "matching_ns": self.matching_ns,
            "total_ns": self.total_ns,
        }


class Decoder:
    """A :class:`DecoderSpec` bound to one code, cycle count and basis."""

    def __init__(
        self,
        spec: DecoderSpec,
        layout: CodeLayout,
        cycles: int,
        basis: str = "Z",
        p_prime: Optional[float] = None,
        graph: Optional[DecodingGraph] = None,
    ):
        self.spec = spec
        self.layout = layout
        self.cycles = cycles
        self.basis = basis
        if graph is None:
            graph = build_graph(layout, cycles, spec.graph_mode, p_prime, basis)
        if graph.basis != basis or graph.cycles != cycles or graph.mode != spec.graph_mode:
            raise ValueError("graph does not match the decoder settings")
        self.graph = graph
        self.params = spec.params()

    def _check(self, syn: SyndromeVolume) -> None:
        if syn.layout.distance != self.layout.distance or syn.cycles != self.cycles:
            raise ValueError("syndrome does not match the decoder's code or cycle count")
        if syn.basis != self.basis:
            raise ValueError(f"decoder tracks {self.basis} errors, syndrome is for {syn.basis}")

    def local(self, syn: SyndromeVolume) -> Tuple[Optional[ErrorVolume], SyndromeVolume]:
        """Neural correction (``None`` for matching only) and residual syndrome."""
        spec = self.spec
        if not spec.neural:
            return None, syn
        if spec.variant == "diffusion":
            return diffusion_decode(self.params, syn, self.layout, spec.passes, spec.seed, spec.threshold)
        return local_decode(self.params, syn, self.layout, spec.threshold)

    def decode(self, syn: SyndromeVolume) -> Tuple[bool, ErrorVolume, DecodeStats]:
        """One shot: predicted flip, combined correction and stats."""
        self._check(syn)
        t0 = time.perf_counter_ns()
        corr, residual = self.local(syn)
        t1 = time.perf_counter_ns() if self.spec.neural else t0
        mop, flip = decode(self.graph, residual)
        t2 = time.perf_counter_ns()
        if corr is not None:
            flip ^= bool(logical_flip(corr, self.basis))
            mop = mop ^ corr
        stats = DecodeStats(syn.count(), residual.count(), t1 - t0, t2 - t1, t2 - t0)
        return bool(flip), mop, stats

    def decode_batch(self, syn: SyndromeVolume) -> Tuple[np.ndarray, DecodeStats]:
        """Predicted flips for a batch of shots."""
        self._check(syn)
        t0 = time.perf_counter_ns()
        corr, residual = self.local(syn)
        t1 = time.perf_counter_ns() if self.spec.neural else t0
        flips = decode_batch(self.graph, residual)
        t2 = time.perf_counter_ns()
        if corr is not None:
            flips = flips ^ logical_flip(corr, self.basis)
        stats = DecodeStats(syn.count(), residual.count(), t1 - t0, t2 - t1, t2 - t0)
        return flips, stats


def full_decode(
    spec: DecoderSpec,
    syn: SyndromeVolume,
    layout: CodeLayout,
    basis: str,
    p_prime: Optional[float] = None,
) -> Tuple[bool, DecodeStats]:
    """Decode one shot with a freshly bound decoder."""
    decoder = Decoder(spec, layout, syn.cycles, basis, p_prime)
    flip, _, stats = decoder.decode(syn)
    return flip, stats
