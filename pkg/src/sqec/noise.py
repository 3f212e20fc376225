"""Vectorised sampling of circuit-level depolarising noise.

Errors of one memory experiment are split into three classes per cycle and
unit cell:

* class 0: data-qubit idling, one depolarising draw per data qubit lumping
  the four non-CNOT time steps (plus preparation in the first cycle and
  measurement in the last);
* class 1: ancilla preparation/measurement, sampled directly as syndrome
  bit flips;
* class 2: CNOT noise, a two-qubit Pauli drawn just before each of the 16
  gate slots of a cell (4 ancilla slots x 4 CNOT steps).

The two-qubit channel uses 4 uniformly random bits per occurring fault, so
the identity is one of the 16 outcomes: a gate slot suffers a non-identity
Pauli with probability ``15 p' / 16``.  Where a gate slot has only one
present qubit, the surviving two bits act as single-qubit depolarising idle
noise with the same parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import rng
from .lattice import ANCILLA_OFFSETS, ANCILLA_TYPES, SCHEDULE, CodeLayout, shift_from

BASES = ("X", "Z")
IDLE_STEPS = 4
WORDS_PER_CELL = 28  # 4 idle + 4 ancilla + 16 gate floats, 2 bit words, 2 spare
CNOT_BITS = ("anc_x", "anc_z", "data_x", "data_z")


@dataclass(frozen=True)
class NoiseConfig:
    """Noise and experiment parameters.

    ``basis`` names the type of logical error that is tracked: ``"Z"``
    tracks Z errors, which are detected by X stabilisers and read out by a
    final X-basis data measurement.
    """

    depol_param: float
    cycles: int
    basis: str = "Z"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.depol_param < 1.0:
            raise ValueError(f"depol_param must lie in [0, 1), got {self.depol_param}")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValueError(f"cycles must be a positive integer, got {self.cycles}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be 'X' or 'Z', got {self.basis!r}")
        rng.check_seed(self.seed)


@dataclass
class RawErrorBits:
    """Pre-propagation error bits, optionally with a leading shot axis.

    ``idle_x``/``idle_z``: ``[..., cycles, rows, cols, 4]`` per data slot.
    ``anc_flip``: ``[..., cycles, rows, cols, 4]`` per ancilla slot.
    ``cnot``: ``[..., cycles, rows, cols, 16, 4]``; gate ``g = 4 * step + slot``
    with bits ordered as :data:`CNOT_BITS`, applied just before the gate.
    """

    idle_x: np.ndarray
    idle_z: np.ndarray
    anc_flip: np.ndarray
    cnot: np.ndarray

    @property
    def cycles(self) -> int:
        return self.idle_x.shape[-4]

    def __getitem__(self, index) -> "RawErrorBits":
        return RawErrorBits(
            self.idle_x[index], self.idle_z[index], self.anc_flip[index], self.cnot[index]
        )


def compound_depol(p_prime: float, n: int) -> float:
    """Probability that at least one of ``n`` depolarising events occurs."""
    if not 0.0 <= p_prime < 1.0:
        raise ValueError(f"p_prime must lie in [0, 1), got {p_prime}")
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return 1.0 - (1.0 - p_prime) ** n


def class1_flip_probs(p_prime: float) -> Tuple[float, float]:
    """Syndrome flip probabilities ``(z_ancilla, x_ancilla)``.

    Z ancillas see reset and measurement noise; X ancillas additionally see
    their two Hadamard gates.
    """
    return compound_depol(p_prime, 2) / 2.0, compound_depol(p_prime, 4) / 2.0


def idle_steps(cycle: int, cycles: int) -> int:
    """Depolarising steps lumped into a data qubit's class-0 draw."""
    n = IDLE_STEPS
    if cycle == 0:
        n += 1  # data preparation
    if cycle == cycles - 1:
        n += 1  # data measurement
    return n


def cnot_masks(layout: CodeLayout) -> Tuple[np.ndarray, np.ndarray]:
    """Presence of the ancilla and data side of each gate slot, ``[rows, cols, 16]``."""

    def build():
        anc = np.zeros((layout.rows, layout.cols, 16), dtype=bool)
        dat = np.zeros_like(anc)
        for step in range(4):
            for k, kind in enumerate(ANCILLA_TYPES):
                a, b = ANCILLA_OFFSETS[k]
                dy, dx = SCHEDULE[kind][step]
                partner = shift_from(layout.data_grid, dy, dx)[a::2, b::2]
                anc[..., 4 * step + k] = layout.ancilla_presence[..., k]
                dat[..., 4 * step + k] = partner
        return np.stack([anc, dat])

    both = layout._cached("_cnot_masks", build)
    return both[0], both[1]


def _bits(word: np.ndarray, n: int) -> np.ndarray:
    """Low ``n`` bits of each 64-bit word, least significant first."""
    octets = np.ascontiguousarray(word, dtype="<u8").view(np.uint8)
    octets = octets.reshape(*word.shape, 8)
    return np.unpackbits(octets, axis=-1, count=n, bitorder="little").view(bool)


def sample(layout: CodeLayout, cfg: NoiseConfig, shots: int, start: int = 0) -> RawErrorBits:
    """Sample raw error bits for shots ``start .. start + shots - 1``.

    Shot ``s`` always consumes the same Philox blocks, so the result for a
    given shot is independent of ``start`` and ``shots``.
    """
    rows, cols, cycles = layout.rows, layout.cols, cfg.cycles
    per_shot = cycles * rows * cols * WORDS_PER_CELL
    raw = rng.words(cfg.seed, rng.STREAM_NOISE, start * per_shot // 4, shots * per_shot // 4)
    raw = raw.reshape(shots, cycles, rows, cols, WORDS_PER_CELL)
    p = cfg.depol_param

    # class 0
    p_idle = np.array([rng.below(compound_depol(p, idle_steps(t, cycles))) for t in range(cycles)])
    hit = raw[..., 0:4] < p_idle[:, None, None, None]
    pauli = _bits(raw[..., 24], 8).reshape(shots, cycles, rows, cols, 4, 2)
    data_mask = layout.data_presence
    idle_x = hit & pauli[..., 0] & data_mask
    idle_z = hit & pauli[..., 1] & data_mask

    # class 1
    pz, px = class1_flip_probs(p)
    p_anc = (px, px, pz, pz)
    anc_flip = (raw[..., 4:8] < np.array([rng.below(q) for q in p_anc])) & layout.ancilla_presence

    # class 2
    occurs = raw[..., 8:24] < rng.below(p)
    gate_bits = _bits(raw[..., 25], 64).reshape(shots, cycles, rows, cols, 16, 4)
    anc_mask, dat_mask = cnot_masks(layout)
    side = np.stack([anc_mask, anc_mask, dat_mask, dat_mask], axis=-1)
    cnot = gate_bits & occurs[..., None] & side

    return RawErrorBits(idle_x, idle_z, anc_flip, cnot)


def sample_shot(layout: CodeLayout, cfg: NoiseConfig, shot: int = 0) -> RawErrorBits:
    """Raw error bits of a single shot (no leading shot axis)."""
    return sample(layout, cfg, 1, start=shot)[0]


def chunk_size(layout: CodeLayout, cycles: int, budget_bytes: int = 48 << 20) -> int:
    per_shot = cycles * layout.rows * layout.cols * WORDS_PER_CELL * 8 * 3
    return max(1, budget_bytes // per_shot)
