"""Backward propagation of sampled errors and syndrome extraction.

All class-2 faults are conjugated back through the CNOT layers preceding
them, so that every cycle is described by errors sitting just before its
first CNOT: X/Z bits on data slots (space-like) and one flip bit per
ancilla slot (time-like).  Detection events are then parity sums over the
neighbourhood of each stabiliser site.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .lattice import (
    ANCILLA_TYPES,
    NE,
    NW,
    SCHEDULE,
    SE,
    SW,
    CodeLayout,
    from_grid,
    logical_mask,
    shift_from,
    shift_to,
    to_grid,
)
from .noise import BASES, NoiseConfig, RawErrorBits, chunk_size, sample

# Ancilla type that detects errors of each basis.
DETECTOR_TYPE = {"Z": "X", "X": "Z"}
# Logical support whose parity reveals a logical error of each basis.
READOUT_LOGICAL = {"Z": "X", "X": "Z"}


def detector_slots(basis: str) -> Tuple[int, int]:
    """Ancilla slots of the stabiliser type detecting ``basis`` errors."""
    kind = DETECTOR_TYPE[basis]
    return tuple(k for k, t in enumerate(ANCILLA_TYPES) if t == kind)


@dataclass
class ErrorVolume:
    """Space-like and time-like error bits at each cycle's reference time.

    Arrays are ``[..., cycles, rows, cols, 4]``; leading axes index shots.
    """

    space_x: np.ndarray
    space_z: np.ndarray
    time_like: np.ndarray
    layout: CodeLayout
    basis: str = "Z"

    @classmethod
    def zeros(cls, layout: CodeLayout, cycles: int, basis: str = "Z", batch=()) -> "ErrorVolume":
        shape = (*batch, cycles, layout.rows, layout.cols, 4)
        return cls(
            np.zeros(shape, bool), np.zeros(shape, bool), np.zeros(shape, bool), layout, basis
        )

    @classmethod
    def from_channels(cls, arr: np.ndarray, layout: CodeLayout, basis: str = "Z") -> "ErrorVolume":
        """Inverse of :meth:`channels`."""
        arr = np.asarray(arr, dtype=bool)
        return cls(arr[..., 0:4], arr[..., 4:8], arr[..., 8:12], layout, basis)

    @property
    def cycles(self) -> int:
        return self.space_x.shape[-4]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.space_x.shape[:-4]

    def channels(self) -> np.ndarray:
        """``[..., cycles, rows, cols, 12]``: space_x, space_z, time_like."""
        return np.concatenate([self.space_x, self.space_z, self.time_like], axis=-1)

    def flat(self) -> np.ndarray:
        """``[..., cycles * rows * cols * 12]`` in (cycle, row, col, channel) order."""
        ch = self.channels()
        return ch.reshape(*ch.shape[:-4], -1)

    @classmethod
    def from_flat(
        cls, arr: np.ndarray, layout: CodeLayout, cycles: int, basis: str = "Z"
    ) -> "ErrorVolume":
        arr = np.asarray(arr, dtype=bool)
        shape = (*arr.shape[:-1], cycles, layout.rows, layout.cols, 12)
        return cls.from_channels(arr.reshape(shape), layout, basis)

    def __getitem__(self, index) -> "ErrorVolume":
        return ErrorVolume(
            self.space_x[index], self.space_z[index], self.time_like[index], self.layout, self.basis
        )

    def __xor__(self, other: "ErrorVolume") -> "ErrorVolume":
        if self.space_x.shape[-4:] != other.space_x.shape[-4:]:
            raise ValueError("error volumes have different shapes")
        return ErrorVolume(
            self.space_x ^ other.space_x,
            self.space_z ^ other.space_z,
            self.time_like ^ other.time_like,
            self.layout,
            self.basis,
        )

    def count(self) -> np.ndarray:
        """Number of active bits per shot."""
        axes = (-4, -3, -2, -1)
        return (
            self.space_x.sum(axis=axes) + self.space_z.sum(axis=axes) + self.time_like.sum(axis=axes)
        )

    def copy(self) -> "ErrorVolume":
        return ErrorVolume(
            self.space_x.copy(), self.space_z.copy(), self.time_like.copy(), self.layout, self.basis
        )


@dataclass
class SyndromeVolume:
    """Detection events ``[..., cycles + 1, rows, cols, 4]`` per ancilla slot.

    Layer ``t < cycles`` compares cycle ``t`` with cycle ``t - 1`` (layer 0
    with the prepared state).  The last layer compares the final data
    measurement with cycle ``cycles - 1`` and is populated only for the
    stabiliser type detecting ``basis`` errors.
    """

    events: np.ndarray
    layout: CodeLayout
    basis: str = "Z"

    @property
    def cycles(self) -> int:
        return self.events.shape[-4] - 1

    def __getitem__(self, index) -> "SyndromeVolume":
        return SyndromeVolume(self.events[index], self.layout, self.basis)

    def __xor__(self, other: "SyndromeVolume") -> "SyndromeVolume":
        return SyndromeVolume(self.events ^ other.events, self.layout, self.basis)

    def count(self) -> np.ndarray:
        return self.events.sum(axis=(-4, -3, -2, -1))

    def restricted(self, basis: str | None = None) -> np.ndarray:
        """Events of the stabilisers detecting ``basis`` errors only."""
        slots = list(detector_slots(basis or self.basis))
        return self.events[..., slots]


def flat_index(layout: CodeLayout, cycle, row, col, channel):
    """Position of a volume bit in :meth:`ErrorVolume.flat` order."""
    return ((np.asarray(cycle) * layout.rows + row) * layout.cols + col) * 12 + channel


def _conjugate_layer(layout, step, dx, dz, ax, az):
    """Conjugate a Pauli frame by CNOT layer ``step`` (self-inverse)."""
    ox = SCHEDULE["X"][step]
    oz = SCHEDULE["Z"][step]
    gx = layout.gate_mask("X", step)
    gz = layout.gate_mask("Z", step)
    # X ancillas control data targets: X_a -> X_a X_d, Z_d -> Z_a Z_d.
    ndx = dx ^ shift_to(ax & gx, *ox)
    naz = az ^ (shift_from(dz, *ox) & gx)
    # Z ancillas are targets of data controls: X_d -> X_d X_a, Z_a -> Z_d Z_a.
    nax = ax ^ (shift_from(dx, *oz) & gz)
    ndz = dz ^ shift_to(az & gz, *oz)
    return ndx, ndz, nax, naz


def _type_grid(layout: CodeLayout, kind: str) -> np.ndarray:
    """Ancilla-grid mask of every slot of type ``kind``, present or not."""
    def build():
        slots = np.array([t == kind for t in ANCILLA_TYPES])
        return to_grid(np.broadcast_to(slots, (layout.rows, layout.cols, 4)), "ancilla")

    return layout._cached(f"_type_grid_{kind}", build)


def _gate_errors(layout, cnot_step: np.ndarray, step: int):
    """Grid-form frame contribution of the faults before CNOT ``step``.

    ``cnot_step`` is ``[..., rows, cols, 4, 4]`` (ancilla slot, bit).
    """
    ax = to_grid(cnot_step[..., 0], "ancilla")
    az = to_grid(cnot_step[..., 1], "ancilla")
    bx = to_grid(cnot_step[..., 2], "ancilla")
    bz = to_grid(cnot_step[..., 3], "ancilla")
    dx = np.zeros_like(ax)
    dz = np.zeros_like(az)
    for kind in ("X", "Z"):
        mask = _type_grid(layout, kind)
        o = SCHEDULE[kind][step]
        dx ^= shift_to(bx & mask, *o)
        dz ^= shift_to(bz & mask, *o)
    return dx, dz, ax, az


def propagate_backward(raw: RawErrorBits, layout: CodeLayout, basis: str = "Z") -> ErrorVolume:
    """Reduce raw circuit faults to equivalent errors at reference time."""
    cnot = raw.cnot.reshape(*raw.cnot.shape[:-2], 4, 4, 4)  # step, slot, bit
    dx, dz, ax, az = _gate_errors(layout, cnot[..., 3, :, :], 3)
    for step in (2, 1, 0):
        dx, dz, ax, az = _conjugate_layer(layout, step, dx, dz, ax, az)
        ex, ez, eax, eaz = _gate_errors(layout, cnot[..., step, :, :], step)
        dx ^= ex
        dz ^= ez
        ax ^= eax
        az ^= eaz
    # X on a |+> X-ancilla and Z on a |0> Z-ancilla are global phases.
    flips = (az & layout.xanc_grid) | (ax & layout.zanc_grid)
    space_x = from_grid(dx, "data") ^ raw.idle_x
    space_z = from_grid(dz, "data") ^ raw.idle_z
    time_like = from_grid(flips, "ancilla") ^ raw.anc_flip
    return ErrorVolume(space_x, space_z, time_like, layout, basis)


def space_parity(layout: CodeLayout, space_x: np.ndarray, space_z: np.ndarray) -> np.ndarray:
    """Stabiliser flips caused by space-like errors, ``[..., rows, cols, 4]``."""
    gx = to_grid(space_x, "data")
    gz = to_grid(space_z, "data")
    px = np.zeros_like(gx)
    pz = np.zeros_like(gz)
    for o in (NW, NE, SW, SE):
        px ^= shift_from(gz, *o)
        pz ^= shift_from(gx, *o)
    flips = (px & layout.xanc_grid) | (pz & layout.zanc_grid)
    return from_grid(flips, "ancilla")


def detection_events(vol: ErrorVolume) -> SyndromeVolume:
    """Syndrome changes produced by an error volume."""
    layout = vol.layout
    s = space_parity(layout, vol.space_x, vol.space_z)
    t = vol.time_like
    prev = np.zeros_like(t)
    prev[..., 1:, :, :, :] = t[..., :-1, :, :, :]
    body = s ^ t ^ prev
    final = np.zeros_like(t[..., -1:, :, :, :])
    slots = list(detector_slots(vol.basis))
    final[..., slots] = t[..., -1:, :, :, slots]
    events = np.concatenate([body, final], axis=-4) & layout.ancilla_presence
    return SyndromeVolume(events, layout, vol.basis)


def logical_flip(vol: ErrorVolume, basis: str | None = None):
    """Whether the accumulated data errors apply a ``basis`` logical operator."""
    basis = basis or vol.basis
    if basis not in BASES:
        raise ValueError(f"basis must be 'X' or 'Z', got {basis!r}")
    mask = logical_mask(vol.layout, READOUT_LOGICAL[basis])
    bits = vol.space_z if basis == "Z" else vol.space_x
    total = np.logical_xor.reduce(bits, axis=-4)
    flip = np.logical_xor.reduce((total & mask).reshape(*total.shape[:-3], -1), axis=-1)
    return flip if np.ndim(flip) else bool(flip)


def simulate(
    layout: CodeLayout, cfg: NoiseConfig, shots: int, start: int = 0
) -> Tuple[ErrorVolume, SyndromeVolume]:
    """Sample, propagate and extract syndromes for a batch of shots."""
    step = chunk_size(layout, cfg.cycles)
    vols, syns = [], []
    for lo in range(start, start + shots, step):
        n = min(step, start + shots - lo)
        vol = propagate_backward(sample(layout, cfg, n, lo), layout, cfg.basis)
        vols.append(vol)
        syns.append(detection_events(vol))
    if len(vols) == 1:
        return vols[0], syns[0]
    vol = ErrorVolume(
        np.concatenate([v.space_x for v in vols]),
        np.concatenate([v.space_z for v in vols]),
        np.concatenate([v.time_like for v in vols]),
        layout,
        cfg.basis,
    )
    syn = SyndromeVolume(np.concatenate([s.events for s in syns]), layout, cfg.basis)
    return vol, syn
