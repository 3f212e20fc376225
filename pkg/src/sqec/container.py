"""Binary dataset container for simulated shots.

Layout (little endian)::

    "SQEC" | u16 version | u16 distance | u16 cycles | u8 basis | u8 pad
           | f64 p' | u64 shots
    per shot: ErrorVolume bits, then SyndromeVolume bits, each packed into
    64-bit words (bit i of the stream is bit i % 64 of word i // 64).

Bit streams follow :meth:`ErrorVolume.flat` and the (layer, row, col, slot)
order of ``SyndromeVolume.events``; both lengths follow from the header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .lattice import build_layout
from .propagation import ErrorVolume, SyndromeVolume

MAGIC = b"SQEC"
VERSION = 1
HEADER = struct.Struct("<4sHHHBBdQ")
BASIS_CODES = {"X": 0, "Z": 1}


def _words(n_bits: int) -> int:
    return (n_bits + 63) // 64


def _pack(bits: np.ndarray) -> np.ndarray:
    """``[shots, n]`` bools -> ``[shots, words * 8]`` bytes."""
    shots, n = bits.shape
    padded = np.zeros((shots, _words(n) * 64), dtype=bool)
    padded[:, :n] = bits
    return np.packbits(padded, axis=1, bitorder="little")


def _unpack(raw: np.ndarray, n: int) -> np.ndarray:
    return np.unpackbits(raw, axis=1, count=n, bitorder="little").astype(bool)


@dataclass
class DatasetContainer:
    distance: int
    cycles: int
    basis: str
    p_prime: float
    errors: ErrorVolume
    syndromes: SyndromeVolume

    @property
    def shots(self) -> int:
        return self.syndromes.events.shape[0]

    def to_bytes(self) -> bytes:
        head = HEADER.pack(
            MAGIC, VERSION, self.distance, self.cycles, BASIS_CODES[self.basis], 0, self.p_prime, self.shots
        )
        err = _pack(self.errors.flat().reshape(self.shots, -1))
        syn = _pack(self.syndromes.events.reshape(self.shots, -1))
        return head + np.concatenate([err, syn], axis=1).tobytes()

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DatasetContainer":
        if len(blob) < HEADER.size:
            raise ValueError("truncated container header")
        magic, version, d, cycles, basis_code, _, p, shots = HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError("not a dataset container")
        if version != VERSION:
            raise ValueError(f"unsupported container version {version}")
        basis = {v: k for k, v in BASIS_CODES.items()}.get(basis_code)
        if basis is None:
            raise ValueError(f"bad basis code {basis_code}")
        layout = build_layout(d)
        n_err = cycles * layout.rows * layout.cols * 12
        n_syn = (cycles + 1) * layout.rows * layout.cols * 4
        width = 8 * (_words(n_err) + _words(n_syn))
        body = np.frombuffer(blob, dtype=np.uint8, offset=HEADER.size)
        if body.size != shots * width:
            raise ValueError(f"container body has {body.size} bytes, header implies {shots * width}")
        body = body.reshape(shots, width)
        split = 8 * _words(n_err)
        err = _unpack(body[:, :split], n_err)
        syn = _unpack(body[:, split:], n_syn).reshape(shots, cycles + 1, layout.rows, layout.cols, 4)
        return cls(
            d,
            cycles,
            basis,
            p,
            ErrorVolume.from_flat(err, layout, cycles, basis),
            SyndromeVolume(syn, layout, basis),
        )

    @classmethod
    def read(cls, path) -> "DatasetContainer":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
