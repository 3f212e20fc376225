"""Space-time simplifiers: syndrome-neutral patterns used to tidy error volumes.

Two families generate the group:

* stabiliser type: a stabiliser applied as space errors in one cycle;
* pair type: the same data error in cycles ``t`` and ``t + 1`` together with
  time-like flips, in cycle ``t``, of the stabilisers that error anticommutes
  with.

Every generator is stored as the set of positions it occupies in the flat
(cycle, row, col, channel) ordering of :meth:`ErrorVolume.flat`.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .lattice import ANCILLA_TYPES, CodeLayout
from .propagation import ErrorVolume, flat_index

STABILISER = "stabiliser"
PAIR = "pair"


@dataclass(frozen=True)
class Simplifier:
    """One generator; ``indices`` are sorted flat positions.

    ``origin`` is the (cycle, row, col) of the cell that owns it: the
    ancilla's cell for loops, the data qubit's cell for pairs.
    """

    indices: np.ndarray
    kind: str
    cycles: int
    layout: CodeLayout
    origin: tuple = ()

    @property
    def size(self) -> int:
        return len(self.indices)

    def pattern(self, basis: str = "Z") -> ErrorVolume:
        n = self.cycles * self.layout.rows * self.layout.cols * 12
        flat = np.zeros(n, dtype=bool)
        flat[self.indices] = True
        return ErrorVolume.from_flat(flat, self.layout, self.cycles, basis)


def _containing_stabilisers(layout: CodeLayout) -> Dict[tuple, List[tuple]]:
    """Data coordinate -> stabiliser sites whose support contains it."""
    out = defaultdict(list)
    for site, support in layout.stabiliser_supports.items():
        for q in support:
            out[q].append(site)
    return out


def simplifier_generators(layout: CodeLayout, cycles: int) -> List[Simplifier]:
    """All generators, in raster order of (cycle, row, col, kind)."""
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    containing = _containing_stabilisers(layout)
    out = []
    for t in range(cycles):
        for r in range(layout.rows):
            for c in range(layout.cols):
                cell = []
                for k, kind in enumerate(ANCILLA_TYPES):
                    if not layout.presence[r, c, 4 + k]:
                        continue
                    # X stabilisers act with X (channels 0-3), Z with Z (4-7).
                    base = 0 if kind == "X" else 4
                    idx = [flat_index(layout, t, qr, qc, base + s)
                           for qr, qc, s in layout.stabiliser_supports[(r, c, k)]]
                    cell.append((STABILISER, idx))
                if t + 1 < cycles:
                    for s in range(4):
                        if not layout.presence[r, c, s]:
                            continue
                        for base, detected_by in ((0, "Z"), (4, "X")):
                            idx = [flat_index(layout, t, r, c, base + s),
                                   flat_index(layout, t + 1, r, c, base + s)]
                            for ar, ac, k in containing[(r, c, s)]:
                                if ANCILLA_TYPES[k] == detected_by:
                                    idx.append(flat_index(layout, t, ar, ac, 8 + k))
                            cell.append((PAIR, idx))
                for kind, idx in cell:
                    out.append(Simplifier(np.sort(np.asarray(idx, dtype=np.int64)), kind, cycles, layout, (t, r, c)))
    return out


def apply_simplifier(vol: ErrorVolume, s: Simplifier) -> ErrorVolume:
    """XOR a generator into a volume (any leading shot axes)."""
    if vol.space_x.shape[-4:] != (s.cycles, s.layout.rows, s.layout.cols, 4):
        raise ValueError("simplifier does not match the volume shape")
    flat = vol.flat().copy()
    flat[..., s.indices] ^= True
    return ErrorVolume.from_flat(flat, vol.layout, s.cycles, vol.basis)


def _index_table(generators: List[Simplifier], sentinel: int):
    width = max(g.size for g in generators)
    table = np.full((len(generators), width), sentinel, dtype=np.int64)
    for i, g in enumerate(generators):
        table[i, : g.size] = g.indices
    sizes = np.array([g.size for g in generators])
    return table, sizes


def greedy_reduce(
    vol: ErrorVolume, generators: List[Simplifier], max_sweeps: int = 10_000
) -> ErrorVolume:
    """Greedy fixed point of the simplifier group.

    Generators with more than half of their bits active are applied in
    raster order until none remains.  Then one tie sweep applies each
    generator that is exactly half active and whose smallest position is
    active; whenever that changes something the strict phase runs again.
    Each application lowers (active count, volume read as a binary number
    with position 0 most significant), so the loop terminates.
    """
    if not generators:
        return vol.copy()
    flat = vol.flat()
    lead = flat.shape[:-1]
    n = flat.shape[-1]
    # Position-major so that each generator touches a few contiguous rows.
    bits = np.zeros((n + 1, int(np.prod(lead, dtype=np.int64))), dtype=bool)
    bits[:n] = flat.reshape(-1, n).T
    table, sizes = _index_table(generators, sentinel=n)
    first = table[:, 0]

    def sweep(tie: bool) -> bool:
        changed = False
        for g in range(len(table)):
            rows = table[g, : sizes[g]]
            active = bits[rows].sum(axis=0, dtype=np.int32) * 2
            if tie:
                fire = (active == sizes[g]) & bits[first[g]]
            else:
                fire = active > sizes[g]
            if fire.any():
                bits[rows] ^= fire
                changed = True
        return changed

    for _ in range(max_sweeps):
        while sweep(tie=False):
            pass
        if not sweep(tie=True):
            break
    else:  # pragma: no cover - guarded by the termination argument above
        raise RuntimeError("greedy_reduce did not converge")

    out = bits[:n].T.reshape(*lead, n)
    return ErrorVolume.from_flat(out, vol.layout, vol.cycles, vol.basis)
