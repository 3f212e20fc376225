"""Rotated surface-code geometry on a grid of unit cells.

Each unit cell holds up to four data qubits and four stabiliser ancillas.
Cell ``(R, C)`` with in-cell offset ``(a, b)`` maps to

* data qubit ``(r, c) = (2R + a - 1, 2C + b - 1)``
* ancilla ``(i, j) = (2R + a - 1, 2C + b - 1)``

where ancilla ``(i, j)`` sits on the corner shared by data rows ``i-1, i``
and columns ``j-1, j``.  The outermost ring of slots is always empty, which
gives the ``floor((d + 3) / 2)`` cell grid and doubles as zero padding.

Slot numbering::

    data slots (clockwise)      ancilla slots
        0  1                      X0  Z0
        3  2                      Z1  X1

Internally most modules work on the *grid form* of a cell array: an array
``[..., 2*rows, 2*cols]`` where grid ``(y, x)`` is cell ``(y // 2, x // 2)``
at offset ``(y % 2, x % 2)``.  :func:`to_grid` and :func:`from_grid`
convert between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Tuple

import numpy as np

DATA_OFFSETS = ((0, 0), (0, 1), (1, 1), (1, 0))
ANCILLA_OFFSETS = ((0, 0), (1, 1), (0, 1), (1, 0))
ANCILLA_NAMES = ("X0", "X1", "Z0", "Z1")
ANCILLA_TYPES = ("X", "X", "Z", "Z")

# Data neighbour offsets of an ancilla in grid coordinates.
NW, NE, SW, SE = (-1, -1), (-1, 0), (0, -1), (0, 0)

# CNOT schedule: direction of the data partner at each of the four CNOT steps.
# X ancillas follow an N-shaped order (hook pair NE/SE is vertical), Z
# ancillas a Z-shaped order (hook pair SW/SE is horizontal).  At every step
# both directions lie in the same diagonal class, so no data qubit is
# addressed twice.
SCHEDULE = {
    "X": (NW, SW, NE, SE),
    "Z": (NW, NE, SW, SE),
}

Cell = Tuple[int, int]
DataCoord = Tuple[int, int, int]  # (row, col, data slot)
Site = Tuple[int, int, int]  # (row, col, ancilla slot)


def grid_dims(distance: int) -> Tuple[int, int]:
    """Cell-grid shape needed for a distance-``distance`` rotated code."""
    _check_distance(distance)
    n = (distance + 3) // 2
    return n, n


def _check_distance(distance: int) -> None:
    if isinstance(distance, bool) or not isinstance(distance, (int, np.integer)):
        raise TypeError(f"distance must be an integer, got {distance!r}")
    if distance < 3 or distance % 2 == 0:
        raise ValueError(f"distance must be odd and >= 3, got {distance}")


def to_grid(arr: np.ndarray, kind: str) -> np.ndarray:
    """Map ``[..., rows, cols, 4]`` slot arrays to ``[..., 2rows, 2cols]``."""
    offsets = DATA_OFFSETS if kind == "data" else ANCILLA_OFFSETS
    *lead, rows, cols, four = arr.shape
    assert four == 4
    out = np.zeros((*lead, 2 * rows, 2 * cols), dtype=arr.dtype)
    for s, (a, b) in enumerate(offsets):
        out[..., a::2, b::2] = arr[..., s]
    return out


def from_grid(grid: np.ndarray, kind: str) -> np.ndarray:
    """Inverse of :func:`to_grid`."""
    offsets = DATA_OFFSETS if kind == "data" else ANCILLA_OFFSETS
    return np.stack([grid[..., a::2, b::2] for a, b in offsets], axis=-1)


def shift_from(grid: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[..., y, x] = grid[..., y + dy, x + dx]`` with zero fill."""
    out = np.zeros_like(grid)
    h, w = grid.shape[-2:]
    ys_dst = slice(max(0, -dy), h - max(0, dy))
    xs_dst = slice(max(0, -dx), w - max(0, dx))
    ys_src = slice(max(0, dy), h - max(0, -dy))
    xs_src = slice(max(0, dx), w - max(0, -dx))
    out[..., ys_dst, xs_dst] = grid[..., ys_src, xs_src]
    return out


def shift_to(grid: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[..., y + dy, x + dx] = grid[..., y, x]`` with zero fill."""
    return shift_from(grid, -dy, -dx)


@dataclass(frozen=True, eq=False)
class CodeLayout:
    """Immutable geometry of one rotated surface code.

    ``presence`` is ``[rows, cols, 8]``: data slots 0-3, then ancilla slots
    X0, X1, Z0, Z1.  Stabiliser supports list data coordinates in CNOT
    schedule order.
    """

    distance: int
    rows: int
    cols: int
    presence: np.ndarray = field(repr=False)
    stabiliser_supports: Dict[Site, Tuple[DataCoord, ...]] = field(repr=False)
    logical_supports: Dict[str, FrozenSet[DataCoord]] = field(repr=False)

    @property
    def data_presence(self) -> np.ndarray:
        return self.presence[..., :4]

    @property
    def ancilla_presence(self) -> np.ndarray:
        return self.presence[..., 4:]

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return 2 * self.rows, 2 * self.cols

    # Grid-form masks, cached on first access.
    @property
    def data_grid(self) -> np.ndarray:
        return self._cached("_data_grid", lambda: to_grid(self.data_presence, "data"))

    @property
    def xanc_grid(self) -> np.ndarray:
        def build():
            p = self.ancilla_presence.copy()
            p[..., 2:] = False
            return to_grid(p, "ancilla")

        return self._cached("_xanc_grid", build)

    @property
    def zanc_grid(self) -> np.ndarray:
        def build():
            p = self.ancilla_presence.copy()
            p[..., :2] = False
            return to_grid(p, "ancilla")

        return self._cached("_zanc_grid", build)

    def anc_grid(self, kind: str) -> np.ndarray:
        return self.xanc_grid if kind == "X" else self.zanc_grid

    def _cached(self, name, build):
        try:
            return self.__dict__[name]
        except KeyError:
            value = build()
            value.setflags(write=False)
            object.__setattr__(self, name, value)
            return value

    def gate_mask(self, kind: str, step: int) -> np.ndarray:
        """Ancilla-grid mask of CNOTs applied by ``kind`` ancillas at ``step``."""
        dy, dx = SCHEDULE[kind][step]
        return self.anc_grid(kind) & shift_from(self.data_grid, dy, dx)

    def sites(self, kind: str | None = None) -> List[Site]:
        """Present ancilla sites in raster order, optionally of one type."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                for k in range(4):
                    if self.presence[r, c, 4 + k] and kind in (None, ANCILLA_TYPES[k]):
                        out.append((r, c, k))
        return out

    def data_coords(self) -> List[DataCoord]:
        return [
            (r, c, s)
            for r in range(self.rows)
            for c in range(self.cols)
            for s in range(4)
            if self.presence[r, c, s]
        ]

    def n_data(self) -> int:
        return int(self.data_presence.sum())


def data_physical(coord: DataCoord) -> Tuple[int, int]:
    r, c, s = coord
    a, b = DATA_OFFSETS[s]
    return 2 * r + a - 1, 2 * c + b - 1


def ancilla_physical(site: Site) -> Tuple[int, int]:
    r, c, k = site
    a, b = ANCILLA_OFFSETS[k]
    return 2 * r + a - 1, 2 * c + b - 1


def data_coord_of(row: int, col: int) -> DataCoord:
    """Cell coordinate of physical data qubit ``(row, col)``."""
    y, x = row + 1, col + 1
    return y // 2, x // 2, DATA_OFFSETS.index((y % 2, x % 2))


def _ancilla_present(i: int, j: int, d: int) -> bool:
    kind = "X" if (i + j) % 2 == 0 else "Z"
    inner_i = 1 <= i <= d - 1
    inner_j = 1 <= j <= d - 1
    if inner_i and inner_j:
        return True
    if inner_j and i in (0, d):
        return kind == "Z"
    if inner_i and j in (0, d):
        return kind == "X"
    return False


def build_layout(distance: int) -> CodeLayout:
    """Construct the unit-cell layout of a distance-``distance`` code."""
    rows, cols = grid_dims(distance)
    d = distance
    presence = np.zeros((rows, cols, 8), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            for s, (a, b) in enumerate(DATA_OFFSETS):
                pr, pc = 2 * r + a - 1, 2 * c + b - 1
                presence[r, c, s] = 0 <= pr < d and 0 <= pc < d
            for k, (a, b) in enumerate(ANCILLA_OFFSETS):
                i, j = 2 * r + a - 1, 2 * c + b - 1
                present = 0 <= i <= d and 0 <= j <= d and _ancilla_present(i, j, d)
                if present:
                    assert ("X" if (i + j) % 2 == 0 else "Z") == ANCILLA_TYPES[k]
                presence[r, c, 4 + k] = present
    presence.setflags(write=False)

    supports: Dict[Site, Tuple[DataCoord, ...]] = {}
    for r in range(rows):
        for c in range(cols):
            for k in range(4):
                if not presence[r, c, 4 + k]:
                    continue
                i, j = ancilla_physical((r, c, k))
                coords = []
                for dy, dx in SCHEDULE[ANCILLA_TYPES[k]]:
                    pr, pc = i + dy, j + dx
                    if 0 <= pr < d and 0 <= pc < d:
                        coords.append(data_coord_of(pr, pc))
                supports[(r, c, k)] = tuple(coords)

    logical = {
        "X": frozenset(data_coord_of(0, col) for col in range(d)),
        "Z": frozenset(data_coord_of(row, 0) for row in range(d)),
    }
    return CodeLayout(d, rows, cols, presence, supports, logical)


def stabiliser_support(layout: CodeLayout, site: Site) -> List[DataCoord]:
    """Data qubits measured by the ancilla at ``site`` in CNOT order."""
    try:
        return list(layout.stabiliser_supports[tuple(site)])
    except KeyError:
        raise KeyError(f"no stabiliser present at {site}") from None


def logical_mask(layout: CodeLayout, kind: str) -> np.ndarray:
    """``[rows, cols, 4]`` mask of the ``kind`` logical operator support."""
    mask = np.zeros((layout.rows, layout.cols, 4), dtype=bool)
    for r, c, s in layout.logical_supports[kind]:
        mask[r, c, s] = True
    return mask
