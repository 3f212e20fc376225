"""Matching decoders on detector graphs built from the unit-cell noise model.

Two graph modes are provided:

* ``uniform``: unit-weight edges for single data-qubit errors (space) and
  single measurement flips (time), i.e. a rectilinear lattice;
* ``weighted``: every single fault of the circuit noise model is pushed
  through :func:`propagate_backward`; faults with at most two detection
  events become edges (including diagonal hook edges), larger ones are split
  into their primitive bits.  Parallel contributions are merged as
  independent flips and weighted by ``ln((1 - q) / q)``.

Each edge carries the error pattern it stands for (flat positions of an
:class:`ErrorVolume`) and whether that pattern flips the tracked logical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pymatching
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .lattice import ANCILLA_TYPES, CodeLayout, logical_mask
from .noise import class1_flip_probs, cnot_masks, compound_depol, idle_steps
from .propagation import (
    DETECTOR_TYPE,
    READOUT_LOGICAL,
    ErrorVolume,
    SyndromeVolume,
    detector_slots,
    flat_index,
    propagate_backward,
    space_parity,
)
from .noise import RawErrorBits

MODES = ("uniform", "weighted")
EXACT_LIMIT = 12  # largest event count solved by the subset dynamic programme


def xor_prob(q1: float, q2: float) -> float:
    """Probability that exactly one of two independent flips occurs."""
    return q1 * (1.0 - q2) + q2 * (1.0 - q1)


@dataclass(eq=False)
class DecodingGraph:
    """Detector graph for one basis.

    Nodes ``0 .. n_nodes - 1`` are detectors ordered by (layer, row, col,
    slot); node ``n_nodes`` is the virtual boundary.  Edge arrays are
    parallel: ``u < v`` with ``v == boundary`` for boundary edges.
    """

    layout: CodeLayout
    cycles: int
    basis: str
    mode: str
    p_prime: Optional[float]
    detector_mask: np.ndarray  # [cycles + 1, rows, cols, 2]
    nodes: np.ndarray  # [n_nodes, 4] (layer, row, col, slot within detector type)
    u: np.ndarray
    v: np.ndarray
    prob: np.ndarray
    weight: np.ndarray
    parity: np.ndarray
    patterns: List[np.ndarray] = field(repr=False)
    parity_conflicts: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.u)

    def edge_lookup(self) -> Dict[Tuple[int, int], int]:
        return _cached(self, "_lookup", lambda: {(a, b): i for i, (a, b) in enumerate(zip(self.u.tolist(), self.v.tolist()))})

    def syndrome_vector(self, syn) -> np.ndarray:
        """Detector bits ``[..., n_nodes]`` from a syndrome volume or event array."""
        events = syn.events if isinstance(syn, SyndromeVolume) else np.asarray(syn)
        det = events[..., list(detector_slots(self.basis))]
        return det[..., self.detector_mask]

    def matcher(self) -> pymatching.Matching:
        """pymatching instance whose single observable is the logical parity."""

        def build():
            m = pymatching.Matching()
            for i in range(self.n_edges):
                ids = {0} if self.parity[i] else set()
                w = float(self.weight[i])
                if self.v[i] == self.boundary:
                    m.add_boundary_edge(int(self.u[i]), fault_ids=ids, weight=w)
                else:
                    m.add_edge(int(self.u[i]), int(self.v[i]), fault_ids=ids, weight=w)
            m.ensure_num_fault_ids(1)
            return m

        return _cached(self, "_matcher", build)

    def sparse(self) -> csr_matrix:
        """Symmetric adjacency including the boundary node (parallel edges already merged)."""

        def build():
            n = self.n_nodes + 1
            rows = np.concatenate([self.u, self.v])
            cols = np.concatenate([self.v, self.u])
            w = np.concatenate([self.weight, self.weight])
            return csr_matrix((w, (rows, cols)), shape=(n, n))

        return _cached(self, "_sparse", build)


def _cached(obj, name, build):
    if name not in obj.__dict__:
        obj.__dict__[name] = build()
    return obj.__dict__[name]


# ----------------------------------------------------------------------------
# Graph construction


def _detector_layout(layout: CodeLayout, cycles: int, basis: str):
    slots = list(detector_slots(basis))
    mask = np.broadcast_to(layout.ancilla_presence[..., slots], (cycles + 1, layout.rows, layout.cols, 2)).copy()
    nodes = np.argwhere(mask)
    node_id = -np.ones(mask.shape, dtype=np.int64)
    node_id[mask] = np.arange(len(nodes))
    return mask, nodes, node_id


class _EdgeAccumulator:
    """Merges parallel contributions keyed by endpoint pair."""

    def __init__(self, boundary: int):
        self.boundary = boundary
        self.q: Dict[Tuple[int, int], float] = {}
        self.best: Dict[Tuple[int, int], Tuple[float, bool, tuple]] = {}
        self.conflicts = 0

    def add(self, nodes: List[int], q: float, parity: bool, pattern: tuple) -> None:
        if len(nodes) == 1:
            key = (nodes[0], self.boundary)
        else:
            key = (min(nodes), max(nodes))
        self.q[key] = xor_prob(self.q.get(key, 0.0), q)
        prev = self.best.get(key)
        if prev is not None and prev[1] != parity:
            self.conflicts += 1
        # The representative pattern is the most likely one, and the
        # simplest one among equally likely candidates.
        if prev is None or (q, -len(pattern)) > (prev[0], -len(prev[2])):
            self.best[key] = (q, parity, pattern)


def _component_bits(layout: CodeLayout, basis: str):
    """Channel offsets for the space component a basis tracks and its detector slots."""
    space_base = 4 if basis == "Z" else 0
    return space_base, list(detector_slots(basis))


def _primitive_events(layout, basis, node_id, t, kind, r, c, s):
    """Detectors and flat positions of one primitive bit at cycle ``t``."""
    space_base, det_slots = _component_bits(layout, basis)
    if kind == "space":
        probe = np.zeros((layout.rows, layout.cols, 4), dtype=bool)
        probe[r, c, s] = True
        zeros = np.zeros_like(probe)
        flips = space_parity(layout, zeros, probe) if basis == "Z" else space_parity(layout, probe, zeros)
        sites = np.argwhere(flips[..., det_slots])
        nodes = [int(node_id[t, a, b, k]) for a, b, k in sites]
        return nodes, (int(flat_index(layout, t, r, c, space_base + s)),)
    j = det_slots.index(s)
    nodes = [int(node_id[t, r, c, j]), int(node_id[t + 1, r, c, j])]
    return nodes, (int(flat_index(layout, t, r, c, 8 + s)),)


def _uniform_edges(layout, cycles, basis, node_id, acc):
    _, det_slots = _component_bits(layout, basis)
    mask = logical_mask(layout, READOUT_LOGICAL[basis])
    for t in range(cycles):
        for r, c, s in layout.data_coords():
            nodes, pat = _primitive_events(layout, basis, node_id, t, "space", r, c, s)
            acc.add(nodes, 1.0, bool(mask[r, c, s]), pat)
        for r, c, k in layout.sites(DETECTOR_TYPE[basis]):
            nodes, pat = _primitive_events(layout, basis, node_id, t, "time", r, c, k)
            acc.add(nodes, 1.0, False, pat)


def _single_faults(layout: CodeLayout, p_prime: float):
    """Every single fault of one cycle as raw bits, with its category.

    Returns ``(raw, category, prob)`` where category 0 marks idle faults whose
    probability depends on the cycle (``prob`` then holds the multiplier of
    the compound idle rate).
    """
    rows, cols = layout.rows, layout.cols
    entries = []  # (kind, position tuple, bits, category, prob)
    for r, c, s in layout.data_coords():
        for bits in ((1, 0), (0, 1), (1, 1)):
            entries.append(("idle", (r, c, s), bits, 0, 0.25))
    pz, px = class1_flip_probs(p_prime)
    for r, c, k in layout.sites():
        entries.append(("anc", (r, c, k), None, 1, px if ANCILLA_TYPES[k] == "X" else pz))
    anc_side, dat_side = cnot_masks(layout)
    for r in range(rows):
        for c in range(cols):
            for g in range(16):
                side = np.array([anc_side[r, c, g]] * 2 + [dat_side[r, c, g]] * 2)
                if not side.any():
                    continue
                for pattern in range(1, 16):
                    bits = np.array([(pattern >> b) & 1 for b in range(4)], dtype=bool) & side
                    if bits.any():
                        entries.append(("cnot", (r, c, g), tuple(bits), 1, p_prime / 16.0))
    n = len(entries)
    idle_x = np.zeros((n, 1, rows, cols, 4), dtype=bool)
    idle_z = np.zeros_like(idle_x)
    anc = np.zeros_like(idle_x)
    cnot = np.zeros((n, 1, rows, cols, 16, 4), dtype=bool)
    for i, (kind, pos, bits, _, _) in enumerate(entries):
        if kind == "idle":
            idle_x[(i, 0) + pos] = bits[0]
            idle_z[(i, 0) + pos] = bits[1]
        elif kind == "anc":
            anc[(i, 0) + pos] = True
        else:
            cnot[(i, 0) + pos] = bits
    raw = RawErrorBits(idle_x, idle_z, anc, cnot)
    category = np.array([e[3] for e in entries])
    prob = np.array([e[4] for e in entries])
    return raw, category, prob


def _fault_signatures(layout: CodeLayout, basis: str, p_prime: float):
    """Unique single-cycle signatures with their merged probabilities.

    Each signature is ``(space_sites, time_sites, space_bits, time_bits,
    flip)`` for the tracked basis; the value is ``(q_fixed, n_idle)`` with
    ``n_idle`` idle faults of rate ``p_idle / 4`` sharing that signature.
    """
    raw, category, prob = _single_faults(layout, p_prime)
    vol = propagate_backward(raw, layout, basis)
    space = (vol.space_z if basis == "Z" else vol.space_x)[:, 0]
    zeros = np.zeros_like(space)
    _, det_slots = _component_bits(layout, basis)
    flips = space_parity(layout, zeros, space) if basis == "Z" else space_parity(layout, space, zeros)
    space_sites = flips[..., det_slots]
    time_sites = vol.time_like[:, 0][..., det_slots]
    mask = logical_mask(layout, READOUT_LOGICAL[basis])
    parity = (space & mask).reshape(len(space), -1).sum(axis=1) % 2 == 1

    table: Dict[tuple, List[float]] = {}
    for i in range(len(space)):
        ss = tuple(map(tuple, np.argwhere(space_sites[i])))
        ts = tuple(map(tuple, np.argwhere(time_sites[i])))
        if not ss and not ts:
            continue
        key = (ss, ts, tuple(map(tuple, np.argwhere(space[i]))), bool(parity[i]))
        entry = table.setdefault(key, [0.0, 0])
        if category[i] == 0:
            entry[1] += 1
        else:
            entry[0] = xor_prob(entry[0], float(prob[i]))
    return table


def _weighted_edges(layout, cycles, basis, node_id, p_prime, acc):
    space_base, det_slots = _component_bits(layout, basis)
    table = _fault_signatures(layout, basis, p_prime)
    mask = logical_mask(layout, READOUT_LOGICAL[basis])
    for t in range(cycles):
        p_idle = compound_depol(p_prime, idle_steps(t, cycles)) / 4.0
        for (ss, ts, bits, flip), (q_fixed, n_idle) in table.items():
            q = xor_prob(q_fixed, (1.0 - (1.0 - 2.0 * p_idle) ** n_idle) / 2.0)
            if q <= 0.0:
                continue
            events = {int(node_id[t, a, b, k]) for a, b, k in ss}
            for a, b, k in ts:
                events ^= {int(node_id[t, a, b, k]), int(node_id[t + 1, a, b, k])}
            pattern = tuple(int(flat_index(layout, t, r, c, space_base + s)) for r, c, s in bits)
            pattern += tuple(int(flat_index(layout, t, a, b, 8 + det_slots[k])) for a, b, k in ts)
            if 1 <= len(events) <= 2:
                acc.add(sorted(events), q, flip, tuple(sorted(pattern)))
                continue
            # More than two detectors: split into primitive bits.
            for r, c, s in bits:
                nodes, pat = _primitive_events(layout, basis, node_id, t, "space", r, c, s)
                acc.add(nodes, q, bool(mask[r, c, s]), pat)
            for a, b, k in ts:
                nodes, pat = _primitive_events(layout, basis, node_id, t, "time", a, b, det_slots[k])
                acc.add(nodes, q, False, pat)


def build_graph(
    layout: CodeLayout,
    cycles: int,
    mode: str = "uniform",
    p_prime: Optional[float] = None,
    basis: str = "Z",
) -> DecodingGraph:
    """Construct the detector graph for ``basis`` errors."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if basis not in DETECTOR_TYPE:
        raise ValueError(f"basis must be 'X' or 'Z', got {basis!r}")
    if int(cycles) != cycles or cycles < 1:
        raise ValueError(f"cycles must be a positive integer, got {cycles}")
    if mode == "weighted":
        if p_prime is None or not 0.0 < p_prime < 0.5:
            raise ValueError("weighted mode needs 0 < p_prime < 0.5")
    mask, nodes, node_id = _detector_layout(layout, cycles, basis)
    acc = _EdgeAccumulator(boundary=len(nodes))
    if mode == "uniform":
        _uniform_edges(layout, cycles, basis, node_id, acc)
    else:
        _weighted_edges(layout, cycles, basis, node_id, p_prime, acc)

    keys = sorted(acc.q)
    u = np.array([k[0] for k in keys], dtype=np.int64)
    v = np.array([k[1] for k in keys], dtype=np.int64)
    parity = np.array([acc.best[k][1] for k in keys], dtype=bool)
    patterns = [np.array(acc.best[k][2], dtype=np.int64) for k in keys]
    if mode == "uniform":
        prob = np.full(len(keys), np.nan)
        weight = np.ones(len(keys))
    else:
        prob = np.array([acc.q[k] for k in keys])
        weight = np.log((1.0 - prob) / prob)
    return DecodingGraph(
        layout, int(cycles), basis, mode, p_prime, mask, nodes, u, v, prob, weight, parity,
        patterns, acc.conflicts,
    )


# ----------------------------------------------------------------------------
# Matching


@dataclass
class Matching:
    """Matched node pairs; the boundary node may appear in several pairs."""

    pairs: List[Tuple[int, int]]
    weight: float


def _subset_dp(pair_dist: np.ndarray, boundary_dist: np.ndarray):
    """Exact minimum pairing with a reusable boundary, O(2^n n)."""
    n = len(boundary_dist)
    full = (1 << n) - 1
    best = np.full(1 << n, np.inf)
    choice = np.zeros(1 << n, dtype=np.int64)
    best[0] = 0.0
    for mask in range(1, full + 1):
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        cand = best[rest] + boundary_dist[i]
        pick = -1
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            w = best[rest & ~(1 << j)] + pair_dist[i, j]
            if w < cand:
                cand, pick = w, j
        best[mask] = cand
        choice[mask] = pick
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = choice[mask]
        if j < 0:
            pairs.append((i, -1))
            mask &= ~(1 << i)
        else:
            pairs.append((i, int(j)))
            mask &= ~((1 << i) | (1 << int(j)))
    return pairs


def _blossom(pair_dist: np.ndarray, boundary_dist: np.ndarray):
    """Minimum pairing via maximum-weight matching on a doubled graph.

    Each event gets a private boundary copy; copies are joined to each other
    at zero cost, so any subset of events can go to the boundary.
    """
    import networkx as nx

    n = len(boundary_dist)
    big = float(pair_dist[np.isfinite(pair_dist)].sum() + boundary_dist.sum() + 1.0)
    g = nx.Graph()
    for i in range(n):
        for j in range(i + 1, n):
            if np.isfinite(pair_dist[i, j]):
                g.add_edge(i, j, weight=big - pair_dist[i, j])
                g.add_edge(n + i, n + j, weight=big)
        g.add_edge(i, n + i, weight=big - boundary_dist[i])
    mate = nx.max_weight_matching(g, maxcardinality=True)
    pairs = []
    for a, b in mate:
        a, b = min(a, b), max(a, b)
        if b < n:
            pairs.append((a, b))
        elif a < n:
            pairs.append((a, -1))
    return pairs


def _event_distances(graph: DecodingGraph, events: np.ndarray):
    dist, pred = dijkstra(graph.sparse(), directed=False, indices=events, return_predecessors=True)
    return dist, pred


def match_events(
    graph: DecodingGraph, syn, basis: Optional[str] = None, force_blossom: bool = False
) -> Matching:
    """Minimum-weight perfect matching of the detection events in ``syn``.

    Distances come from Dijkstra on the detector graph.  Up to
    :data:`EXACT_LIMIT` events are matched by exhaustive dynamic programming,
    larger instances by the blossom algorithm.
    """
    return _match(graph, syn, basis, force_blossom)[0]


def _match(graph, syn, basis, force_blossom):
    if basis is not None and basis != graph.basis:
        raise ValueError(f"graph decodes {graph.basis} errors, not {basis}")
    events = np.flatnonzero(graph.syndrome_vector(syn))
    if len(events) == 0:
        return Matching([], 0.0), events, None
    dist, pred = _event_distances(graph, events)
    pair_dist = dist[:, events]
    boundary_dist = dist[:, graph.boundary]
    if len(events) <= EXACT_LIMIT and not force_blossom:
        local = _subset_dp(pair_dist, boundary_dist)
    else:
        local = _blossom(pair_dist, boundary_dist)
    pairs, total = [], 0.0
    for i, j in local:
        if j < 0:
            pairs.append((int(events[i]), graph.boundary))
            total += boundary_dist[i]
        else:
            pairs.append((int(events[i]), int(events[j])))
            total += pair_dist[i, j]
    return Matching(pairs, float(total)), events, pred


def _path_edges(graph: DecodingGraph, pred_row: np.ndarray, target: int) -> List[int]:
    lookup = graph.edge_lookup()
    out = []
    node = target
    while pred_row[node] >= 0:
        prev = int(pred_row[node])
        out.append(lookup[(min(prev, node), max(prev, node))])
        node = prev
    return out


def correction_from_edges(graph: DecodingGraph, edges) -> Tuple[ErrorVolume, bool]:
    """ErrorVolume and logical parity of a multiset of edges."""
    n = graph.cycles * graph.layout.rows * graph.layout.cols * 12
    flat = np.zeros(n, dtype=bool)
    flip = False
    for e in edges:
        flat[graph.patterns[e]] ^= True
        flip ^= bool(graph.parity[e])
    return ErrorVolume.from_flat(flat, graph.layout, graph.cycles, graph.basis), flip


def decode(
    graph: DecodingGraph, syn, basis: Optional[str] = None, exact: bool = False
) -> Tuple[ErrorVolume, bool]:
    """Correction volume and predicted logical flip for one shot.

    By default pymatching solves the matching; ``exact=True`` routes through
    :func:`match_events` and expands each pair along its shortest path.
    """
    if basis is not None and basis != graph.basis:
        raise ValueError(f"graph decodes {graph.basis} errors, not {basis}")
    if exact:
        matching, events, pred = _match(graph, syn, basis, False)
        edges = []
        if len(events):
            row_of = {int(e): i for i, e in enumerate(events)}
            for a, b in matching.pairs:
                edges += _path_edges(graph, pred[row_of[a]], b)
        return correction_from_edges(graph, edges)
    det = graph.syndrome_vector(syn).astype(np.uint8)
    if not det.any():
        return correction_from_edges(graph, [])
    pairs = graph.matcher().decode_to_edges_array(det)
    lookup = graph.edge_lookup()
    edges = []
    for a, b in pairs:
        a = graph.boundary if a < 0 else int(a)
        b = graph.boundary if b < 0 else int(b)
        edges.append(lookup[(min(a, b), max(a, b))])
    return correction_from_edges(graph, edges)


def decode_batch(graph: DecodingGraph, syn) -> np.ndarray:
    """Predicted logical flips for a batch of shots."""
    det = graph.syndrome_vector(syn)
    det = det.reshape(-1, graph.n_nodes).astype(np.uint8)
    pred = graph.matcher().decode_batch(det)
    return pred[:, 0].astype(bool)


def matching_weight(graph: DecodingGraph, syn) -> float:
    """Total weight of pymatching's solution for one shot."""
    det = graph.syndrome_vector(syn).astype(np.uint8)
    _, w = graph.matcher().decode(det, return_weight=True)
    return float(w)
