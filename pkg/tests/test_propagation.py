import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_volume, site_of, zero_raw
from oracles import sequential_frame_oracle
from sqec.lattice import ANCILLA_TYPES, build_layout, data_coord_of, data_physical
from sqec.noise import NoiseConfig, RawErrorBits, cnot_masks, sample
from sqec.propagation import (
    ErrorVolume,
    detection_events,
    detector_slots,
    logical_flip,
    propagate_backward,
    simulate,
)


@pytest.mark.parametrize("d", [3, 5])
@pytest.mark.parametrize("basis", ["X", "Z"])
def test_matches_sequential_oracle(d, basis):
    lay = build_layout(d)
    raw = sample(lay, NoiseConfig(0.02, 3, basis, 77 + d), 1500)
    vol = propagate_backward(raw, lay, basis)
    events, flips = sequential_frame_oracle(lay, raw, basis)
    assert np.array_equal(detection_events(vol).events, events)
    assert np.array_equal(logical_flip(vol, basis), flips)


@pytest.mark.parametrize("basis", ["X", "Z"])
def test_every_single_gate_fault_matches_oracle(basis):
    lay = build_layout(5)
    cycles = 2
    anc, dat = cnot_masks(lay)
    side = np.stack([anc, anc, dat, dat], axis=-1)  # faults the sampler can emit
    faults = [tuple(int(v) for v in f) for f in np.argwhere(side)]
    raw = zero_raw(lay, cycles)
    batch = RawErrorBits(*(np.repeat(a[None], len(faults), axis=0) for a in
                           (raw.idle_x, raw.idle_z, raw.anc_flip, raw.cnot)))
    for i, (r, c, g, b) in enumerate(faults):
        batch.cnot[i, 1, r, c, g, b] = True
    vol = propagate_backward(batch, lay, basis)
    events, flips = sequential_frame_oracle(lay, batch, basis)
    assert np.array_equal(detection_events(vol).events, events)
    assert np.array_equal(logical_flip(vol, basis), flips)


def test_zero_raw_gives_zero_volume():
    lay = build_layout(5)
    vol = propagate_backward(zero_raw(lay, 3), lay)
    assert vol.count() == 0
    assert not detection_events(vol).events.any()


def test_backward_rules_for_gate_bits():
    lay = build_layout(7)
    # data qubit (2, 3): its step-0 partner is the Z ancilla at (3, 4) and its
    # step-1 partner the X ancilla at (2, 4).
    r, c = 2, 3
    dr, dc, ds = data_coord_of(r, c)
    a0 = site_of(r + 1, c + 1)
    a1 = site_of(r, c + 1)
    assert ANCILLA_TYPES[a0[2]] == "Z" and ANCILLA_TYPES[a1[2]] == "X"

    raw = zero_raw(lay, 1)
    raw.cnot[0, a1[0], a1[1], 4 * 1 + a1[2], 2] = True  # X on data just before step 1
    vol = propagate_backward(raw, lay)
    # X on the control of the earlier CNOT also sits on its target
    assert vol.space_x[0, dr, dc, ds] and vol.count() == 2
    assert vol.time_like[0, a0[0], a0[1], a0[2]]

    raw = zero_raw(lay, 1)
    raw.cnot[0, a0[0], a0[1], a0[2], 2] = True  # X on data before its first gate
    vol = propagate_backward(raw, lay)
    assert vol.space_x[0, dr, dc, ds] and vol.count() == 1

    raw = zero_raw(lay, 1)
    raw.cnot[0, a0[0], a0[1], a0[2], 1] = True  # Z on a fresh Z ancilla is a phase
    assert propagate_backward(raw, lay).count() == 0


def reduced(layout, qubits, kind):
    """Lowest-weight representative of a data error up to one ``kind`` stabiliser."""
    best = set(qubits)
    for site in layout.sites(kind):
        alt = set(qubits) ^ set(layout.stabiliser_supports[site])
        if len(alt) < len(best):
            best = alt
    return [data_physical(q) for q in best]


@pytest.mark.parametrize("basis", ["X", "Z"])
def test_hook_errors_perpendicular_to_logicals(basis):
    lay = build_layout(7)
    anc, dat = cnot_masks(lay)
    side = np.stack([anc, anc, dat, dat], axis=-1)
    for r, c, g, b in np.argwhere(side):
        raw = zero_raw(lay, 1)
        raw.cnot[0, r, c, g, b] = True
        vol = propagate_backward(raw, lay, basis)
        zs = reduced(lay, [tuple(q) for q in np.argwhere(vol.space_z[0])], "Z")
        xs = reduced(lay, [tuple(q) for q in np.argwhere(vol.space_x[0])], "X")
        assert len(zs) <= 2 and len(xs) <= 2
        # Z chains that flip the logical run top-bottom, X chains left-right
        assert len({col for _, col in zs}) == len(zs)
        assert len({row for row, _ in xs}) == len(xs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 5, 7]), st.sampled_from(["X", "Z"]))
def test_linearity(seed, d, basis):
    lay = build_layout(d)
    a = random_volume(lay, 3, seed, basis=basis)
    b = random_volume(lay, 3, seed + 1, basis=basis)
    ab = a ^ b
    assert np.array_equal(detection_events(ab).events, detection_events(a).events ^ detection_events(b).events)
    assert logical_flip(ab, basis) == logical_flip(a, basis) ^ logical_flip(b, basis)


@pytest.mark.parametrize("basis", ["X", "Z"])
def test_single_primitive_error_event_count(basis):
    lay = build_layout(5)
    cycles = 3
    for t in range(cycles):
        for r, c, s in lay.data_coords():
            for name in ("space_x", "space_z"):
                vol = ErrorVolume.zeros(lay, cycles, basis)
                getattr(vol, name)[t, r, c, s] = True
                assert detection_events(vol).count() in (1, 2)
        for r, c, k in lay.sites():
            vol = ErrorVolume.zeros(lay, cycles, basis)
            vol.time_like[t, r, c, k] = True
            assert detection_events(vol).count() in (1, 2)


def test_bulk_x_error_flags_two_z_sites():
    lay = build_layout(7)
    r, c = 3, 3
    vol = ErrorVolume.zeros(lay, 4)
    vol.space_x[(1, *data_coord_of(r, c))] = True
    ev = detection_events(vol).events
    hits = {tuple(int(v) for v in h) for h in np.argwhere(ev)}
    neighbours = {site_of(r + dy, c + dx) for dy in (0, 1) for dx in (0, 1)}
    expected = {(1, *s) for s in neighbours if ANCILLA_TYPES[s[2]] == "Z"}
    assert len(expected) == 2 and hits == expected


def test_time_like_error_flags_consecutive_layers():
    lay = build_layout(5)
    site = lay.sites("Z")[3]
    vol = ErrorVolume.zeros(lay, 4)
    vol.time_like[(2, *site)] = True
    hits = {tuple(int(v) for v in h) for h in np.argwhere(detection_events(vol).events)}
    assert hits == {(2, *site), (3, *site)}


@pytest.mark.parametrize("basis", ["X", "Z"])
def test_final_layer_only_for_detecting_type(basis):
    lay = build_layout(5)
    vol, syn = simulate(lay, NoiseConfig(0.05, 3, basis, 3), 400)
    other = [k for k in range(4) if k not in detector_slots(basis)]
    assert not syn.events[:, -1][..., other].any()
    assert syn.events[:, -1].any()
    assert not (syn.events & ~lay.ancilla_presence).any()


def test_logical_flip_examples():
    lay = build_layout(5)
    assert logical_flip(ErrorVolume.zeros(lay, 2, "Z")) == 0

    # a stabiliser applied as data errors is logically trivial
    for kind, comp in (("X", "space_x"), ("Z", "space_z")):
        site = lay.sites(kind)[5]
        vol = ErrorVolume.zeros(lay, 2)
        for q in lay.stabiliser_supports[site]:
            getattr(vol, comp)[(0, *q)] = True
        assert not detection_events(vol).events.any()
        assert logical_flip(vol, "X") == 0 and logical_flip(vol, "Z") == 0

    # an X chain across a full row crosses the left-column support once
    vol = ErrorVolume.zeros(lay, 2, "X")
    for col in range(5):
        vol.space_x[(0, *data_coord_of(2, col))] = True
    assert not detection_events(vol).events.any()
    assert logical_flip(vol, "X") == 1

    # the matching Z chain runs down a column
    vol = ErrorVolume.zeros(lay, 2, "Z")
    for row in range(5):
        vol.space_z[(1, *data_coord_of(row, 3))] = True
    assert not detection_events(vol).events.any()
    assert logical_flip(vol, "Z") == 1


def test_simulate_is_chunk_invariant():
    lay = build_layout(5)
    cfg = NoiseConfig(0.01, 5, "Z", 99)
    v1, s1 = simulate(lay, cfg, 300)
    v2, s2 = simulate(lay, cfg, 100, start=200)
    assert np.array_equal(s1.events[200:], s2.events)
    assert np.array_equal(v1.flat()[200:], v2.flat())
