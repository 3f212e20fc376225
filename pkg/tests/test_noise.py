import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import depolarising_marginal
from sqec.lattice import build_layout
from sqec.noise import NoiseConfig, class1_flip_probs, cnot_masks, compound_depol, idle_steps, sample, sample_shot


def within_sigma(count, n, q, k=3.0):
    sigma = math.sqrt(n * q * (1 - q))
    return abs(count - n * q) <= k * sigma + 1e-9


def test_compound_depol_examples():
    assert compound_depol(0.003, 1) == pytest.approx(0.003, abs=1e-15)
    assert compound_depol(0.0, 7) == 0.0
    # 1 - 0.999**4 = 1 - 0.996005996001
    assert compound_depol(0.001, 4) == pytest.approx(0.003994003999, rel=1e-12)


@pytest.mark.parametrize("p, n", [(-0.1, 1), (1.0, 1), (0.1, 0)])
def test_compound_depol_rejects(p, n):
    with pytest.raises(ValueError):
        compound_depol(p, n)


def test_class1_flip_probs():
    assert class1_flip_probs(0.0) == (0.0, 0.0)
    z, x = class1_flip_probs(0.004)
    assert z == pytest.approx(0.003992, rel=1e-12)
    assert x == pytest.approx(0.007952127872, rel=1e-12)
    # the quoted reference value 0.00795216... agrees to 5 significant digits
    assert x == pytest.approx(0.00795216, rel=1e-5)


@given(st.floats(min_value=1e-6, max_value=0.5))
def test_x_ancilla_flips_more_often(p):
    z, x = class1_flip_probs(p)
    assert x > z


@pytest.mark.parametrize("bad", [dict(depol_param=1.0), dict(depol_param=-0.01), dict(cycles=0), dict(basis="Y"),
                                 dict(seed=-1), dict(seed=1 << 64)])
def test_noise_config_validation(bad):
    kw = dict(depol_param=0.01, cycles=2, basis="Z", seed=1)
    kw.update(bad)
    with pytest.raises(ValueError):
        NoiseConfig(**kw)


def test_zero_noise_gives_zero_bits():
    raw = sample(build_layout(5), NoiseConfig(0.0, 3, "Z", 11), 50)
    for arr in (raw.idle_x, raw.idle_z, raw.anc_flip, raw.cnot):
        assert not arr.any()


def test_determinism_and_chunk_invariance():
    lay = build_layout(5)
    cfg = NoiseConfig(0.02, 3, "X", 123)
    a = sample(lay, cfg, 40)
    b = sample(lay, cfg, 40)
    c = sample(lay, cfg, 15, start=25)
    for name in ("idle_x", "idle_z", "anc_flip", "cnot"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
        assert np.array_equal(getattr(a, name)[25:], getattr(c, name))
    one = sample_shot(lay, cfg, 31)
    assert np.array_equal(one.cnot, a.cnot[31])


def test_presence_masking():
    lay = build_layout(5)
    raw = sample(lay, NoiseConfig(0.3, 2, "Z", 5), 200)
    assert not (raw.idle_x & ~lay.data_presence).any()
    assert not (raw.idle_z & ~lay.data_presence).any()
    assert not (raw.anc_flip & ~lay.ancilla_presence).any()
    anc, dat = cnot_masks(lay)
    assert not (raw.cnot[..., :2] & ~anc[..., None]).any()
    assert not (raw.cnot[..., 2:] & ~dat[..., None]).any()


@pytest.fixture(scope="module")
def big_sample():
    lay = build_layout(3)
    p = 0.01
    cfg = NoiseConfig(p, 3, "Z", 2024)
    return lay, p, sample(lay, cfg, 100_000)


def test_idle_marginals(big_sample):
    lay, p, raw = big_sample
    n = raw.idle_x.shape[0]
    # centre data qubit of d=3 lives in cell (1, 1) slot 0
    assert lay.presence[1, 1, 0]
    for t in range(3):
        q = depolarising_marginal(p, idle_steps(t, 3))
        assert within_sigma(int(raw.idle_x[:, t, 1, 1, 0].sum()), n, q)
        assert within_sigma(int(raw.idle_z[:, t, 1, 1, 0].sum()), n, q)


def test_ancilla_marginals(big_sample):
    lay, p, raw = big_sample
    n = raw.anc_flip.shape[0]
    pz, px = class1_flip_probs(p)
    for r, c, k in lay.sites():
        q = px if k < 2 else pz
        assert within_sigma(int(raw.anc_flip[:, 1, r, c, k].sum()), n, q)


def test_gate_channel_rates(big_sample):
    lay, p, raw = big_sample
    n = raw.cnot.shape[0]
    anc, dat = cnot_masks(lay)
    r, c = 1, 1
    gates = np.flatnonzero(anc[r, c] & dat[r, c])
    assert gates.size > 0
    for g in gates[:4]:
        bits = raw.cnot[:, 1, r, c, g]
        # identity is one of 16 equally likely outcomes
        assert within_sigma(int(bits.any(axis=1).sum()), n, 15 * p / 16)
        for b in range(4):
            assert within_sigma(int(bits[:, b].sum()), n, p / 2)
        # the four bits of a gate are jointly uniform given occurrence
        pattern = bits @ (1 << np.arange(4))
        hist = np.bincount(pattern[pattern > 0], minlength=16)[1:]
        expected = hist.sum() / 15
        chi2 = float(((hist - expected) ** 2 / expected).sum())
        assert chi2 < 40  # 14 dof, p ~ 2e-4


def test_one_sided_gate_noise_on_boundary():
    lay = build_layout(3)
    anc, dat = cnot_masks(lay)
    # some gate slots have a data qubit but no ancilla: they still carry the data side
    one_sided = dat & ~anc
    assert one_sided.any()
    raw = sample(lay, NoiseConfig(0.5, 1, "Z", 9), 500)
    hits = raw.cnot[:, 0][..., 2:][:, one_sided]
    assert hits.any()
    assert not raw.cnot[:, 0][..., :2][:, one_sided].any()


def test_seed_independence():
    lay = build_layout(3)
    a = sample(lay, NoiseConfig(0.1, 2, "Z", 1), 20_000).anc_flip[:, 0, 1, 1, 0]
    b = sample(lay, NoiseConfig(0.1, 2, "Z", 2), 20_000).anc_flip[:, 0, 1, 1, 0]
    assert not np.array_equal(a, b)
    n = a.size
    pa, pb = a.mean(), b.mean()
    assert within_sigma(int((a & b).sum()), n, pa * pb, k=4)
