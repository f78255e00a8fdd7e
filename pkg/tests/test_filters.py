import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import H, random_signal, setup_2d
from mdfold.encoder import encode_md
from mdfold.errors import ConfigurationError
from mdfold.filters import (BandGeometry, DetectionConfig, apply_psi_bb, apply_psi_bm,
                            band_index, finite_diff, neighbors, psi_bm_all)
from mdfold.lattice import SampleField, diagnostics


def cfg_for(nb=4, order=1, t1=0.02, h=H):
    return DetectionConfig(order, h / 2, BandGeometry(0.32, (0.32 / nb,)), t1)


@pytest.mark.parametrize("order,coeffs", [(1, (-1, 1)), (2, (1, -2, 1)), (3, (-1, 3, -3, 1))])
def test_finite_diff_examples(order, coeffs):
    assert finite_diff(order).coeffs == coeffs


def test_finite_diff_rejects_order():
    with pytest.raises(ConfigurationError):
        finite_diff(0)


@given(st.integers(1, 8))
def test_finite_diff_closed_form_and_sum(order):
    c = finite_diff(order).coeffs
    assert c == tuple((-1) ** (order - j) * math.comb(order, j) for j in range(order + 1))
    assert sum(c) == 0


def test_geometry():
    g = BandGeometry(0.32, (0.01, 0.04))
    assert g.samples_per_band == (32, 8) and g.n_band == 256
    assert g.n_band_star(2) == 8 and g.n_band_star(3) == 32
    with pytest.raises(ConfigurationError):
        BandGeometry(0.32, (0.03,))


@pytest.mark.parametrize("k,b", [(0, 0), (3, 0), (7, 1), (-1, -1), (-4, -1), (-5, -2)])
def test_band_index(k, b):
    assert band_index((k,), BandGeometry(0.32, (0.08,))) == (b,)


def test_neighbors():
    assert sorted(neighbors((0,))) == [(-1,), (1,)]
    assert neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]
    assert neighbors((2, -1)) == [(3, -1), (1, -1), (2, 0), (2, -2)]


def _field(values, origin=(-20, -8)):
    return SampleField(values, origin)


def test_psi_bm_constant_and_step():
    cfg = cfg_for()
    y = _field(np.full((41, 16), 2.5))
    assert apply_psi_bm(y, (0,), 3, cfg) == 0
    v = np.zeros((41, 16))
    v[30:, :] = 1.0  # unit step at k1 = 10
    y = _field(v)
    for m in range(-20, 20):
        assert apply_psi_bm(y, (1,), m, cfg) == (1.0 if m == 9 else 0.0)
    with pytest.raises(IndexError):
        apply_psi_bm(y, (0,), 20, cfg)
    with pytest.raises(IndexError):
        apply_psi_bm(y, (5,), 0, cfg)


def test_psi_bm_vectorized_matches_direct():
    rng = np.random.default_rng(0)
    cfg = cfg_for(order=2)
    y = _field(rng.normal(size=(41, 16)))
    table = psi_bm_all(y, cfg)
    for i in range(table.shape[0]):
        for b in range(table.shape[1]):
            assert table[i, b] == pytest.approx(apply_psi_bm(y, (b - 2,), -20 + i, cfg), abs=1e-12)


def test_psi_bm_on_band_constant_residual_equals_single_line():
    lattice, params, grid, cfg = setup_2d(t2=0.04)
    r = encode_md(random_signal(3), lattice, params, grid)
    eps = r.residual
    c = cfg.kernel.coeffs
    for m in range(-50, 50, 7):
        i = m - grid.lo[0]
        line = eps.values[i:i + len(c), 0 - grid.lo[1]]
        assert apply_psi_bm(eps, (0,), m, cfg) == pytest.approx(float(np.dot(c, line)), abs=1e-12)


def test_psi_bb_examples():
    cfg = cfg_for(nb=4)
    y = _field(np.full((41, 16), -1.0))
    assert apply_psi_bb(y, (0,), (1,), cfg) == 0
    v = np.zeros((41, 16))
    v[:, 12:] = H  # band 1 covers k2 = 4..7, i.e. columns 12..15
    assert apply_psi_bb(_field(v), (0,), (1,), cfg) == pytest.approx(H)
    # differences confined to other bands are invisible
    w = np.zeros((41, 16))
    w[:, :4] = 5.0
    assert apply_psi_bb(_field(w), (0,), (1,), cfg) == 0
    with pytest.raises(ValueError):
        apply_psi_bb(y, (0,), (2,), cfg)
    with pytest.raises(ValueError):
        apply_psi_bb(y, (1,), (0,), cfg)


def test_psi_bb_sign_law_higher_order():
    # a +h jump across the boundary gives h * (-1)^(N+1)
    for order in (1, 2, 3):
        cfg = cfg_for(nb=8, order=order)
        v = np.zeros((41, 32))
        v[:, 16:] = H  # band 1 covers k2 = 8..15 -> columns 16..23
        assert apply_psi_bb(_field(v, (-20, -8)), (0,), (1,), cfg) == pytest.approx(H * (-1) ** (order + 1))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    cfg = cfg_for(order=2)
    y1, y2 = rng.normal(size=(2, 41, 16))
    mix = _field(a * y1 + b * y2)
    for fn, args in ((apply_psi_bm, ((0,), 4)), (apply_psi_bb, ((0,), (1,)))):
        lhs = fn(mix, *args, cfg)
        rhs = a * fn(_field(y1), *args, cfg) + b * fn(_field(y2), *args, cfg)
        assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(a) + abs(b)) * 10)


@pytest.mark.parametrize("order", [1, 2])
def test_annihilation_bounds(order):
    lattice, params, grid, cfg = setup_2d(t2=0.04, order=order)
    for seed in range(3):
        sig = random_signal(seed)
        r = encode_md(sig, lattice, params, grid)
        sup = diagnostics(sig, lattice, params, oversample=8, grid=grid).sup_norm
        bound = (0.02 * 1.0 * math.e) ** order * sup
        assert np.max(np.abs(psi_bm_all(r.clean, cfg))) <= bound
        bb = (0.04 * math.e) ** order * sup
        for b in range(-15, 14):
            assert abs(apply_psi_bb(r.clean, (b,), (b + 1,), cfg, k1=0)) <= bb


@pytest.mark.parametrize("order", [1, 2, 3])
def test_residual_response_support(order):
    # isolated jumps of +-h at lattice steps c: |response| >= h on c-N..c-1, zero elsewhere
    cfg = cfg_for(order=order)
    steps = {-12: 1, 0: -1, 9: 1}
    ks = np.arange(-20, 21)
    line = sum(s * H * (ks >= c) for c, s in steps.items()).astype(float)
    y = _field(np.repeat(line[:, None], 16, axis=1))
    support = {m for c in steps for m in range(c - order, c)}
    for m in range(-20, 21 - order):
        v = apply_psi_bm(y, (0,), m, cfg)
        if m in support:
            assert abs(v) >= H - 1e-12
        else:
            assert abs(v) < 1e-12


@pytest.mark.parametrize("order", [1, 2])
def test_noise_variance_law(order):
    # exact law is sigma^2 * binom(2N, N) / N^B; it coincides with 2^N at N = 1
    rng = np.random.default_rng(123)
    sigma, nb = 0.08, 16
    cfg = cfg_for(nb=nb, order=order)
    vals = []
    for _ in range(4000):
        y = SampleField(sigma * rng.standard_normal((order + 1, nb)), (0, 0))
        vals.append(apply_psi_bm(y, (0,), 0, cfg))
    target = sigma**2 * math.comb(2 * order, order) / nb
    assert np.var(vals) == pytest.approx(target, rel=0.1)
