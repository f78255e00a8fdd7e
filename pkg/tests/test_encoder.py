import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import H, LAM, random_signal, setup_2d
from mdfold.encoder import (BandLedger, FoldEvent, FoldLedger, HysteresisParams, encode_1d,
                            encode_md, ideal_modulo, residual_at, write_ledger)
from mdfold.errors import ConfigurationError, ResolutionError
from mdfold.lattice import (BandlimitedSignal, Bandwidth, GridSpec, Lattice, diagnostics,
                            eval_grid)

P = HysteresisParams(LAM, H, 0.32)


# ---------------------------------------------------------------- ideal modulo

@pytest.mark.parametrize("x,expected", [(0.0, 0.0), (0.5, -0.1), (-0.7, -0.1), (0.3, -0.3)])
def test_ideal_modulo_examples(x, expected):
    assert ideal_modulo(x, 0.3) == pytest.approx(expected, abs=1e-12)


def test_ideal_modulo_rejects_bad_lambda():
    with pytest.raises(ConfigurationError):
        ideal_modulo(1.0, 0.0)


@given(st.floats(-100, 100), st.integers(-50, 50), st.floats(0.05, 3))
def test_ideal_modulo_range_and_period(x, m, lam):
    y = ideal_modulo(x, lam)
    assert -lam <= y < lam
    d = ideal_modulo(x + 2 * lam * m, lam) - y
    # values straddling the -lam / lam seam are the same point on the circle
    assert min(abs(d), abs(abs(d) - 2 * lam)) < 1e-9 * (1 + abs(x) + abs(m))
    assert ((x - y) / (2 * lam)) == pytest.approx(round((x - y) / (2 * lam)), abs=1e-9)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        HysteresisParams(0.3, 0.2, 0.32)  # h >= 2 lambda / 3
    with pytest.raises(ConfigurationError):
        HysteresisParams(-0.3, 0.1, 0.32)
    with pytest.raises(ConfigurationError):
        HysteresisParams(0.3, 0.1, 0.0)
    assert HysteresisParams(0.3, 0.19, 0.32).lam_h == pytest.approx(0.205)


# ---------------------------------------------------------------- 1D operator

def test_1d_constant_zero():
    t = np.linspace(-1, 1, 201)
    t[100] = 0.0
    r = encode_1d(t, np.zeros_like(t), P)
    assert r.events == () and r.M == 0
    assert np.array_equal(r.folded, np.zeros_like(t))


def test_1d_ramp_single_fold():
    t = np.arange(-100, 1001) * 1e-3
    g = 0.5 * t  # reaches lambda at t = 0.6
    r = encode_1d(t, g, P)
    assert len(r.events) == 1
    e = r.events[0]
    assert e.sign == 1 and e.order == 1
    assert e.tau == pytest.approx(0.6, abs=1e-3) and e.tau >= 0.6 - 1e-12
    # jump of 2 lambda_h at the fold
    assert np.allclose(r.residual[t >= e.tau], 2 * P.lam_h + H * r.M)


def test_1d_triangle_levels():
    # up through lambda, peak below 3 lambda - h, then down through lambda - h
    t = np.arange(0, 3501) * 1e-3
    g = np.where(t < 1.5, 0.4 * t, 0.6 - 0.4 * (t - 1.5))
    r = encode_1d(t, g, P)
    assert [e.sign for e in r.events] == [1, -1]
    assert r.events[0].tau == pytest.approx(LAM / 0.4, abs=2e-3)
    assert r.events[1].tau == pytest.approx(1.5 + (0.6 - (LAM - H)) / 0.4, abs=2e-3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-0.29, 0.29))
def test_1d_zero_hysteresis_is_ideal_modulo(c, g0):
    t = np.arange(-2000, 2001) * 2e-3
    g = c[0] * np.sin(1.3 * t) + c[1] * np.cos(0.7 * t) + c[2] * t * 0.3
    g = g - g[2000] + g0
    r = encode_1d(t, g, HysteresisParams(LAM, 0.0, 0.32))
    assert np.allclose(r.folded, ideal_modulo(g, LAM), atol=1e-12)


def test_1d_negative_side_mirrors():
    t = np.arange(-1000, 1001) * 1e-3
    g = 0.5 * np.abs(t)
    r = encode_1d(t, g, P)
    taus = [e.tau for e in r.events]
    assert taus == sorted(taus)
    assert [e.order for e in r.events] == [-1, 1]
    assert taus[0] == pytest.approx(-taus[1])


def test_1d_coarse_grid_rejected():
    t = np.arange(-10, 11) * 0.1
    with pytest.raises(ResolutionError):
        encode_1d(t, 2.0 * t, P)


# ---------------------------------------------------------------- MD operator

def _sig(c, domain=(-5, 5)):
    return BandlimitedSignal(Bandwidth((1.0, 1.0)), np.asarray(c, float), (domain, domain))


def test_md_small_signal_has_no_folds():
    lattice, params, grid, _ = setup_2d(t2=0.08)
    c = np.zeros((3, 3))
    c[1, 1] = 0.05
    r = encode_md(_sig(c), lattice, params, grid)
    assert r.ledger.n_events == 0
    for band, entry in r.ledger.bands.items():
        assert entry.M == math.floor((r.clean.values.min() + LAM) / H) - 1 or entry.M in (0, -1)
    assert np.allclose(r.folded.values + r.residual.values, r.clean.values)


def test_md_rejects_non_integer_band():
    lattice = Lattice.normalized([[0.97, 0.32], [0.25, 0.95]], [0.02, 0.03])
    grid = GridSpec((-10, -10), (10, 10))
    with pytest.raises(ConfigurationError):
        encode_md(random_signal(1), lattice, P, grid)


@pytest.mark.parametrize("seed", range(4))
def test_md_invariants_section6(seed):
    lattice, params, grid, _ = setup_2d(t2=0.01)
    sig = random_signal(seed)
    r = encode_md(sig, lattice, params, grid)
    z, eps, gam = r.folded.values, r.residual.values, r.clean.values
    assert np.max(np.abs(z)) <= LAM + 1e-12
    q = eps / H
    assert np.max(np.abs(q - np.rint(q))) < 1e-12
    assert np.max(np.abs(z + eps - gam)) <= 1e-12 * np.max(np.abs(gam))
    sup = diagnostics(sig, lattice, params, oversample=8, grid=grid).sup_norm
    for entry in r.ledger.bands.values():
        taus = [e.tau for e in entry.events]
        assert taus == sorted(taus)
        for a, b in zip(taus, taus[1:]):
            if a * b > 0:  # same side of the origin
                assert b - a >= H / (1.0 * sup) - lattice.periods[0] / r.q
        assert all(e.sign in (-1, 1) for e in entry.events)


def test_md_residual_matches_residual_at():
    lattice, params, grid, _ = setup_2d(t2=0.04)
    r = encode_md(random_signal(7), lattice, params, grid)
    rng = np.random.default_rng(0)
    for _ in range(300):
        k = [int(rng.integers(grid.lo[d], grid.hi[d] + 1)) for d in range(2)]
        assert residual_at(r.ledger, params, k, lattice) == pytest.approx(r.residual.at(k), abs=1e-12)
    with pytest.raises(KeyError):
        residual_at(r.ledger, params, (0, grid.hi[1] + 100), lattice)


@pytest.mark.parametrize("m", [-2, 1, 3])
def test_md_shift_covariance(m):
    lattice, params, grid, _ = setup_2d(t2=0.04)
    sig = random_signal(21)
    a = encode_md(sig, lattice, params, grid)
    b = encode_md(sig, lattice, params, grid, offset=m * H)
    assert np.allclose(a.folded.values, b.folded.values, atol=1e-12)
    for band in a.ledger.bands:
        assert b.ledger.M(band) == a.ledger.M(band) + m
        assert b.ledger.events(band) == a.ledger.events(band)


def test_md_one_dimensional_matches_1d_first_event():
    T1, Q = 0.02, 8
    lattice = Lattice(np.eye(1), [T1])
    grid = GridSpec((-250,), (250,))
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(150):
        sig = BandlimitedSignal(Bandwidth((1.0,)), rng.uniform(-1, 1, 3), ((-5, 5),))
        r = encode_md(sig, lattice, P, grid, q=Q)
        if r.ledger.M(()) != 0:
            continue  # both operators then start from different offsets
        t = (np.arange(-250 * Q, 250 * Q + 1) / Q) * T1
        t[250 * Q] = 0.0
        g = eval_grid(sig, [t])
        r1 = encode_1d(t, g, P)
        assert r1.M == 0
        for side in (1, -1):
            md = [e for e in r.ledger.events(()) if e.order == side]
            one = [e for e in r1.events if e.order == side]
            assert len(md) == len(one)
            if one:
                assert md[0].tau == pytest.approx(one[0].tau, abs=1e-12)
                assert md[0].sign == one[0].sign
                checked += 1
    assert checked >= 5


def test_residual_at_examples():
    lattice = Lattice(np.eye(2), [0.02, 0.32])
    params = HysteresisParams(LAM, H, 0.32)
    ledger = FoldLedger({(0,): BandLedger(3, ())})
    assert residual_at(ledger, params, (5, 0), lattice) == pytest.approx(0.57)
    ev = FoldEvent((0,), 1, 10 * 0.02, 1)
    ledger = FoldLedger({(0,): BandLedger(0, (ev,))})
    assert residual_at(ledger, params, (9, 0), lattice) == 0
    assert residual_at(ledger, params, (10, 0), lattice) == pytest.approx(H)


def test_ledger_csv(tmp_path):
    lattice, params, grid, _ = setup_2d(t2=0.08)
    r = encode_md(random_signal(3), lattice, params, grid)
    write_ledger(r.ledger, tmp_path / "e.csv", tmp_path / "m.csv")
    ev = (tmp_path / "e.csv").read_text().splitlines()
    ms = (tmp_path / "m.csv").read_text().splitlines()
    assert ev[0] == "b2,r,tau,sign" and ms[0] == "b2,M"
    assert len(ev) - 1 == r.ledger.n_events and len(ms) - 1 == len(r.ledger.bands)
