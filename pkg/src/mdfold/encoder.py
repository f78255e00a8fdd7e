"""Folding operators: centered ideal modulo and the 1D and multi-dimensional modulo-hysteresis maps."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NotWellDefinedError, ResolutionError
from .lattice import (BandlimitedSignal, GridSpec, Lattice, SampleField, eval_grid,
                      sample_on_lattice, samples_per_band)


@dataclass(frozen=True)
class HysteresisParams:
    lam: float
    h: float
    band_width: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError("lambda must be positive")
        if not 0 <= self.h < 2 * self.lam / 3:
            raise ConfigurationError("hysteresis must satisfy 0 <= h < 2*lambda/3")
        if not self.band_width > 0:
            raise ConfigurationError("band width must be positive")

    @property
    def lam_h(self) -> float:
        return self.lam - self.h / 2


@dataclass(frozen=True)
class FoldEvent:
    """One residual jump. ``order`` is 1, 2, ... for x1 > 0 and -1, -2, ... for the mirrored side."""

    band: tuple[int, ...]
    order: int
    tau: float
    sign: int


@dataclass(frozen=True)
class BandLedger:
    M: int
    events: tuple[FoldEvent, ...]


@dataclass(frozen=True)
class FoldLedger:
    bands: dict

    def M(self, band) -> int:
        return self.bands[tuple(band)].M

    def events(self, band) -> tuple[FoldEvent, ...]:
        return self.bands[tuple(band)].events

    @property
    def n_events(self) -> int:
        return sum(len(b.events) for b in self.bands.values())


@dataclass(frozen=True, eq=False)
class EncodeResult:
    folded: SampleField
    ledger: FoldLedger
    residual: SampleField
    clean: SampleField
    intra_band_variation: float
    precondition_ok: bool
    anomalies: int
    q: int


def ideal_modulo(x, lam: float):
    """2*lam*(frac(x/(2 lam) + 1/2) - 1/2), with values in [-lam, lam)."""
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    x = np.asarray(x, dtype=float)
    u = x / (2 * lam) + 0.5
    out = 2 * lam * (u - np.floor(u) - 0.5)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------- 1D


@dataclass(frozen=True, eq=False)
class Encode1DResult:
    folded: np.ndarray
    residual: np.ndarray
    events: tuple[FoldEvent, ...]
    M: int


def _scan_1d(g: np.ndarray, lam: float, h: float) -> list[tuple[int, int]]:
    """Forward scan for t >= 0; g[0] is the value at t = 0.

    Crossings are located on the grid through changes of floor(u / 2 lam),
    where u is g shifted by the current reference level. The reference is the
    exact crossed level, not the overshooting sample.
    """
    two_lam = 2 * lam
    offset = lam
    level_prev = g[0]
    out = []
    start = 1
    while start < g.size:
        n = np.floor((g[start - 1:] + offset) / two_lam)
        change = np.flatnonzero(n[1:] != n[:-1])
        if change.size == 0:
            break
        i = change[0]
        step = n[i + 1] - n[i]
        if abs(step) > 1:
            raise ResolutionError("several fold levels crossed between two grid points")
        rising = step > 0
        level_u = two_lam * (n[i + 1] if rising else n[i])
        level = level_u - offset
        s = int(np.sign(level - level_prev)) or (1 if rising else -1)
        idx = start + i
        out.append((idx, s))
        level_prev = level
        offset = -level + h * s
        start = idx + 1
    return out


def encode_1d(t: np.ndarray, g: np.ndarray, params: HysteresisParams) -> Encode1DResult:
    """One-dimensional modulo-hysteresis of samples ``g`` on the ascending grid ``t``.

    ``t`` must contain 0. For h = 0 the constant M is taken as 0, which
    makes the operator coincide with the ideal modulo when |g(0)| < lambda.
    """
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    if t.shape != g.shape or t.ndim != 1:
        raise ValueError("t and g must be 1D arrays of equal length")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t must be strictly increasing")
    zero = np.flatnonzero(t == 0)
    if zero.size != 1:
        raise ValueError("t must contain 0 exactly once")
    i0 = int(zero[0])
    lam, h = params.lam, params.h
    if g.size > 1:
        limit = h / 4 if h > 0 else lam
        if np.max(np.abs(np.diff(g))) >= limit:
            raise ResolutionError(f"consecutive samples differ by more than {limit}")
    M = int(math.floor((g[i0] + lam) / h)) - 1 if h > 0 else 0

    events = []
    stair = np.zeros_like(g)
    jump = 2 * params.lam_h
    pos = _scan_1d(g[i0:], lam, h)
    for r, (j, s) in enumerate(pos, start=1):
        events.append(FoldEvent((), r, float(t[i0 + j]), s))
        stair[i0 + j:] += jump * s
    neg = _scan_1d(g[: i0 + 1][::-1], lam, h)
    for r, (j, s) in enumerate(neg, start=1):
        events.append(FoldEvent((), -r, float(t[i0 - j]), s))
        stair[: i0 - j + 1] += jump * s
    events.sort(key=lambda e: e.tau)
    residual = stair + h * M
    return Encode1DResult(g - residual, residual, tuple(events), M)


# --------------------------------------------------------------------------- MD


def _scan_md(fmax, fmin, corner, eps0: float, lam: float, h: float):
    """Event scan along refined x1 points 1, 2, ... (index 0 is x1 = 0).

    Returns the fold list ``[(j, sign)]`` and the number of folds after which
    the band still leaves [-lam, lam].
    """
    eps = eps0
    out = []
    bad = 0
    start = 1
    n = fmax.size
    while start < n:
        hit = (fmax[start:] - eps >= lam) | (eps - fmin[start:] >= lam)
        if not hit.any():
            break
        j = start + int(np.argmax(hit))
        s = 1 if corner[j] - eps >= 0 else -1
        eps += h * s
        out.append((j, s))
        if max(fmax[j] - eps, eps - fmin[j]) >= lam:
            bad += 1
        start = j + 1
    return out, bad


def _band_axes(band: tuple[int, ...], nb: Sequence[int], periods: np.ndarray,
               oversample: int, single_point: bool) -> list[np.ndarray]:
    axes = []
    for d, (b, n) in enumerate(zip(band, nb), start=1):
        k0 = b * n
        if single_point:
            axes.append(np.array([k0 * periods[d]]))
        else:
            axes.append(((k0 * oversample + np.arange(n * oversample)) / oversample) * periods[d])
    return axes


def band_ranges(grid: GridSpec, nb: Sequence[int]) -> list[range]:
    return [range(grid.lo[d] // n, grid.hi[d] // n + 1) for d, n in enumerate(nb, start=1)]


def _staircase(events: list[tuple[int, int]], q: int, n_lattice: int) -> np.ndarray:
    """Cumulative sign sum at lattice steps 0..n_lattice-1 (indicator closed at tau)."""
    jumps = np.zeros(n_lattice + 1, dtype=np.int64)
    for j, s in events:
        c = -(-j // q)
        if c < n_lattice:
            jumps[c] += s
    return np.cumsum(jumps[:n_lattice])


def encode_md(sig: BandlimitedSignal, lattice: Lattice, params: HysteresisParams,
              grid: GridSpec, q: int = 8, oversample: int = 8,
              single_point: bool = False, strict: bool = False,
              offset: float = 0.0) -> EncodeResult:
    """Multi-dimensional modulo-hysteresis on the lattice samples of ``sig``.

    Each band along x2..xD carries its own residual staircase along x1.
    Folds are located on the x1 grid refined ``q`` times; band suprema use
    ``oversample`` points per lattice step along x2..xD. ``offset`` is a
    constant added to the signal before folding. The condition on the
    intra-band variation is reported in ``precondition_ok``; it and any fold
    that fails to bring the band back into range only raise when ``strict``.
    """
    if q < 1 or oversample < 1:
        raise ConfigurationError("oversampling factors must be >= 1")
    D = sig.dimension
    if lattice.dimension != D or grid.dimension != D:
        raise ConfigurationError("dimension mismatch")
    T = lattice.periods
    lam, h = params.lam, params.h
    try:
        nb = [samples_per_band(params.band_width, T[d]) for d in range(1, D)]
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc

    clean = sample_on_lattice(sig, lattice, grid)
    if offset:
        clean = clean.with_values(clean.values + offset)
    k_lo, k_hi = grid.lo[0], grid.hi[0]
    n_pos = max(k_hi, -1) + 1
    n_neg = max(-k_lo, -1) + 1
    x_pos = (np.arange(max(k_hi, 0) * q + 1) / q) * T[0]
    x_neg = -((np.arange(max(-k_lo, 0) * q + 1) / q) * T[0])

    stair = np.zeros(grid.shape, dtype=np.int64)
    ledger = {}
    variation = 0.0
    anomalies = 0
    for band in itertools.product(*band_ranges(grid, nb)):
        axes = _band_axes(band, nb, T, oversample, single_point)
        sides = []
        for x1 in (x_pos, x_neg):
            F = eval_grid(sig, [x1] + axes).reshape(x1.size, -1) + offset
            sides.append((F.max(axis=1), F.min(axis=1), F[:, 0]))
        fmax0, fmin0 = sides[0][0], sides[0][1]
        M = int(math.floor((fmin0[0] + lam) / h)) - 1 if h > 0 else 0
        variation = max(variation, float(np.max(fmax0 - fmin0)),
                        float(np.max(sides[1][0] - sides[1][1])))
        pos, bad_p = _scan_md(*sides[0], h * M, lam, h)
        neg, bad_n = _scan_md(*sides[1], h * M, lam, h)
        anomalies += bad_p + bad_n

        ks = grid.axis(0)
        s_pos = _staircase(pos, q, n_pos) if n_pos > 0 else np.zeros(1, dtype=np.int64)
        s_neg = _staircase(neg, q, n_neg) if n_neg > 0 else np.zeros(1, dtype=np.int64)
        line = M + np.where(ks >= 0, s_pos[np.clip(ks, 0, s_pos.size - 1)],
                            s_neg[np.clip(-ks, 0, s_neg.size - 1)])
        sl = [slice(None)]
        for d, (b, n) in enumerate(zip(band, nb), start=1):
            lo = max(b * n, grid.lo[d]) - grid.lo[d]
            hi = min((b + 1) * n - 1, grid.hi[d]) - grid.lo[d] + 1
            sl.append(slice(lo, hi))
        stair[tuple(sl)] = line.reshape((-1,) + (1,) * (D - 1))

        ev = [FoldEvent(band, -r, float(x_neg[j]), s) for r, (j, s) in enumerate(neg, start=1)]
        ev.reverse()
        ev += [FoldEvent(band, r, float(x_pos[j]), s) for r, (j, s) in enumerate(pos, start=1)]
        ledger[band] = BandLedger(M, tuple(ev))

    pre_ok = variation < min(h / 2, 2 * lam - 3 * h)
    if strict and (not pre_ok or anomalies):
        raise NotWellDefinedError("operator not well-defined for this signal/params")
    residual = SampleField(h * stair, grid.lo)
    folded = SampleField(clean.values - residual.values, grid.lo)
    return EncodeResult(folded, FoldLedger(ledger), residual, clean, variation, pre_ok, anomalies, q)


def residual_at(ledger: FoldLedger, params: HysteresisParams, k: Sequence[int],
                lattice: Lattice) -> float:
    """h * (M_b + sum of signs whose indicator covers k1*T1)."""
    D = lattice.dimension
    nb = [samples_per_band(params.band_width, lattice.periods[d]) for d in range(1, D)]
    band = tuple(int(k[d]) // n for d, n in enumerate(nb, start=1))
    if band not in ledger.bands:
        raise KeyError(f"unknown band {band}")
    entry = ledger.bands[band]
    T1 = lattice.periods[0]
    x1 = k[0] * T1
    tol = 1e-9 * T1
    total = entry.M
    for e in entry.events:
        if e.order > 0 and e.tau <= x1 + tol:
            total += e.sign
        elif e.order < 0 and x1 <= e.tau + tol:
            total += e.sign
    return params.h * total


def write_ledger(ledger: FoldLedger, events_path: str | Path, m_path: str | Path) -> None:
    bands = sorted(ledger.bands)
    nd = len(bands[0]) if bands else 0
    cols = [f"b{d + 2}" for d in range(nd)]
    with open(events_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["r", "tau", "sign"])
        for b in bands:
            for e in ledger.bands[b].events:
                w.writerow(list(b) + [e.order, f"{e.tau:.17g}", e.sign])
    with open(m_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["M"])
        for b in bands:
            w.writerow(list(b) + [ledger.bands[b].M])
