"""Reconstruction from folded noisy samples, plus the probability-bound calculators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .filters import (DetectionConfig, band_layout, band_line_means, finite_diff,
                      forward_diff)
from .lattice import GridSpec, Lattice, SampleField


@dataclass(frozen=True)
class DetectedFold:
    """``m_min`` is the first flagged filter position; negative side positions are mirrored (m_min <= 0)."""

    order: int
    m_min: int
    tau: float
    sign: int


@dataclass(frozen=True, eq=False)
class DetectionResult:
    folds: dict
    M: dict
    staircase: dict = field(repr=False)

    def events(self, band) -> tuple[DetectedFold, ...]:
        return self.folds[tuple(band)]


@dataclass(frozen=True)
class ConditionReport:
    """Which sufficient recovery conditions hold; None means the inputs to decide were missing."""

    intra_band: bool | None
    difference_shrink: bool | None
    fold_spacing: bool | None
    band_support: bool

    @property
    def all_hold(self) -> bool:
        return all(v is True for v in (self.intra_band, self.difference_shrink,
                                       self.fold_spacing, self.band_support))

    def as_text(self) -> str:
        def fmt(v):
            return "unknown" if v is None else str(v).lower()
        return "\n".join([
            f"intra_band_variation_cond={fmt(self.intra_band)}",
            f"difference_shrink_cond={fmt(self.difference_shrink)}",
            f"fold_spacing_cond={fmt(self.fold_spacing)}",
            f"band_support_cond={fmt(self.band_support)}",
            f"all_hold={fmt(self.all_hold)}",
        ]) + "\n"


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    recovered: SampleField
    residual_estimate: SampleField
    detection: DetectionResult
    conditions: ConditionReport


def _first_of_groups(p: np.ndarray, threshold: float, order: int) -> list[int]:
    """Greedy scan: a flagged m opens a group and masks the next ``order`` positions."""
    out = []
    last = -order - 1
    for m in np.flatnonzero(np.abs(p) >= threshold):
        if m > last + order:
            out.append(int(m))
            last = m
    return out


def _sides(means: np.ndarray, origin1: int):
    i0 = -origin1
    if i0 < 0 or i0 >= means.shape[0]:
        raise ValueError("field must contain the k1 = 0 line")
    return means[i0:], means[: i0 + 1][::-1]


def detect_folds(y: SampleField, cfg: DetectionConfig) -> DetectionResult:
    """Fold groups per band from band-averaged differences along x1.

    The k1 >= 0 half is scanned forward; the k1 <= 0 half is reversed and
    scanned the same way. ``M`` of the result is left empty (see
    ``propagate_M``).
    """
    N = cfg.order
    means = band_line_means(y, cfg.geometry) if len(y.origin) > 1 else y.values[:, None]
    first, counts = band_layout(y, cfg.geometry) if len(y.origin) > 1 else ((), ())
    pos, neg = _sides(means, y.origin[0])
    if pos.shape[0] <= N and neg.shape[0] <= N:
        raise ValueError("field too small for any filter placement")
    p_pos = forward_diff(pos, N, axis=0) if pos.shape[0] > N else None
    p_neg = forward_diff(neg, N, axis=0) if neg.shape[0] > N else None
    K1 = y.values.shape[0]
    ks = np.arange(y.origin[0], y.origin[0] + K1)
    folds, stairs = {}, {}
    cols = list(np.ndindex(*counts)) if counts else [()]
    for col in cols:
        band = tuple(f + c for f, c in zip(first, col))
        sel = (slice(None),) + (col if col else (0,))
        ev, stair = [], np.zeros(K1, dtype=np.int64)
        if p_neg is not None:
            q = p_neg[sel]
            ms = _first_of_groups(q, cfg.threshold, N)
            for r, m in reversed(list(enumerate(ms, start=1))):
                s = -int(np.sign(q[m]))
                c = m + N
                ev.append(DetectedFold(-r, -m, -c * cfg.t1, s))
                stair[ks <= -c] += s
        if p_pos is not None:
            p = p_pos[sel]
            for r, m in enumerate(_first_of_groups(p, cfg.threshold, N), start=1):
                s = -int(np.sign(p[m]))
                c = m + N
                ev.append(DetectedFold(r, m, c * cfg.t1, s))
                stair[ks >= c] += s
        folds[band] = tuple(ev)
        stairs[band] = stair
    return DetectionResult(folds, {}, stairs)


def propagation_order(first: Sequence[int], counts: Sequence[int]):
    """Pairs (known band, new band): along direction 2 outward from 0, then each further direction."""
    D1 = len(counts)
    zero = tuple([0] * D1)
    if any(not (f <= 0 < f + c) for f, c in zip(first, counts)):
        raise ValueError("band block must contain the origin band")
    known = [zero]
    steps = []
    for a in range(D1):
        lo, hi = first[a], first[a] + counts[a] - 1
        new = []
        for b in known:
            prev = b
            for v in range(1, hi + 1):
                nb = b[:a] + (v,) + b[a + 1:]
                steps.append((prev, nb))
                new.append(nb)
                prev = nb
            prev = b
            for v in range(-1, lo - 1, -1):
                nb = b[:a] + (v,) + b[a + 1:]
                steps.append((prev, nb))
                new.append(nb)
                prev = nb
        known += new
    return steps


def _psi_bb_slices(y: SampleField, lower: tuple[int, ...], axis: int, cfg: DetectionConfig) -> np.ndarray:
    """psi_{lower, lower+e} evaluated on every x1 slice at once (length K1)."""
    nb = cfg.geometry.samples_per_band
    N = cfg.order
    sl = [slice(None)]
    for d, (b, n) in enumerate(zip(lower, nb)):
        lo = b * n - y.origin[d + 1]
        sl.append(slice(lo, lo + n))
    kb = nb[axis] * (lower[axis] + 1) - 1
    lo = kb - y.origin[axis + 1]
    if lo < 0 or lo + N >= y.values.shape[axis + 1]:
        raise IndexError("filter support outside the field")
    sl[axis + 1] = slice(lo, lo + N + 1)
    block = y.values[tuple(sl)]
    c = finite_diff(N).coeffs
    diff = sum(cj * np.take(block, [j], axis=axis + 1) for j, cj in enumerate(c))
    flat = diff.reshape(diff.shape[0], -1)
    return flat.sum(axis=1) / cfg.geometry.n_band_star(axis + 2)


def propagate_M(y: SampleField, cfg: DetectionConfig, detection: DetectionResult | None = None,
                mode: str = "compensated") -> dict:
    """Relative band constants, 0 at the origin band.

    ``mode="origin"`` applies the single-slice rule on the k1 = 0 line:
    the constant moves by sign(stat) * (-1)^N when |stat| >= threshold.
    ``mode="compensated"`` first adds back the detected fold staircases,
    evaluates the boundary filter on every x1 slice and rounds the median
    to a multiple of h. Both agree on noiseless data with no folds near
    k1 = 0; the second tolerates noise and steps of more than one h.
    """
    if len(y.origin) == 1:
        return {(): 0}
    if mode not in ("origin", "compensated"):
        raise ValueError(f"unknown propagation mode {mode!r}")
    if mode == "compensated" and detection is None:
        detection = detect_folds(y, cfg)
    first, counts = band_layout(y, cfg.geometry)
    N = cfg.order
    h = 2 * cfg.threshold
    sgn = (-1) ** N
    c0 = finite_diff(N).coeffs[0]
    i0 = -y.origin[0]
    M = {tuple([0] * len(counts)): 0}
    for known, new in propagation_order(first, counts):
        axis = next(i for i, (a, b) in enumerate(zip(known, new)) if a != b)
        up = new[axis] > known[axis]
        lower, upper = (known, new) if up else (new, known)
        stat = _psi_bb_slices(y, lower, axis, cfg)
        if mode == "origin":
            v = stat[i0]
            delta = int(np.sign(v)) * sgn if abs(v) >= cfg.threshold else 0
        else:
            stat = stat + h * c0 * (detection.staircase[lower] - detection.staircase[upper])
            delta = int(np.rint(np.median(stat) * sgn / h))
        M[new] = M[known] + (delta if up else -delta)
    return M


def condition_report(params, lattice: Lattice, omega: Sequence[float] | None,
                     sup_norm: float | None, order: int) -> ConditionReport:
    T = lattice.periods
    D = lattice.dimension
    h, lam, B = params.h, params.lam, params.band_width
    band_support = all((order + 1) * T[d] < B for d in range(1, D))
    if omega is None or sup_norm is None:
        return ConditionReport(None, None, None, band_support)
    om = np.asarray(omega, dtype=float)
    intra = bool(sup_norm * B * math.sqrt(D) * float(np.linalg.norm(om)) < min(h / 2, 2 * lam - 3 * h))
    shrink = all((T[d] * om[d] * math.e) ** order * sup_norm < h / 2 for d in range(D))
    spacing = bool(sup_norm == 0 or (order + 1) * T[0] < h / (om[0] * sup_norm))
    return ConditionReport(intra, shrink, spacing, band_support)


def reconstruct(y: SampleField, cfg: DetectionConfig, params, *, lattice: Lattice | None = None,
                omega: Sequence[float] | None = None, sup_norm: float | None = None,
                mode: str = "compensated") -> ReconstructionResult:
    """gamma_tilde = y + h (M_b + fold staircase of band b), band by band.

    The condition report is advisory and needs ``lattice``, ``omega`` and
    ``sup_norm`` to be fully decided.
    """
    det = detect_folds(y, cfg)
    M = propagate_M(y, cfg, det, mode=mode)
    det = DetectionResult(det.folds, M, det.staircase)
    h = params.h
    eps = np.empty_like(y.values)
    if len(y.origin) == 1:
        eps[:] = h * (M[()] + det.staircase[()])
    else:
        nb = cfg.geometry.samples_per_band
        for band, stair in det.staircase.items():
            sl = [slice(None)]
            for d, (b, n) in enumerate(zip(band, nb)):
                lo = b * n - y.origin[d + 1]
                sl.append(slice(lo, lo + n))
            eps[tuple(sl)] = (h * (M[band] + stair)).reshape((-1,) + (1,) * len(nb))
    if lattice is not None:
        report = condition_report(params, lattice, omega, sup_norm, cfg.order)
    else:
        report = ConditionReport(None, None, None,
                                 all((cfg.order + 1) * t < params.band_width for t in cfg.geometry.periods))
    residual = y.with_values(eps)
    return ReconstructionResult(y.with_values(y.values + eps), residual, det, report)


@dataclass(frozen=True)
class BoundReport:
    C: float
    kappa: tuple[float, ...]
    kappa_min: float
    p_err_fold: float
    p_err_M: float
    p_acc: float

    def as_text(self) -> str:
        lines = [f"C={self.C:.17g}"]
        lines += [f"kappa_{d + 2}={k:.17g}" for d, k in enumerate(self.kappa)]
        lines += [f"kappa_min={self.kappa_min:.17g}", f"p_err_fold={self.p_err_fold:.17g}",
                  f"p_err_M={self.p_err_M:.17g}", f"p_acc={self.p_acc:.17g}"]
        return "\n".join(lines) + "\n"


def _exponent(margin: float, sigma: float, order: int, gain: float) -> float:
    if sigma == 0:
        return math.inf if margin > 0 else -math.inf
    return margin / (sigma * math.sqrt(2 ** (order + 1))) * gain


def _p_err(x: float) -> float:
    """e^{-x^2} for a positive exponent, else the vacuous bound 1."""
    if x <= 0:
        return 1.0
    return math.exp(-x * x) if math.isfinite(x) else 0.0


def compute_bounds(params, lattice: Lattice, omega: Sequence[float], sup_norm: float,
                   sigma: float, order: int, grid: GridSpec) -> BoundReport:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    T = lattice.periods
    D = lattice.dimension
    h, B = params.h, params.band_width
    om = [float(w) for w in omega]
    half = h / 2
    gains = [math.sqrt(B / T[d]) for d in range(1, D)]
    C = _exponent(half - (T[0] * om[0] * math.e) ** order * sup_norm, sigma, order, math.prod(gains))
    kappa = []
    for ds in range(1, D):
        g = math.prod(gains[i] for i in range(D - 1) if i != ds - 1)
        kappa.append(_exponent(half - (T[ds] * om[ds] * math.e) ** order * sup_norm, sigma, order, g))
    if D > 1:
        tw = max(T[d] * om[d] for d in range(1, D))
        t_max = max(T[1:])
        kmin = _exponent(half - (tw * math.e) ** order * sup_norm, sigma, order,
                         math.sqrt((B / t_max) ** (D - 2)))
    else:
        kmin = math.inf
    pf, pm = _p_err(C), _p_err(kmin)
    n_bands = 1
    for d in range(1, D):
        n_bands *= grid.shape[d] // round(B / T[d])
    n_fold = grid.shape[0] * n_bands
    if pf >= 1 or pm >= 1:
        p_acc = 0.0
    else:
        p_acc = math.exp(n_fold * math.log1p(-pf) + (n_bands * math.log1p(-pm) if D > 1 else 0.0))
    return BoundReport(C, tuple(kappa), kmin, pf, pm, p_acc)


@dataclass(frozen=True)
class Score:
    success: bool
    max_err: float
    constant: float


def score_recovery(recovered: SampleField, truth: SampleField, noise: SampleField,
                   step: float) -> Score:
    """Success iff recovered - (truth + noise) is one constant from the grid step * Z.

    Use ``step = h`` for the hysteresis pipeline and ``2 * lambda`` for the
    ideal-modulo baseline.
    """
    if not (recovered.congruent(truth) and truth.congruent(noise)):
        raise ValueError("fields are not congruent")
    d = recovered.values - truth.values - noise.values
    c = step * float(np.rint(np.median(d) / step))
    err = float(np.max(np.abs(d - c))) if d.size else 0.0
    tol = 1e-6 * max(1.0, float(np.max(np.abs(truth.values))) if d.size else 1.0)
    return Score(err < tol, err, c)


def write_recovery(det: DetectionResult, events_path: str | Path, m_path: str | Path) -> None:
    bands = sorted(det.folds)
    nd = len(bands[0]) if bands else 0
    cols = [f"b{d + 2}" for d in range(nd)]
    with open(events_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["r", "m_min", "tau_est", "sign_est"])
        for b in bands:
            for e in det.folds[b]:
                w.writerow(list(b) + [e.order, e.m_min, f"{e.tau:.17g}", e.sign])
    with open(m_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["M_est"])
        for b in bands:
            w.writerow(list(b) + [det.M.get(b, 0)])
