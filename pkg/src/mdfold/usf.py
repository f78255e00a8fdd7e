"""Line-by-line unlimited-sampling recovery from ideal-modulo samples (the baseline)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import ideal_modulo
from .filters import forward_diff
from .lattice import SampleField


@dataclass(frozen=True)
class UsfConfig:
    lam: float
    order: int
    t1: float
    omega1: float

    def __post_init__(self):
        if not self.lam > 0 or self.order < 1:
            raise ValueError("need lambda > 0 and order >= 1")

    @property
    def regime_ok(self) -> bool:
        """Sampling-rate regime under which noiseless recovery is guaranteed."""
        return self.t1 <= 1 / (2 * self.omega1 * math.e)

    def noise_margin(self, sup_norm: float) -> float:
        """lambda - (T1 Omega1 e)^N sup|f|: the largest tolerable |Delta^N noise|."""
        return self.lam - (self.t1 * self.omega1 * math.e) ** self.order * sup_norm


def _snap(x: np.ndarray, step: float) -> np.ndarray:
    return step * np.rint(x / step)


def _residual_lines(y: np.ndarray, cfg: UsfConfig) -> np.ndarray:
    """Residual estimate along axis 0 for every column; first sample of each line gets 0."""
    N, two_lam = cfg.order, 2 * cfg.lam
    if y.shape[0] <= N:
        raise ValueError("line shorter than the difference order + 1")
    dy = forward_diff(y, N, axis=0)
    de = _snap(ideal_modulo(dy, cfg.lam) - dy, two_lam)
    # Delta^n y for n = N-1..0, needed to fix the intermediate constants
    lower = [y]
    for n in range(1, N):
        lower.append(forward_diff(y, n, axis=0))
    for n in range(N, 0, -1):
        s = np.concatenate([np.zeros((1,) + de.shape[1:]), np.cumsum(de, axis=0)], axis=0)
        if n > 1:
            # Delta^{n-1} of the unfolded line is small; centre it on zero
            off = -np.rint(np.mean(lower[n - 1] + s, axis=0) / two_lam) * two_lam
            s = s + off
        de = _snap(s, two_lam)
    return de


def usf_recover_line(y_line, cfg: UsfConfig) -> np.ndarray:
    y = np.asarray(y_line, dtype=float)
    return y + _residual_lines(y, cfg)


def usf_recover_field(y: SampleField, cfg: UsfConfig) -> SampleField:
    """Recover every line along k1, then align line constants on the 2 lambda grid.

    Each line is compared with its predecessor (previous index along the
    first direction that is not at its lower edge, in lexicographic order)
    through the median over k1 of the difference, rounded to 2 lambda Z.
    """
    v = y.values
    if v.ndim == 1:
        return y.with_values(usf_recover_line(v, cfg))
    flat = v.reshape(v.shape[0], -1)
    rec = (flat + _residual_lines(flat, cfg)).reshape(v.shape)
    two_lam = 2 * cfg.lam
    offset = np.zeros((1,) + v.shape[1:])
    # spanning tree over lines: steps along direction a are taken where all
    # earlier directions sit at their first index, then broadcast over them
    for a in range(1, v.ndim):
        if v.shape[a] < 2:
            continue
        head = tuple([slice(None)] + [slice(0, 1)] * (a - 1))
        sub = rec[head]
        step = _snap(np.median(np.diff(sub, axis=a), axis=0, keepdims=True), two_lam)
        zero = np.zeros_like(np.take(step, [0], axis=a))
        offset = offset - np.concatenate([zero, np.cumsum(step, axis=a)], axis=a)
    return y.with_values(rec + offset)
