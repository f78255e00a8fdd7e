"""Band geometry, finite-difference kernels and the two band detection filters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .lattice import Lattice, SampleField, samples_per_band


@dataclass(frozen=True)
class BandGeometry:
    """Bands of width B along lattice directions 2..D; ``periods`` holds T_2..T_D."""

    band_width: float
    periods: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(t) for t in self.periods))
        try:
            nb = tuple(samples_per_band(self.band_width, t) for t in self.periods)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        object.__setattr__(self, "_nb", nb)

    @classmethod
    def from_lattice(cls, lattice: Lattice, band_width: float) -> "BandGeometry":
        return cls(band_width, tuple(lattice.periods[1:]))

    @property
    def samples_per_band(self) -> tuple[int, ...]:
        return self._nb

    @property
    def n_band(self) -> int:
        return math.prod(self._nb)

    def n_band_star(self, d_star: int) -> int:
        """N^B / N^B_{d*}; ``d_star`` counts lattice directions from 1 (so d_star >= 2)."""
        return self.n_band // self._nb[d_star - 2]


@dataclass(frozen=True)
class FiniteDiffKernel:
    order: int
    coeffs: tuple[int, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)


def finite_diff(order: int) -> FiniteDiffKernel:
    """Forward difference coefficients Delta^N[0..N], built by repeated convolution."""
    if order <= 0:
        raise ConfigurationError("difference order must be positive")
    backward = np.array([1], dtype=np.int64)
    for _ in range(order):
        backward = np.convolve(backward, np.array([1, -1], dtype=np.int64))
    # backward[i] is Delta^N_-[-i]; reflecting gives the forward kernel
    return FiniteDiffKernel(order, tuple(int(c) for c in backward[::-1]))


@dataclass(frozen=True)
class DetectionConfig:
    order: int
    threshold: float
    geometry: BandGeometry
    t1: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigurationError("detection threshold must be positive")
        if self.order < 1:
            raise ConfigurationError("difference order must be positive")

    @classmethod
    def from_params(cls, params, lattice: Lattice, order: int) -> "DetectionConfig":
        return cls(order, params.h / 2, BandGeometry.from_lattice(lattice, params.band_width),
                   float(lattice.periods[0]))

    @property
    def kernel(self) -> FiniteDiffKernel:
        return finite_diff(self.order)


def band_index(kbar: Sequence[int], geometry: BandGeometry) -> tuple[int, ...]:
    return tuple(int(k) // n for k, n in zip(kbar, geometry.samples_per_band))


def neighbors(band: Sequence[int]) -> list[tuple[int, ...]]:
    if len(band) == 0:
        raise ValueError("neighbors need at least two dimensions")
    out = []
    for d in range(len(band)):
        for step in (1, -1):
            b = list(band)
            b[d] += step
            out.append(tuple(b))
    return out


def _band_slices(y: SampleField, band: Sequence[int], geometry: BandGeometry) -> list[slice]:
    sl = []
    for d, (b, n) in enumerate(zip(band, geometry.samples_per_band), start=1):
        lo = b * n - y.origin[d]
        if lo < 0 or lo + n > y.values.shape[d]:
            raise IndexError(f"band {tuple(band)} not fully inside the field")
        sl.append(slice(lo, lo + n))
    return sl


def band_layout(y: SampleField, geometry: BandGeometry) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """First band index and band counts per direction; the field must cover whole bands."""
    first, counts = [], []
    for d, n in enumerate(geometry.samples_per_band, start=1):
        lo, size = y.origin[d], y.values.shape[d]
        if lo % n or size % n:
            raise ValueError("field does not cover a contiguous block of whole bands")
        first.append(lo // n)
        counts.append(size // n)
    return tuple(first), tuple(counts)


def band_line_means(y: SampleField, geometry: BandGeometry) -> np.ndarray:
    """Per-band average of all lines along x1; shape (K1, bands_2, ..., bands_D)."""
    _, counts = band_layout(y, geometry)
    shape = [y.values.shape[0]]
    for c, n in zip(counts, geometry.samples_per_band):
        shape += [c, n]
    v = y.values.reshape(shape)
    return v.mean(axis=tuple(range(2, 2 * len(counts) + 1, 2)))


def forward_diff(x: np.ndarray, order: int, axis: int = 0) -> np.ndarray:
    """sum_j Delta^N[j] x[m + j] for every admissible m along ``axis``."""
    c = finite_diff(order).coeffs
    n = x.shape[axis] - order
    if n <= 0:
        raise IndexError("sequence shorter than the filter support")
    out = np.zeros(x.shape[:axis] + (n,) + x.shape[axis + 1:])
    for j, cj in enumerate(c):
        out += cj * np.take(x, np.arange(j, j + n), axis=axis)
    return out


def psi_bm_all(y: SampleField, cfg: DetectionConfig) -> np.ndarray:
    """<y, psi_{b,m}> for every band and every m whose support fits in the field.

    Entry ``[i, b...]`` corresponds to m = y.origin[0] + i and band
    ``first + b`` (see ``band_layout``).
    """
    return forward_diff(band_line_means(y, cfg.geometry), cfg.order, axis=0)


def apply_psi_bm(y: SampleField, band: Sequence[int], m: int, cfg: DetectionConfig) -> float:
    """(1/N^B) sum over band lines of sum_j Delta^N[j] y[m + j, kbar]."""
    i0 = m - y.origin[0]
    if i0 < 0 or i0 + cfg.order >= y.values.shape[0]:
        raise IndexError("filter support exceeds the field along x1")
    sl = _band_slices(y, band, cfg.geometry)
    block = y.values[(slice(i0, i0 + cfg.order + 1),) + tuple(sl)]
    c = cfg.kernel.as_array()
    return float(np.tensordot(c, block, axes=([0], [0])).sum() / cfg.geometry.n_band)


def apply_psi_bb(y: SampleField, band: Sequence[int], band_star: Sequence[int],
                 cfg: DetectionConfig, k1: int = 0) -> float:
    """Difference filter across the boundary between ``band`` and its upper neighbour.

    The support along x_{d*} is k_b..k_b+N with k_b = N^B_{d*} b*_{d*} - 1,
    evaluated on the x1 slice ``k1`` and averaged over the other in-band
    directions.
    """
    band, band_star = tuple(band), tuple(band_star)
    diff = [bs - b for b, bs in zip(band, band_star)]
    nz = [i for i, v in enumerate(diff) if v != 0]
    if len(band) != len(band_star) or len(nz) != 1 or diff[nz[0]] != 1:
        raise ValueError("band_star must be the upper neighbour of band along one direction")
    a = nz[0]  # axis offset, d* = a + 2
    n_star = cfg.geometry.samples_per_band[a]
    N = cfg.order
    if (N + 1) > 2 * n_star:
        raise ValueError("filter support wider than the two bands")
    kb = n_star * band_star[a] - 1
    i1 = k1 - y.origin[0]
    if i1 < 0 or i1 >= y.values.shape[0]:
        raise IndexError("x1 slice outside the field")
    sl = _band_slices(y, band, cfg.geometry)
    lo = kb - y.origin[a + 1]
    if lo < 0 or lo + N >= y.values.shape[a + 1]:
        raise IndexError("filter support outside the field")
    sl[a] = slice(lo, lo + N + 1)
    block = y.values[(i1,) + tuple(sl)]
    c = cfg.kernel.as_array()
    val = np.tensordot(block, c, axes=([a], [0]))
    return float(val.sum() / cfg.geometry.n_band_star(a + 2))
