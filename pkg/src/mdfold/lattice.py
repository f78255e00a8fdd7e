"""Lattice geometry, separable sinc-series test signals and signal diagnostics."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

_SINC_SERIES_CUTOFF = 1e-6
_INT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Lattice:
    """Sampling lattice: sample k sits at V @ T @ k.

    Columns of ``basis`` must be unit vectors and linearly independent.
    """

    basis: np.ndarray
    periods: np.ndarray

    def __post_init__(self):
        V = np.array(self.basis, dtype=float)
        T = np.array(self.periods, dtype=float).reshape(-1)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError("basis must be a square matrix")
        if V.shape[0] != T.size:
            raise ValueError("basis and periods disagree on the dimension")
        norms = np.linalg.norm(V, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError(f"basis columns must have unit norm, got {norms}")
        if abs(np.linalg.det(V)) < 1e-12:
            raise ValueError("basis must be invertible")
        if np.any(T <= 0):
            raise ValueError("sampling periods must be positive")
        V.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "basis", V)
        object.__setattr__(self, "periods", T)

    @property
    def dimension(self) -> int:
        return self.periods.size

    @property
    def dual_basis(self) -> np.ndarray:
        return np.linalg.inv(self.basis).T

    def points(self, k: np.ndarray) -> np.ndarray:
        """Ambient coordinates V T k for index rows ``k`` (shape (..., D))."""
        return (np.asarray(k, dtype=float) * self.periods) @ self.basis.T

    @classmethod
    def normalized(cls, basis, periods) -> "Lattice":
        V = np.array(basis, dtype=float)
        return cls(V / np.linalg.norm(V, axis=0), periods)


@dataclass(frozen=True)
class Bandwidth:
    omega: tuple[float, ...]

    def __post_init__(self):
        om = tuple(float(w) for w in np.atleast_1d(self.omega))
        if not om or any(w <= 0 for w in om):
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "omega", om)

    @property
    def dimension(self) -> int:
        return len(self.omega)


def nyquist_ok(lattice: Lattice, bw: Bandwidth) -> bool:
    """True iff T_d < pi / Omega_d along every lattice direction."""
    return all(t < math.pi / w for t, w in zip(lattice.periods, bw.omega))


@dataclass(frozen=True, eq=False)
class BandlimitedSignal:
    """f0(x) = sum_k c_k prod_d sinc(Omega_d x_d - k_d pi) in lattice coordinates.

    ``coeffs`` has odd length along every axis; entry ``i`` on axis ``d``
    corresponds to k_d = i - (n_d - 1) / 2. ``domain`` is a per-dimension
    ``(lo, hi)`` interval.
    """

    bandwidth: Bandwidth
    coeffs: np.ndarray
    domain: tuple[tuple[float, float], ...]

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != self.bandwidth.dimension:
            raise ValueError("coefficient table rank must equal the dimension")
        if any(n % 2 == 0 for n in c.shape):
            raise ValueError("coefficient index box must be symmetric around 0")
        dom = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        if len(dom) != c.ndim or any(lo > hi for lo, hi in dom):
            raise ValueError("invalid domain box")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "domain", dom)

    @property
    def dimension(self) -> int:
        return self.coeffs.ndim

    @property
    def half_widths(self) -> tuple[int, ...]:
        return tuple((n - 1) // 2 for n in self.coeffs.shape)

    def in_domain(self, x: Sequence[float]) -> bool:
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, self.domain))


def sinc(u: np.ndarray) -> np.ndarray:
    """Unnormalized sinc, sin(u)/u, with a Taylor branch near zero."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, u)
    return np.where(small, 1.0 - u * u / 6.0, np.sin(safe) / safe)


def sinc_matrix(omega: float, half_width: int, x: np.ndarray) -> np.ndarray:
    """Matrix S[i, j] = sinc(omega * x_i - k_j * pi) for k_j = -K..K."""
    k = np.arange(-half_width, half_width + 1)
    return sinc(omega * np.asarray(x, dtype=float)[:, None] - k[None, :] * math.pi)


def eval_grid(sig: BandlimitedSignal, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate the signal on the tensor grid axes[0] x ... x axes[D-1]."""
    if len(axes) != sig.dimension:
        raise ValueError("need one coordinate axis per dimension")
    out = sig.coeffs
    # contract one axis at a time; the contracted axis moves to the end
    for d, x in enumerate(axes):
        S = sinc_matrix(sig.bandwidth.omega[d], sig.half_widths[d], x)
        out = np.tensordot(out, S, axes=([0], [1]))
    return out


def eval_signal(sig: BandlimitedSignal, x: Sequence[float]) -> float:
    """Scalar evaluation at lattice coordinate ``x`` (outside the domain box is allowed)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != sig.dimension:
        raise ValueError("point dimension mismatch")
    return float(eval_grid(sig, [x[d : d + 1] for d in range(x.size)]).reshape(()))


@dataclass(frozen=True)
class GridSpec:
    """Inclusive integer index box lo[d] <= k_d <= hi[d]."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi length mismatch")
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(max(0, h - l + 1) for l, h in zip(self.lo, self.hi))

    @property
    def empty(self) -> bool:
        return any(n == 0 for n in self.shape)

    def axis(self, d: int) -> np.ndarray:
        return np.arange(self.lo[d], self.hi[d] + 1)

    @classmethod
    def from_domain(cls, lattice: Lattice, domain_min: float, domain_max: float,
                    band_width: float | None = None) -> "GridSpec":
        """Index box covering [domain_min, domain_max] along x1 and whole bands along x2..xD."""
        lo, hi = [], []
        for d, T in enumerate(lattice.periods):
            if d == 0 or band_width is None:
                lo.append(math.ceil(domain_min / T - _INT_TOL))
                hi.append(math.floor(domain_max / T + _INT_TOL))
                continue
            nb = samples_per_band(band_width, T)
            b_lo = math.ceil(domain_min / band_width - _INT_TOL)
            b_hi = math.floor(domain_max / band_width + _INT_TOL) - 1
            lo.append(b_lo * nb)
            hi.append((b_hi + 1) * nb - 1)
        return cls(tuple(lo), tuple(hi))


def samples_per_band(band_width: float, period: float) -> int:
    """N^B_d = B / T_d, which must be a positive integer."""
    ratio = band_width / period
    n = round(ratio)
    if n < 1 or abs(ratio - n) > _INT_TOL * max(1.0, ratio):
        raise ValueError(f"band width {band_width} is not an integer multiple of period {period}")
    return int(n)


@dataclass(frozen=True, eq=False)
class SampleField:
    """Real samples on an integer index box; ``values[i]`` sits at k = origin + i."""

    values: np.ndarray
    origin: tuple[int, ...]

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != len(self.origin):
            raise ValueError("origin length must match field rank")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(int(o) for o in self.origin))

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.origin, tuple(o + n - 1 for o, n in zip(self.origin, self.values.shape)))

    def at(self, k: Sequence[int]) -> float:
        idx = tuple(int(ki) - o for ki, o in zip(k, self.origin))
        if any(i < 0 or i >= n for i, n in zip(idx, self.values.shape)):
            raise IndexError(f"index {tuple(k)} outside field")
        return float(self.values[idx])

    def with_values(self, values: np.ndarray) -> "SampleField":
        if np.shape(values) != self.values.shape:
            raise ValueError("shape mismatch")
        return SampleField(values, self.origin)

    def congruent(self, other: "SampleField") -> bool:
        return self.origin == other.origin and self.values.shape == other.values.shape


def zeros_field(grid: GridSpec) -> SampleField:
    return SampleField(np.zeros(grid.shape), grid.lo)


def sample_on_lattice(sig: BandlimitedSignal, lattice: Lattice, grid: GridSpec) -> SampleField:
    """gamma[k] = f0(T k) for every k in the grid."""
    if grid.empty:
        raise ValueError("empty grid")
    if grid.dimension != sig.dimension or lattice.dimension != sig.dimension:
        raise ValueError("grid dimension does not match the lattice or the signal")
    axes = [grid.axis(d) * lattice.periods[d] for d in range(grid.dimension)]
    return SampleField(eval_grid(sig, axes), grid.lo)


@dataclass(frozen=True)
class SignalDiagnostics:
    sup_norm: float
    intra_band_variation: float
    bernstein_margin: float
    oversample: int


def _fine_axis(lo: int, hi: int, period: float, oversample: int) -> np.ndarray:
    j = np.arange(lo * oversample, hi * oversample + 1)
    return (j / oversample) * period


def diagnostics(sig: BandlimitedSignal, lattice: Lattice, params, oversample: int = 8,
                grid: GridSpec | None = None) -> SignalDiagnostics:
    """Grid estimates of sup|f|, the intra-band variation and the Bernstein margin.

    ``params`` only needs a ``band_width`` attribute. Everything is evaluated
    band by band at ``oversample`` times the lattice density.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    D = sig.dimension
    B = params.band_width
    if grid is None:
        lo, hi = zip(*sig.domain)
        grid = GridSpec.from_domain(lattice, min(lo), max(hi), B if D > 1 else None)
    T = lattice.periods
    omega = sig.bandwidth.omega
    x1 = _fine_axis(grid.lo[0], grid.hi[0], T[0], oversample)
    band_axes = []
    for d in range(1, D):
        nb = samples_per_band(B, T[d])
        b_lo, b_hi = grid.lo[d] // nb, grid.hi[d] // nb
        band_axes.append([(b * nb, nb) for b in range(b_lo, b_hi + 1)])

    sup = var = 0.0
    deriv = [0.0] * D
    for combo in itertools.product(*band_axes):
        axes = [x1]
        for d, (k0, nb) in enumerate(combo, start=1):
            # one extra fine point closes the band for derivative estimates only
            axes.append(((k0 * oversample + np.arange(nb * oversample + 1)) / oversample) * T[d])
        F = eval_grid(sig, axes)
        inner = F[(slice(None),) + (slice(0, -1),) * (D - 1)]
        sup = max(sup, float(np.max(np.abs(inner))))
        if D > 1:
            flat = inner.reshape(inner.shape[0], -1)
            var = max(var, float(np.max(flat.max(axis=1) - flat.min(axis=1))))
        for d in range(D):
            if F.shape[d] >= 3:
                step = axes[d][1] - axes[d][0]
                g = (np.take(F, np.arange(2, F.shape[d]), axis=d)
                     - np.take(F, np.arange(0, F.shape[d] - 2), axis=d)) / (2 * step)
                deriv[d] = max(deriv[d], float(np.max(np.abs(g))))
    margin = max(deriv[d] - omega[d] * sup for d in range(D))
    return SignalDiagnostics(sup, var, margin, oversample)


def bernstein_fd_slack(omega: float, sup_norm: float, step: float) -> float:
    """Truncation bound of a central difference: step^2/6 * sup|f'''| <= step^2/6 * omega^3 * sup|f|."""
    return step * step / 6.0 * omega**3 * sup_norm


def write_coefficients(sig: BandlimitedSignal, path: str | Path) -> None:
    """Dump c_k as ``k1,...,kD,value`` rows in row-major order."""
    D = sig.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"k{d + 1}" for d in range(D)] + ["value"])
        K = sig.half_widths
        for idx in np.ndindex(*sig.coeffs.shape):
            k = [i - K[d] for d, i in enumerate(idx)]
            w.writerow(k + [f"{sig.coeffs[idx]:.17g}"])


def read_coefficients(path: str | Path, omega: Sequence[float],
                      domain: Sequence[tuple[float, float]]) -> BandlimitedSignal:
    field_ = read_field(path)
    K = [-o for o in field_.origin]
    if any(n != 2 * k + 1 for n, k in zip(field_.values.shape, K)):
        raise ValueError("coefficient index box must be symmetric around 0")
    return BandlimitedSignal(Bandwidth(tuple(omega)), field_.values, tuple(domain))


def write_field(f: SampleField, path: str | Path) -> None:
    D = f.values.ndim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"k{d + 1}" for d in range(D)] + ["value"])
        for idx in np.ndindex(*f.values.shape):
            k = [i + o for i, o in zip(idx, f.origin)]
            w.writerow(k + [f"{f.values[idx]:.17g}"])


def read_field(path: str | Path) -> SampleField:
    """Load a ``k1,...,kD,value`` CSV; the indices must fill a box."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "value":
        raise ValueError(f"{path}: missing k1,...,value header")
    D = len(rows[0]) - 1
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no samples")
    ks = np.array([[int(v) for v in r[:D]] for r in body], dtype=np.int64)
    vals = np.array([float(r[D]) for r in body])
    lo = ks.min(axis=0)
    shape = tuple(ks.max(axis=0) - lo + 1)
    if int(np.prod(shape)) != len(body):
        raise ValueError(f"{path}: indices do not fill a box")
    out = np.full(shape, np.nan)
    out[tuple((ks - lo).T)] = vals
    if np.isnan(out).any():
        raise ValueError(f"{path}: duplicate or missing indices")
    return SampleField(out, tuple(int(v) for v in lo))
