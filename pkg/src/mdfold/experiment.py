"""Seeded Monte Carlo sweep comparing the hysteresis pipeline with the ideal-modulo baseline."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import HysteresisParams, encode_md, ideal_modulo
from .errors import ConfigurationError
from .filters import DetectionConfig, forward_diff
from .lattice import (BandlimitedSignal, Bandwidth, GridSpec, Lattice, SampleField,
                      samples_per_band)
from .recovery import reconstruct, score_recovery
from .usf import UsfConfig, usf_recover_field

log = logging.getLogger(__name__)

METHODS = ("md-hysteresis", "ideal-usf")
SWEEP_HEADER = ["method", "sigma", "t2", "trials", "successes", "accuracy", "mean_max_err", "wall_ms"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep configuration. Every lattice direction 2..D uses the current T2 value."""

    seed: int = 20240611
    dimension: int = 2
    omega: tuple[float, ...] = (1.0, 1.0)
    basis: tuple[tuple[float, ...], ...] = ((0.97, 0.32), (0.25, 0.95))
    t1: float = 0.02
    t2_list: tuple[float, ...] = (0.005, 0.01, 0.04, 0.08)
    sigma_list: tuple[float, ...] = (0.04, 0.053, 0.067, 0.08)
    lam: float = 0.3
    h: float = 0.19
    band_width: float = 0.32
    diff_order: int = 1
    trials: int = 25
    domain_min: float = -5.0
    domain_max: float = 5.0
    oversample_diag: int = 8
    oversample_q: int = 8
    out_dir: str = "out"

    def errors(self) -> list[str]:
        errs = []
        D = self.dimension
        if not 0 <= self.seed < 2**64:
            errs.append("seed must be a 64-bit unsigned integer")
        if D < 1:
            errs.append("dimension must be >= 1")
        if len(self.omega) != D or any(w <= 0 for w in self.omega):
            errs.append("omega needs D positive entries")
        if len(self.basis) != D or any(len(r) != D for r in self.basis):
            errs.append("basis needs D rows of D entries")
        elif abs(np.linalg.det(np.array(self.basis))) < 1e-12:
            errs.append("basis must be invertible")
        if self.t1 <= 0:
            errs.append("t1 must be positive")
        if not self.lam > 0:
            errs.append("lambda must be positive")
        if not 0 <= self.h < 2 * self.lam / 3:
            errs.append("h must satisfy 0 <= h < 2*lambda/3")
        if self.band_width <= 0:
            errs.append("band_width must be positive")
        if self.diff_order < 1:
            errs.append("diff_order must be >= 1")
        if self.trials < 1:
            errs.append("trials must be >= 1")
        if not self.domain_min < 0 < self.domain_max:
            errs.append("domain must contain 0 in its interior")
        if self.oversample_diag < 1 or self.oversample_q < 1:
            errs.append("oversampling factors must be >= 1")
        if any(s < 0 for s in self.sigma_list):
            errs.append("sigma values must be non-negative")
        if len(set(self.sigma_list)) != len(self.sigma_list) or len(set(self.t2_list)) != len(self.t2_list):
            errs.append("sigma_list and t2_list must not repeat values")
        for t2 in self.t2_list:
            if t2 <= 0:
                errs.append(f"t2={t2} must be positive")
                continue
            try:
                samples_per_band(self.band_width, t2)
            except ValueError:
                errs.append(f"band_width/t2 is not an integer for t2={t2}")
            if len(self.omega) == D and D >= 1 and self.t1 > 0:
                periods = [self.t1] + [t2] * (D - 1)
                if not all(t < math.pi / w for t, w in zip(periods, self.omega)):
                    errs.append(f"sampling below the Nyquist rate for t2={t2}")
        return errs

    def validate(self) -> "ExperimentConfig":
        errs = self.errors()
        if errs:
            raise ConfigurationError("; ".join(errs))
        return self

    def lattice(self, t2: float) -> Lattice:
        return Lattice.normalized(np.array(self.basis, dtype=float),
                                  [self.t1] + [t2] * (self.dimension - 1))

    def params(self) -> HysteresisParams:
        return HysteresisParams(self.lam, self.h, self.band_width)

    def grid(self, t2: float) -> GridSpec:
        B = self.band_width if self.dimension > 1 else None
        return GridSpec.from_domain(self.lattice(t2), self.domain_min, self.domain_max, B)


_FLOAT_LISTS = {"omega", "t2_list", "sigma_list"}
_SCALARS = {"t1": float, "lambda": float, "h": float, "band_width": float, "domain_min": float,
            "domain_max": float, "seed": int, "dimension": int, "diff_order": int,
            "trials": int, "oversample_diag": int, "oversample_q": int, "out_dir": str}
_RENAME = {"lambda": "lam"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key=value`` lines (``#`` starts a comment) into a validated config."""
    values: dict = {}
    rows: dict[int, tuple[float, ...]] = {}
    errs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {lineno}: expected key=value")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            if key in _FLOAT_LISTS:
                values[key] = _floats(val)
            elif key.startswith("basis_row_"):
                rows[int(key[len("basis_row_"):])] = _floats(val)
            elif key in _SCALARS:
                values[_RENAME.get(key, key)] = _SCALARS[key](val)
            else:
                errs.append(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            errs.append(f"line {lineno}: bad value for {key!r}")
    if rows:
        D = values.get("dimension", len(rows))
        if sorted(rows) != list(range(1, D + 1)):
            errs.append(f"need basis_row_1..basis_row_{D}")
        else:
            values["basis"] = tuple(rows[i] for i in range(1, D + 1))
    if errs:
        raise ConfigurationError("; ".join(errs))
    return ExperimentConfig(**values).validate()


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    return parse_config(text)


# --------------------------------------------------------------------------- randomness


def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based Philox generator addressed by (seed, key...).

    Keys are derived from cell values, not positions, so removing or
    reordering cells leaves every other cell's streams untouched.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def signal_stream(seed: int, trial: int) -> np.random.Generator:
    return stream(seed, 0, trial)


def noise_stream(seed: int, sigma: float, t2: float, trial: int) -> np.random.Generator:
    return stream(seed, 1, _float_key(sigma), _float_key(t2), trial)


def gen_signal(rng: np.random.Generator, dimension: int, omega: Sequence[float],
               domain: tuple[float, float], half_width: int = 1) -> BandlimitedSignal:
    """Uniform [-1, 1] coefficients on the index box |k_d| <= half_width."""
    shape = (2 * half_width + 1,) * dimension
    coeffs = 2.0 * rng.random(shape) - 1.0
    return BandlimitedSignal(Bandwidth(tuple(omega)), coeffs, (tuple(domain),) * dimension)


def gen_noise(sigma: float, grid: GridSpec, rng: np.random.Generator) -> SampleField:
    """N(0, sigma^2) samples by Box-Muller; both variates of each pair are used."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    n = math.prod(grid.shape)
    if sigma == 0:
        return SampleField(np.zeros(grid.shape), grid.lo)
    pairs = (n + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2 * np.pi * u2)
    z[1::2] = r * np.sin(2 * np.pi * u2)
    return SampleField(sigma * z[:n].reshape(grid.shape), grid.lo)


def checksum(*arrays: np.ndarray) -> str:
    hsh = hashlib.sha256()
    for a in arrays:
        hsh.update(np.ascontiguousarray(a).tobytes())
    return hsh.hexdigest()[:16]


# --------------------------------------------------------------------------- trials


@dataclass(frozen=True)
class MethodOutcome:
    success: bool
    max_err: float
    wall_ms: float
    inputs_checksum: str


@dataclass(frozen=True)
class TrialOutcome:
    sigma: float
    t2: float
    trial: int
    methods: dict
    usf_noise_violation: bool


def run_trial(cfg: ExperimentConfig, sigma: float, t2: float, trial: int) -> TrialOutcome:
    lattice = cfg.lattice(t2)
    params = cfg.params()
    grid = cfg.grid(t2)
    sig = gen_signal(signal_stream(cfg.seed, trial), cfg.dimension, cfg.omega,
                     (cfg.domain_min, cfg.domain_max))
    noise = gen_noise(sigma, grid, noise_stream(cfg.seed, sigma, t2, trial))
    enc = encode_md(sig, lattice, params, grid, q=cfg.oversample_q, oversample=cfg.oversample_diag)
    gamma = enc.clean
    out = {}

    # both pipelines see the same gamma and eta; the checksum is taken from what each consumes
    t0 = time.perf_counter()
    y = enc.folded.with_values(enc.folded.values + noise.values)
    det = DetectionConfig.from_params(params, lattice, cfg.diff_order)
    rec = reconstruct(y, det, params)
    wall = (time.perf_counter() - t0) * 1e3
    sc = score_recovery(rec.recovered, gamma, noise, params.h)
    out["md-hysteresis"] = MethodOutcome(sc.success, sc.max_err, wall, checksum(gamma.values, noise.values))

    t0 = time.perf_counter()
    y1 = gamma.with_values(ideal_modulo(gamma.values, cfg.lam) + noise.values)
    ucfg = UsfConfig(cfg.lam, cfg.diff_order, cfg.t1, cfg.omega[0])
    rec1 = usf_recover_field(y1, ucfg)
    wall = (time.perf_counter() - t0) * 1e3
    sc = score_recovery(rec1, gamma, noise, 2 * cfg.lam)
    out["ideal-usf"] = MethodOutcome(sc.success, sc.max_err, wall, checksum(gamma.values, noise.values))

    # a baseline line can only fail where |Delta^N eta| >= lambda - |Delta^N gamma|
    dg = forward_diff(gamma.values, cfg.diff_order, axis=0)
    dn = forward_diff(noise.values, cfg.diff_order, axis=0)
    violation = bool(np.any(np.abs(dn) >= cfg.lam - np.abs(dg)))
    log.debug("sigma=%g t2=%g trial=%d inputs=%s", sigma, t2, trial, out["md-hysteresis"].inputs_checksum)
    return TrialOutcome(sigma, t2, trial, out, violation)


def _run_task(args):
    cfg, sigma, t2, trial = args
    return run_trial(cfg, sigma, t2, trial)


# --------------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepRow:
    method: str
    sigma: float
    t2: float
    trials: int
    successes: int
    mean_max_err: float
    wall_ms: int = 0

    @property
    def accuracy(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...] = ()
    trials: tuple[TrialOutcome, ...] = field(default=(), compare=False, repr=False)

    def row(self, method: str, sigma: float, t2: float) -> SweepRow:
        for r in self.rows:
            if r.method == method and r.sigma == sigma and r.t2 == t2:
                return r
        raise KeyError((method, sigma, t2))


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, timing: bool = False) -> SweepResult:
    """All (sigma, t2, trial) tasks, merged by key so the result is independent of ``jobs``."""
    cfg.validate()
    tasks = [(cfg, s, t, k) for s in cfg.sigma_list for t in cfg.t2_list for k in range(cfg.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        outcomes = [_run_task(t) for t in tasks]
    by_cell: dict = {}
    for o in outcomes:
        by_cell.setdefault((o.sigma, o.t2), []).append(o)
    rows = []
    for method in METHODS:
        for s in cfg.sigma_list:
            for t in cfg.t2_list:
                cell = sorted(by_cell[(s, t)], key=lambda o: o.trial)
                res = [o.methods[method] for o in cell]
                wall = int(round(sum(r.wall_ms for r in res))) if timing else 0
                rows.append(SweepRow(method, s, t, len(res), sum(r.success for r in res),
                                     float(np.mean([r.max_err for r in res])), wall))
    return SweepResult(tuple(rows), tuple(outcomes))


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in result.rows:
            w.writerow([r.method, repr(r.sigma), repr(r.t2), r.trials, r.successes,
                        f"{r.accuracy:.4f}", f"{r.mean_max_err:.17g}", r.wall_ms])


def read_sweep_csv(path: str | Path) -> SweepResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SWEEP_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            method, s, t, n, k, _acc, err, wall = rec
            rows.append(SweepRow(method, float(s), float(t), int(n), int(k), float(err), int(wall)))
    return SweepResult(tuple(rows))


def _shade(acc: float) -> str:
    # white at 0, dark blue at 1
    lo, hi = np.array([247, 251, 255]), np.array([8, 48, 107])
    c = np.rint(lo + (hi - lo) * acc).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*c)


def heatmap_svg(result: SweepResult, method: str) -> str:
    rows = [r for r in result.rows if r.method == method]
    sigmas = sorted({r.sigma for r in rows})
    t2s = sorted({r.t2 for r in rows})
    cw, ch, left, top = 80, 40, 90, 50
    width = left + cw * max(len(t2s), 1) + 20
    height = top + ch * max(len(sigmas), 1) + 60
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">'
           f'accuracy: {method}</text>']
    for i, s in enumerate(reversed(sigmas)):
        y = top + i * ch
        out.append(f'<text x="{left - 8}" y="{y + ch / 2 + 4:.0f}" text-anchor="end">{s:g}</text>')
        for j, t in enumerate(t2s):
            r = next(r for r in rows if r.sigma == s and r.t2 == t)
            x = left + j * cw
            fill = _shade(r.accuracy)
            ink = "#ffffff" if r.accuracy > 0.5 else "#000000"
            out.append(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#888888"/>')
            out.append(f'<text x="{x + cw / 2:.0f}" y="{y + ch / 2 + 4:.0f}" text-anchor="middle" '
                       f'fill="{ink}">{r.accuracy:.2f}</text>')
    base = top + ch * len(sigmas)
    for j, t in enumerate(t2s):
        out.append(f'<text x="{left + j * cw + cw / 2:.0f}" y="{base + 18}" text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{left + cw * len(t2s) / 2:.0f}" y="{base + 40}" text-anchor="middle">T2 [s]</text>')
    out.append(f'<text x="16" y="{top + ch * len(sigmas) / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ch * len(sigmas) / 2:.0f})">sigma</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(result: SweepResult, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "sweep.csv"]
    write_sweep_csv(result, written[0])
    methods = [m for m in METHODS if any(r.method == m for r in result.rows)] or list(METHODS)
    for m in methods:
        p = outdir / f"accuracy_{m}.svg"
        p.write_text(heatmap_svg(result, m))
        written.append(p)
    return written


def binomial_se(acc: float, n: int) -> float:
    return math.sqrt(acc * (1 - acc) / n) if n else 0.0
