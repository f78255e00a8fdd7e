"""Command-line entry point: ``mdfold {encode,recover,bench,bounds}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .encoder import encode_md, write_ledger
from .errors import ConfigurationError
from .experiment import emit_outputs, load_config, run_sweep
from .filters import DetectionConfig
from .lattice import read_coefficients, read_field, write_field
from .recovery import compute_bounds, reconstruct, write_recovery

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed).validate()
    return cfg


def _t2(cfg, args) -> float:
    t2 = args.t2 if args.t2 is not None else cfg.t2_list[0]
    if args.t2 is not None:
        dataclasses.replace(cfg, t2_list=(t2,)).validate()
    return t2


def _outdir(cfg, args) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_encode(args) -> int:
    cfg = _config(args)
    t2 = _t2(cfg, args)
    sig = read_coefficients(args.signal, cfg.omega, [(cfg.domain_min, cfg.domain_max)] * cfg.dimension)
    res = encode_md(sig, cfg.lattice(t2), cfg.params(), cfg.grid(t2),
                    q=cfg.oversample_q, oversample=cfg.oversample_diag, strict=args.strict)
    out = _outdir(cfg, args)
    write_field(res.folded, out / "folded.csv")
    write_field(res.clean, out / "clean.csv")
    write_ledger(res.ledger, out / "ledger_events.csv", out / "ledger_M.csv")
    print(f"bands={len(res.ledger.bands)} events={res.ledger.n_events} "
          f"intra_band_variation={res.intra_band_variation:.6g} precondition_ok={res.precondition_ok}")
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg = _config(args)
    t2 = _t2(cfg, args)
    lattice = cfg.lattice(t2)
    params = cfg.params()
    y = read_field(args.samples)
    det = DetectionConfig.from_params(params, lattice, cfg.diff_order)
    res = reconstruct(y, det, params, lattice=lattice, omega=cfg.omega, sup_norm=args.sup_norm)
    out = _outdir(cfg, args)
    write_field(res.recovered, out / "recovered.csv")
    write_recovery(res.detection, out / "recovery_events.csv", out / "recovery_M.csv")
    (out / "conditions.txt").write_text(res.conditions.as_text())
    n = sum(len(v) for v in res.detection.folds.values())
    print(f"bands={len(res.detection.folds)} folds={n}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    if args.full:
        cfg = dataclasses.replace(cfg, trials=100)
    result = run_sweep(cfg, jobs=args.jobs, timing=args.timing)
    for p in emit_outputs(result, _outdir(cfg, args)):
        print(p)
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _config(args)
    for t2 in cfg.t2_list:
        for s in cfg.sigma_list:
            rep = compute_bounds(cfg.params(), cfg.lattice(t2), cfg.omega, args.sup_norm,
                                 s, cfg.diff_order, cfg.grid(t2))
            print(f"sigma={s!r}\nt2={t2!r}\nsup_norm={args.sup_norm!r}")
            print(rep.as_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdfold", description=__doc__)
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="fold the lattice samples of a coefficient table")
    p.add_argument("--config", required=True)
    p.add_argument("--signal", required=True, help="coefficient CSV k1,...,kD,value")
    p.add_argument("--out", default=None)
    p.add_argument("--t2", type=float, default=None, help="period along x2..xD (default: first of t2_list)")
    p.add_argument("--strict", action="store_true", help="fail when the operator is not well defined")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("recover", help="reconstruct from a folded sample CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--t2", type=float, default=None)
    p.add_argument("--sup-norm", type=float, default=None, help="sup|f| for the condition report")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("bench", help="run the accuracy sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--full", action="store_true", help="100 trials per cell")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--timing", action="store_true",
                   help="fill wall_ms with measured times (makes sweep.csv run-dependent)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bounds", help="print probability bounds for every (sigma, t2) cell")
    p.add_argument("--config", required=True)
    p.add_argument("--sup-norm", type=float, default=1.0)
    p.set_defaults(func=cmd_bounds)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
