"""Tabulate the per-filter error bound and the success lower bound over (sigma, t2).

    python3 scripts/bound_table.py configs/desk.cfg --sup-norm 1.0
"""

import argparse

from mdfold.experiment import load_config
from mdfold.recovery import compute_bounds


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--sup-norm", type=float, default=1.0)
    args = ap.parse_args()
    cfg = load_config(args.config)
    print(f"{'sigma':>7} {'t2':>7} {'C':>9} {'p_err_fold':>11} {'kappa_min':>10} {'p_acc':>10}")
    for s in cfg.sigma_list:
        for t2 in cfg.t2_list:
            r = compute_bounds(cfg.params(), cfg.lattice(t2), cfg.omega, args.sup_norm, s,
                               cfg.diff_order, cfg.grid(t2))
            print(f"{s:>7g} {t2:>7g} {r.C:>9.4f} {r.p_err_fold:>11.4g} {r.kappa_min:>10.4f} {r.p_acc:>10.3g}")


if __name__ == "__main__":
    main()
