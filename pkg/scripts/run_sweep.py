"""Run the accuracy sweep for a config and print the accuracy grids with trend checks.

    python3 scripts/run_sweep.py configs/desk.cfg --jobs 4
"""

import argparse

from mdfold.experiment import METHODS, binomial_se, emit_outputs, load_config, run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    res = run_sweep(cfg, jobs=args.jobs)
    emit_outputs(res, args.out or cfg.out_dir)

    t2s = sorted(cfg.t2_list)
    for method in METHODS:
        print(f"\n{method}: accuracy (rows sigma, columns t2)")
        print("sigma   " + "".join(f"{t:>8g}" for t in t2s))
        for s in sorted(cfg.sigma_list):
            print(f"{s:<8g}" + "".join(f"{res.row(method, s, t).accuracy:>8.2f}" for t in t2s))

    s = max(cfg.sigma_list)
    n = cfg.trials
    md = [res.row("md-hysteresis", s, t).accuracy for t in t2s]
    us = [res.row("ideal-usf", s, t).accuracy for t in t2s]
    md_trend = all(b <= a + binomial_se(a, n) for a, b in zip(md, md[1:]))
    us_trend = us[0] <= us[-1] - binomial_se(us[-1], n) + 1e-12
    print(f"\nsigma={s:g}: hysteresis non-increasing in t2: {md_trend}; "
          f"baseline at smallest t2 not above largest: {us_trend}")


if __name__ == "__main__":
    main()
