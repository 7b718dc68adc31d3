"""Optimal against fixed-pivot total power over the sum rate, at K = 25 and 50 users per cell."""

import argparse
from dataclasses import replace
from pathlib import Path

from ofdma_reuse.harness import load_config, run_compare

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=HERE / "configs" / "compare.json")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.trials:
        cfg = replace(cfg, trials=args.trials)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out or cfg.output_dir)
    rows, _ = run_compare(cfg, out)
    print(f"{'r_t (Mb/s)':>10} {'K':>4} {'E[Q opt]':>12} {'E[Q subopt]':>12} {'Q_T limit':>12} {'gap':>8} {'failed':>6}")
    for r in rows:
        print(f"{r.r_t_bps / 1e6:>10.1f} {r.k_per_cell:>4} {r.mean_q_opt:>12.4e} {r.mean_q_subopt:>12.4e} "
              f"{r.q_t_asymptotic:>12.4e} {r.mean_gap:>8.2%} {r.failed:>6}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
