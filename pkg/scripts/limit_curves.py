"""Limit-regime reuse factor, pivot distance and total power against the sum rate (s = 2 and 3)."""

import argparse
from pathlib import Path

from ofdma_reuse.harness import load_config, run_asymptotic

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=HERE / "configs" / "limit_curves.json")
    ap.add_argument("--out", help="output directory (overrides the config)")
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    results = run_asymptotic(cfg, out)
    print(f"{'s':>3} {'r_t (Mb/s)':>10} {'alpha_opt':>10} {'d_opt (m)':>10} {'Q_T (W)':>12}")
    for s, sweeps in results.items():
        for r_t, sw in zip(cfg.r_t_bps, sweeps):
            print(f"{s:>3} {r_t / 1e6:>10.1f} {sw.alpha_opt:>10.4f} {sw.d_opt:>10.2f} {sw.best.q_t:>12.4e}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
