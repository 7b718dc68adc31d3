"""Mean fixed-pivot total power against the pivot distance (r_t = 10 Mb/s, K = 50)."""

import argparse
from dataclasses import replace
from pathlib import Path

from ofdma_reuse.harness import load_config, run_sensitivity

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=HERE / "configs" / "sensitivity.json")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--trials", type=int)
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.trials:
        cfg = replace(cfg, trials=args.trials)
    out = Path(args.out or cfg.output_dir)
    curve = run_sensitivity(cfg, out)
    for d, q in zip(curve.d_grid, curve.mean_q):
        print(f"{d:>8.1f} m  {q:.5e}")
    print(f"argmin {curve.d_argmin:.1f} m, limit d_opt {curve.d_opt:.1f} m, grid step {curve.grid_step:.1f} m")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
