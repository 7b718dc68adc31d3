"""Normalized mean squared error of the finite-K optimal power around its limit, against K."""

import argparse
from dataclasses import replace
from pathlib import Path

from ofdma_reuse.harness import load_config, run_mse_convergence

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=HERE / "configs" / "mse_convergence.json")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--trials", type=int)
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.trials:
        cfg = replace(cfg, trials=args.trials)
    out = Path(args.out or cfg.output_dir)
    for p in run_mse_convergence(cfg, out):
        print(f"K = {p.k_per_cell:>3}  nmse {p.nmse:.4e} +- {p.stderr:.1e}  failed {p.failed}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
