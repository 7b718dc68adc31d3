"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .kernels import KernelConvergenceError, KernelDomainError
from .optimal import InfeasibleError, optimal_allocate
from .system import read_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

SUBCOMMAND_KIND = {
    "asymptotic": "asymptotic_sweep",
    "compare": "compare",
    "sensitivity": "sensitivity",
    "mse": "mse_convergence",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ofdma-reuse", description="Two-cell OFDMA reuse allocation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, kind in SUBCOMMAND_KIND.items():
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--trials", type=int, help="override the configured trial count")
    p = sub.add_parser("allocate", help="optimal allocation for one scenario file")
    p.add_argument("scenario", nargs="?", help="scenario JSON")
    p.add_argument("--config", help="scenario JSON (alternative to the positional argument)")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--seed", type=int, help="accepted for interface symmetry; allocation is deterministic")
    p.add_argument("--method", choices=("pivot", "grid"), default="pivot")
    return parser


def _experiment_config(args, kind) -> harness.ExperimentConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise harness.ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise harness.ConfigError("config: top level must be an object")
    doc = dict(doc, kind=kind)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["output_dir"] = args.out
    if args.trials is not None:
        doc["trials"] = args.trials
    return harness.ExperimentConfig.from_dict(doc)


def _run_experiment(cfg: harness.ExperimentConfig):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runners = {
        "asymptotic_sweep": harness.run_asymptotic,
        "compare": harness.run_compare,
        "sensitivity": harness.run_sensitivity,
        "mse_convergence": harness.run_mse_convergence,
    }
    runners[cfg.kind](cfg, out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _run_allocate(args):
    path = args.scenario or args.config
    if not path:
        raise harness.ConfigError("scenario: a scenario file is required")
    try:
        params, (cell_a, cell_b) = read_scenario(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise harness.ConfigError(f"scenario: cannot read {path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise harness.ConfigError(f"scenario: {exc}") from exc
    result = optimal_allocate(cell_a, cell_b, params, method=args.method)
    doc = dict(result.to_dict(), system=params.to_dict())
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "allocate":
            _run_allocate(args)
        else:
            _run_experiment(_experiment_config(args, SUBCOMMAND_KIND[args.command]))
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, KernelConvergenceError, KernelDomainError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
