"""Command-line entry point.

Subcommands: ed (diagonalize and cache a spectrum), train (one optimization
run), ites-sweep (one run per grid beta plus beta_star detection), report
(consolidate verified run directories), gradcheck (finite-difference
verification of the configured gradient).

Exit codes: 0 success, 2 invalid configuration or request, 3 numerical
failure (partial outputs are preserved), 4 artifact integrity failure.
"""

from __future__ import annotations

import argparse
import sys

from .ansatz import AnsatzError
from .config import ConfigError, load_config
from .model import ModelError
from .numerics import NumericsError
from .objectives import ObjectiveError
from .optimize import OptimizeError
from .runner import (
    IntegrityError,
    run_ed,
    run_gradcheck,
    run_report,
    run_sweep,
    run_train,
)
from .spectral import SpectralError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INTEGRITY = 4

_VALIDATION_ERRORS = (ConfigError, ModelError, AnsatzError, ObjectiveError)
_NUMERICAL_ERRORS = (OptimizeError, NumericsError, SpectralError,
                     FloatingPointError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efftemp",
        description="Effective-temperature analysis of variational quantum states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--preset", help="named hyperparameter preset")
        p.add_argument("--seed", type=int, help="override run.seed")
        if needs_out:
            p.add_argument("--out", help="output directory (default: run.out)")

    common(sub.add_parser("ed", help="diagonalize and cache the spectrum"))
    common(sub.add_parser("train", help="run one optimization"))
    p_sweep = sub.add_parser("ites-sweep", help="one run per beta grid point")
    common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel runs (default 1)")
    p_rep = sub.add_parser("report", help="consolidate run directories")
    p_rep.add_argument("run_dirs", nargs="+", help="run directories to report on")
    p_rep.add_argument("--out", required=True, help="report output directory")
    common(sub.add_parser("gradcheck", help="finite-difference gradient check"),
           needs_out=False)
    return parser


def _resolve_out(args, cfg) -> str:
    out = getattr(args, "out", None) or cfg.data["run"]["out"]
    if out is None:
        raise ConfigError(
            f"{args.command} needs an output directory: pass --out or set run.out"
        )
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            run_report(args.run_dirs, args.out)
            return EXIT_OK

        cfg = load_config(args.config, preset=args.preset)
        if args.seed is not None:
            cfg.data["run"]["seed"] = args.seed

        if args.command == "ed":
            run_ed(cfg, _resolve_out(args, cfg))
            return EXIT_OK
        if args.command == "train":
            summary = run_train(cfg, _resolve_out(args, cfg))
            return EXIT_NUMERICAL if summary["aborted"] else EXIT_OK
        if args.command == "ites-sweep":
            run_sweep(cfg, _resolve_out(args, cfg), jobs=args.jobs)
            return EXIT_OK
        if args.command == "gradcheck":
            report = run_gradcheck(cfg)
            return EXIT_OK if report["passed"] else EXIT_NUMERICAL
    except _VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IntegrityError as e:
        print(f"integrity failure: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
