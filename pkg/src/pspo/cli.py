"""Command-line benchmark runner.

Settings are layered: built-in defaults, then the ``--config`` TOML file,
then ``PSPO_*`` environment variables, then command-line flags.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 run failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .experiments import (
    ConfigError,
    config_from_dict,
    config_with_env,
    load_config,
    run_calibrate,
    run_compare,
    run_m_sweep,
    run_noise_probe,
)
from .problems import load_epidemic_csv

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_RUN = 0, 2, 3, 4

logger = logging.getLogger("pspo")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(sub):
    sub.add_argument("--config", help="TOML config file")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--repeats", type=int, help="independent runs per optimizer")
    sub.add_argument("--max-iters", type=int, dest="max_iters")
    sub.add_argument("--optimizer", choices=["pspo", "spsa", "both"])
    sub.add_argument("--problem", choices=["quadratic", "sir"])
    sub.add_argument("--data", help="epidemic CSV (t,S,I,R) for the sir problem")
    sub.add_argument("--threshold", type=float, help="convergence threshold")
    sub.add_argument("--workers", type=int, help="worker processes for repeats")
    sub.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pspo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(subs.add_parser("compare", help="compare optimizers over repeated runs"))
    sweep = subs.add_parser("m-sweep", help="PSPO iterations versus fixed round count M")
    _common(sweep)
    sweep.add_argument("--m-values", type=int, nargs="+", dest="m_values")
    probe = subs.add_parser("noise-probe", help="estimate noise variance and recommend M")
    _common(probe)
    probe.add_argument("--replicates", type=int, help="evaluations K at the probe point")
    probe.add_argument("--point", type=float, nargs="+", help="probe point (default: repeat-0 start)")
    _common(subs.add_parser("calibrate", help="single SIR calibration run"))
    return parser


_FLAG_KEYS = ("seed", "out", "repeats", "max_iters", "optimizer", "problem", "data", "threshold", "workers")


def resolve_config(args, environ=None):
    data = load_config(args.config) if args.config else {}
    data = config_with_env(data, environ)
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "m_values", None) is not None:
        data["m_values"] = args.m_values
    if args.command == "calibrate":
        data.setdefault("problem", "sir")
    return config_from_dict(data)


def _print_csv(path):
    print(f"wrote {path}")


def main(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args, environ)
        if cfg.data is not None:
            load_epidemic_csv(cfg.data)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "compare":
            for path in run_compare(cfg).values():
                _print_csv(path)
        elif args.command == "m-sweep":
            _print_csv(run_m_sweep(cfg))
        elif args.command == "noise-probe":
            point = None if args.point is None else np.asarray(args.point, dtype=np.float64)
            sigma2, rows = run_noise_probe(cfg, point, args.replicates)
            print(f"sigma2_hat = {sigma2:.6g}")
            print(f"{'c':>8} {'epsilon':>8} {'M_required':>12} {'M':>8}")
            for c, eps, _, need, M in rows:
                print(f"{c:>8g} {eps:>8g} {need:>12d} {M:>8d}")
        elif args.command == "calibrate":
            result = run_calibrate(cfg)
            for name, est in result["estimates"].items():
                print(f"{name}: beta = {est.beta:.6g}, gamma = {est.gamma:.6g}")
            for path in result["paths"].values():
                _print_csv(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - any other failure is a run failure
        logger.debug("run failed", exc_info=True)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
