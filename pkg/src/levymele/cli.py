"""Command-line front end.

Three subcommands: ``replicate`` (simulation study), ``estimate`` (user CSV
data) and ``price`` (pricing inspection). Every flag overrides the matching
config-file key. Exit codes: 0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .data_io import read_config
from .errors import InputError, NumericalError
from .harness import RunConfig, run_estimate, run_price, run_replication

__all__ = ["main", "build_config"]


def parse_strike_menus(text: str) -> tuple:
    """Menus separated by ``|``, strike fractions by commas; ``0``/``none`` is empty.

    Example: ``"0 | 0.99 | 0.99,1.01"`` gives three columns.
    """
    menus = []
    for chunk in text.split("|"):
        chunk = chunk.strip()
        if chunk in ("", "0", "none"):
            menus.append(())
            continue
        try:
            menus.append(tuple(float(f) for f in chunk.split(",")))
        except ValueError as exc:
            raise InputError(f"bad strike menu {chunk!r}") from exc
    if not menus:
        raise InputError("empty strike specification")
    return tuple(menus)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levymele",
        description="Empirical-likelihood estimation of Levy return models "
                    "from returns and option quotes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("replicate", "simulation study at a known truth"),
                       ("estimate", "estimate from returns/quotes CSV files"),
                       ("price", "print model call prices and route diffs")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", help="flat key = value config file")
        cmd.add_argument("--model", choices=("bs", "merton", "kou"))
        cmd.add_argument("--n", help="comma list of sample sizes")
        cmd.add_argument("--paths", type=int, help="replicates per sample size")
        cmd.add_argument("--seed", type=int, help="64-bit master seed")
        cmd.add_argument("--returns", help="returns CSV (date,log_return)")
        cmd.add_argument("--quotes", help="quotes CSV "
                         "(maturity_periods,moneyness,rate,price_normalized)")
        cmd.add_argument("--out", help="output file path")
        cmd.add_argument("--a", type=float, help="quadrature half-width")
        cmd.add_argument("--tnodes", type=int, help="quadrature node count")
        cmd.add_argument("--strikes",
                         help="strike menus, e.g. '0 | 0.99 | 0.99,1.01'")
        cmd.add_argument("--workers", type=int, help="worker pool size")
    return parser


_FLOAT_KEYS = {"r", "delta", "a", "alpha"}
_INT_KEYS = {"tnodes", "paths", "seed", "maturity", "workers", "n_restarts"}


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge config-file values with command-line overrides."""
    values: dict = {}
    params: dict = {}
    if args.config:
        sections = read_config(args.config)
        for section, items in sections.items():
            if section == "params":
                try:
                    params = {k: float(v) for k, v in items.items()}
                except ValueError as exc:
                    raise InputError(f"bad [params] value: {exc}") from exc
                continue
            for key, raw in items.items():
                if key == "kind" or key == "model":
                    values["model_kind"] = raw.strip()
                elif key == "strikes":
                    values["strike_menus"] = parse_strike_menus(raw)
                elif key == "n":
                    values["n_list"] = tuple(int(x) for x in raw.split(","))
                elif key in ("returns", "quotes", "out"):
                    values[f"{key}_path"] = raw.strip()
                elif key in _FLOAT_KEYS:
                    values[key] = float(raw)
                elif key in _INT_KEYS:
                    values[key] = int(raw)
                else:
                    raise InputError(f"unknown config key {section}.{key}")
    if "alpha" in params:
        values["alpha"] = params.pop("alpha")

    if args.model:
        values["model_kind"] = args.model
    if args.n:
        values["n_list"] = tuple(int(x) for x in args.n.split(","))
    if args.paths is not None:
        values["paths"] = args.paths
    if args.seed is not None:
        values["seed"] = args.seed
    if args.returns:
        values["returns_path"] = args.returns
    if args.quotes:
        values["quotes_path"] = args.quotes
    if args.out:
        values["out_path"] = args.out
    if args.a is not None:
        values["a"] = args.a
    if args.tnodes is not None:
        values["tnodes"] = args.tnodes
    if args.strikes:
        values["strike_menus"] = parse_strike_menus(args.strikes)
    if args.workers is not None:
        values["workers"] = args.workers
    values["params"] = params
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "replicate":
            report = run_replication(config)
            sys.stdout.write(report.text)
        elif args.command == "estimate":
            _, text = run_estimate(config)
            sys.stdout.write(text)
        else:
            sys.stdout.write(run_price(config))
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
