"""Command-line entry point: ``discovqe {run,scan,fci,replay,pool-info}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, build_config, load_raw
from .cost import CostModel, operator_cnots
from .pool import build_pool


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("config", nargs=None if config_required else "?", help="YAML run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted key, e.g. optimizer.m_operators=13")
    p.add_argument("--seed", type=int, help="optimizer.rng_seed")
    p.add_argument("--restarts", type=int, help="optimizer.restarts")
    p.add_argument("--output", type=Path, help="output directory")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="discovqe", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="verb", required=True)

    _common(sub.add_parser("run", help="run the configured method"))
    _common(sub.add_parser("scan", help="run one job per scan value and tabulate"))
    _common(sub.add_parser("fci", help="exact ground state of the configured system"))
    p = sub.add_parser("replay", help="evaluate a saved ansatz on the configured system")
    _common(p)
    p.add_argument("ansatz", type=Path, help="ansatz text file")
    p.add_argument("--relax", action="store_true", help="re-optimise the amplitudes first")

    p = sub.add_parser("pool-info", help="list the operator pool for n spatial orbitals")
    p.add_argument("n_orbitals", type=int)
    p.add_argument("--costs", action="store_true", help="show CNOT estimates per operator")
    return ap


def _overrides(args) -> list[str]:
    out = list(args.overrides)
    if args.seed is not None:
        out.append(f"optimizer.rng_seed={args.seed}")
    if args.restarts is not None:
        out.append(f"optimizer.restarts={args.restarts}")
    if args.output is not None:
        out.append(f"output={args.output}")
    if args.verb == "fci":
        out.append("method=fci")
    if args.verb == "replay":
        out += ["method=replay", f"replay.ansatz={args.ansatz}", f"replay.relax={str(args.relax).lower()}"]
    return out


def _print_summary(s: dict) -> None:
    keys = ["method", "system", "energy", "fci_energy", "error", "s_squared", "double_occupancy",
            "n_operators", "cnot_count", "certified", "status", "seconds"]
    for k in keys:
        if k in s and s[k] is not None:
            print(f"{k:>18}: {s[k]}")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")

    if args.verb == "pool-info":
        try:
            pool = build_pool(args.n_orbitals)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        model = CostModel()
        print(f"orbitals {pool.n_orbitals}  operators {len(pool)}  fingerprint {pool.fingerprint()}")
        for k, op in enumerate(pool):
            extra = f"  cnots {operator_cnots(op, pool.n_orbitals, model)}" if args.costs else ""
            print(f"{k:4d}  {op}{extra}")
        return 0

    from . import runner  # numba kernels compile lazily; keep pool-info snappy

    try:
        config = build_config(load_raw(args.config), _overrides(args))
        if args.verb == "scan":
            res = runner.scan(config)
            print(f"scan over {res['parameter']}: {len(res['values'])} points, "
                  f"NPE {res['npe']}, max error {res['max_error']}, failed {res['failed_points']}")
            print(f"table: {Path(config.output) / 'scan.csv'}")
            return 1 if res["failed_points"] else 0
        summary = runner.run(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    _print_summary(summary)
    print(f"{'output':>18}: {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
