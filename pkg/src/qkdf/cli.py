"""Command-line front end: ``qkdf simulate | report | selftest``.

Exit codes: 0 clean, 2 configuration error, 3 eavesdropping alarm,
4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_ALARM, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("qkdf")


def _setup_logging() -> None:
    level = os.environ.get("QKDF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qkdf", description="QKD network simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("--scenario", required=True, help="TOML scenario path or bundled name (baseline, intercept, ring4, lowloss)")
    sim.add_argument("--seed", type=_u64, help="override the scenario seed")
    sim.add_argument("--out", default="qkdf-out", help="output directory")
    sim.add_argument("--jobs", type=int, default=1, help="links simulated in parallel")
    sim.add_argument("--defense", choices=["bennett", "slutsky"], help="override the defense function")

    rep = sub.add_parser("report", help="summarise stats files")
    rep.add_argument("files", nargs="*", help="JSON-lines stats (and tunnel/transport) files")
    rep.add_argument("--csv", help="write plot-ready CSV of block stats")

    st = sub.add_parser("selftest", help="run the built-in oracle checks")
    st.add_argument("--quick", action="store_true", help="skip the slower checks")
    return ap


def cmd_simulate(args) -> int:
    from .scenario import load_scenario, run_scenario, with_overrides, write_outputs

    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    sc = with_overrides(load_scenario(args.scenario), args.seed, args.defense)
    res = run_scenario(sc, jobs=args.jobs)
    paths = write_outputs(res, args.out)
    sys.stdout.write(paths["summary"].read_text(encoding="utf-8"))
    return EXIT_ALARM if res.alarmed else EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report

    text, csv_text, warnings = build_report([Path(f) for f in args.files])
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(text)
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(quick=args.quick, out=sys.stdout)
    return EXIT_OK if ok else EXIT_INTERNAL


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handlers = {"simulate": cmd_simulate, "report": cmd_report, "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
