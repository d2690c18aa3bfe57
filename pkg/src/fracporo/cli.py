"""Command line entry point ``simulate``.

Usage::

    simulate <config-file|builtin-name> --out DIR [--model discontinuous|continuous]
             [--refine N] [--max-steps N] [--assert-bounds PHI_MIN,D0] [-v]

Exit codes: 0 when the run finishes (or stops at ``--max-steps``), 2 when the
solver aborts, 3 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import load_scenario
from .errors import FracPoroError, IoError, ParseError, UnknownScenario, ValidationError
from .output import write_outputs
from .scenarios import BUILTINS, run_scenario, validate

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_ABORT", "EXIT_CONFIG"]

EXIT_OK, EXIT_ABORT, EXIT_CONFIG = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Two-phase flow and poroelasticity in fractured media.",
        epilog=f"builtin scenarios: {', '.join(sorted(BUILTINS))}",
    )
    p.add_argument("scenario", help="configuration file (INI or JSON) or builtin scenario name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model", choices=("discontinuous", "continuous"), help="override the pressure model")
    p.add_argument("--refine", type=int, default=0, help="halve the mesh spacing N times (negative coarsens)")
    p.add_argument("--max-steps", type=int, default=None, help="stop after N accepted steps")
    p.add_argument("--assert-bounds", metavar="PHI_MIN,D0", help="abort if porosity or aperture fall below these")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _bounds(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValidationError("expected two comma separated numbers PHI_MIN,D0", key="--assert-bounds")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ValidationError(f"cannot read numbers from {text!r}", key="--assert-bounds") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        sc = load_scenario(args.scenario)
        if args.model:
            sc = replace(sc, model=args.model)
        if args.assert_bounds:
            phi_min, d0 = _bounds(args.assert_bounds)
            sc = replace(sc, phi_min=phi_min, d0=d0)
        validate(sc)
    except (ParseError, ValidationError, UnknownScenario) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_scenario(sc, refine=args.refine, max_steps=args.max_steps, raise_on_abort=False)
    except (ParseError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FracPoroError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    try:
        write_outputs(result, args.out)
    except IoError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    c = result.counters
    status = "completed" if result.completed else ("aborted" if result.error else "stopped")
    print(
        f"{sc.name} ({sc.model}): {status} at t = {result.state.t:.6g} s, "
        f"N_dt={c['N_dt']} N_Chops={c['N_Chops']} N_Newton={c['N_Newton']} N_GMRes={c['N_GMRes']} "
        f"N_GMRes_NK={c['N_GMRes_NK']} N_NK={c['N_NK']} CPU={c['CPU']:.1f}s"
    )
    if result.error:
        print(f"solver abort: {result.error}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
