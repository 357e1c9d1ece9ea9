"""Command-line interface.

Subcommands::

    rfiqkd simulate    SCENARIO            -> rate table CSV
    rfiqkd evaluate    COUNTS SCENARIO     -> report JSON
    rfiqkd montecarlo  SCENARIO --pulses N --seed S -> counts CSV
    rfiqkd sweep-beta  SCENARIO --steps K  -> beta table CSV

Exit codes: 0 success, 2 malformed scenario or counts file (the message names
the offending key or line), 3 infeasible decoy intensities, 4 a counts row has
more errors than valid events, 1 any other failure.

Data goes to ``--output`` or, with ``--stdout``, to standard output. All
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import warnings

import numpy as np

from . import __version__
from .channel import ChannelPoint, expected_counts
from .decoy import EventClass, PoolingAsymmetryWarning, class_counts
from .formats import (
    BETA_COLUMNS,
    RATE_COLUMNS,
    CountsConsistencyError,
    CountsFormatError,
    ScenarioError,
    parse_scenario,
    rate_row,
    read_counts,
    write_counts,
    write_table,
)
from .montecarlo import RunSpec, run
from .optimizer import sweep
from .params import InfeasibleDecoyError
from .security import analyze

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MALFORMED = 2
EXIT_INFEASIBLE = 3
EXIT_INCONSISTENT = 4

log = logging.getLogger("rfiqkd")


def _read_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return raw, parse_scenario(raw)


@contextlib.contextmanager
def _output(args):
    if args.stdout:
        yield sys.stdout
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _fixed_protocol(scenario, command):
    if scenario.protocol is None:
        raise ScenarioError(f"'protocol' must be an explicit object for {command}, "
                            "not \"optimize\"")
    return scenario.protocol


def cmd_simulate(args) -> int:
    _, scenario = _read_scenario(args.scenario)
    rows = []
    if scenario.optimize:
        results = sweep(scenario.distances, scenario.device, scenario.optimization,
                        scenario.security, workers=args.workers)
        for row in results:
            if row.search_failure:
                log.warning("%g km: rate rose with distance; optimizer may have stalled",
                            row.distance_km)
            rows.append(rate_row(row.distance_km, row.protocol, row.report))
    else:
        proto = scenario.protocol
        for d in scenario.distances:
            point = ChannelPoint.at(d, scenario.device, scenario.beta)
            report = analyze(expected_counts(proto, scenario.device, point), proto,
                             scenario.device, scenario.security)
            rows.append(rate_row(d, proto, report))
    for row in rows:
        log.info("%8.2f km  r_l=%.4e  R_l=%.4f", row["distance_km"], row["r_l"], row["R_l"])
    with _output(args) as fh:
        write_table(rows, RATE_COLUMNS, fh)
    return EXIT_OK


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def cmd_evaluate(args) -> int:
    raw, scenario = _read_scenario(args.scenario)
    proto = _fixed_protocol(scenario, "evaluate")
    if args.n_pulses is not None:
        proto = proto.replace(n_pulses=args.n_pulses)
    with open(args.counts, encoding="utf-8", newline="") as fh:
        counts = read_counts(fh, integer_counts=args.integer_counts)
    report = analyze(counts, proto, scenario.device, scenario.security)
    payload = report.to_dict()
    payload["input"] = {
        "scenario_file": str(args.scenario),
        "counts_file": str(args.counts),
        "scenario": raw,
        "n_pulses": proto.n_pulses,
        "counts": {"valid": counts.valid.tolist(), "error": counts.error.tolist()},
    }
    for note in report.warnings:
        log.warning("%s", note)
    for reason in report.reasons:
        log.info("r_l = 0: %s", reason)
    with _output(args) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    _, scenario = _read_scenario(args.scenario)
    proto = _fixed_protocol(scenario, "montecarlo")
    pulses = int(proto.n_pulses) if args.pulses is None else args.pulses
    if pulses < 0:
        raise ScenarioError("'--pulses' must be nonnegative")
    spec = RunSpec(pulses=pulses, seed=args.seed, block_size=args.block_size)
    counts = run(proto, scenario.device, scenario.distances[0], scenario.drift, spec,
                 workers=args.workers)
    for cls in EventClass:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PoolingAsymmetryWarning)
            n, m = class_counts(counts, cls)
        print(f"{cls.value}: valid={int(n.sum())} error={int(m.sum())}", file=sys.stderr)
    with _output(args) as fh:
        write_counts(counts, fh)
    return EXIT_OK


def beta_grid(beta0: float, steps: int) -> np.ndarray:
    """``steps`` equally spaced angles covering one turn, starting at ``beta0``."""
    return beta0 + 2.0 * np.pi * np.arange(steps) / steps


def cmd_sweep_beta(args) -> int:
    _, scenario = _read_scenario(args.scenario)
    proto = _fixed_protocol(scenario, "sweep-beta")
    if args.steps < 1:
        raise ScenarioError("'--steps' must be at least 1")
    rows = []
    for beta in beta_grid(scenario.beta, args.steps):
        point = ChannelPoint.at(scenario.distances[0], scenario.device, float(beta))
        report = analyze(expected_counts(proto, scenario.device, point), proto,
                         scenario.device, scenario.security)
        rows.append({"beta": float(beta), "R_l": report.R_l,
                     "C_diagnostic": report.c_diagnostic, "r_l": report.r_l})
    rates = [r["r_l"] for r in rows]
    if max(rates) > 0:
        log.info("relative r_l spread over beta: %.3e", (max(rates) - min(rates)) / max(rates))
    with _output(args) as fh:
        write_table(rows, BETA_COLUMNS, fh)
    return EXIT_OK


def _add_output(p):
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("-o", "--output", help="file to write")
    group.add_argument("--stdout", action="store_true", help="write data to standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfiqkd", description="Finite-key analysis and simulation for RFI-QKD.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="analytic key-rate table over distances")
    p.add_argument("scenario")
    p.add_argument("--workers", type=int, default=1, help="processes for optimized sweeps")
    _add_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="key-rate report from a counts CSV")
    p.add_argument("counts")
    p.add_argument("scenario")
    p.add_argument("--integer-counts", action="store_true",
                   help="reject non-integer counts (for measured data)")
    p.add_argument("--n-pulses", type=float, default=None,
                   help="override the scenario's pulse count")
    _add_output(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("montecarlo", help="pulse-level simulation to a counts CSV")
    p.add_argument("scenario")
    p.add_argument("--pulses", type=int, default=None,
                   help="pulses to simulate (default: protocol.n_pulses)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=int, default=1 << 18)
    p.add_argument("--workers", type=int, default=1, help="threads for block execution")
    _add_output(p)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("sweep-beta", help="R_l, C and r_l over a grid of frame angles")
    p.add_argument("scenario")
    p.add_argument("--steps", type=int, default=32)
    _add_output(p)
    p.set_defaults(func=cmd_sweep_beta)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InfeasibleDecoyError as exc:
        print(f"error: infeasible decoy parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CountsConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except (ScenarioError, CountsFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
