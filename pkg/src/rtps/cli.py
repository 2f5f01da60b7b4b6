"""Command-line entry point: ``run``, ``sweep`` and ``validate``.

Exit codes: 0 on success, 1 on a scenario or argument validation error,
2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import ScenarioError
from .experiments import SWEEP_PARAMS, emit_outputs, run_scenario, sweep
from .scenario import VARIANTS, load_scenario

log = logging.getLogger("rtps")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def parse_values(text: str) -> list:
    """Parse ``"1,5,10"`` or a range ``"3:15:3"`` (inclusive stop)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("range step must be positive")
        out, k = [], 0
        while start + k * step <= stop + 1e-9 * max(1.0, abs(stop)):
            out.append(round(start + k * step, 12))
            k += 1
    else:
        out = [float(p) for p in text.split(",") if p.strip()]
    if not out:
        raise ValueError("no sweep values given")
    return [int(v) if float(v).is_integer() else v for v in out]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtps", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--variant", choices=VARIANTS)
    run.add_argument("--duration", type=float, help="override the scenario duration (s)")
    run.add_argument("--out", required=True)

    sw = sub.add_parser("sweep", help="sweep one parameter over a list of values")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", required=True, help="comma list or start:stop:step")
    sw.add_argument("--reps", type=int, default=1)
    sw.add_argument("--seed", type=int, help="base seed")
    sw.add_argument("--variant", choices=VARIANTS)
    sw.add_argument("--duration", type=float)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True)
    return parser


def _overrides(sc, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        changes["variant"] = args.variant
    if getattr(args, "duration", None) is not None:
        if args.duration <= 0:
            raise ScenarioError("duration must be positive")
        changes["duration"] = args.duration
    return replace(sc, **changes) if changes else sc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        sc = load_scenario(args.scenario)
        sc = _overrides(sc, args)
        if args.command == "sweep":
            values = parse_values(args.values)
            if args.reps < 1:
                raise ScenarioError("--reps must be at least 1")
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        if args.command == "validate":
            print(f"{args.scenario}: ok ({len(sc.flows)} flows, {sc.topology.hops} hops, "
                  f"variant {sc.variant})")
            return EXIT_OK
        if args.command == "run":
            log.info("running %s variant=%s seed=%d", sc.name, sc.variant, sc.seed)
            reports = [run_scenario(sc)]
        else:
            log.info("sweeping %s over %s=%s x%d", sc.name, args.param, values, args.reps)
            reports = sweep(sc, args.param, values, args.reps, jobs=args.jobs)
        for path in emit_outputs(reports, args.out):
            log.info("wrote %s", path)
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
