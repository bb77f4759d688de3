"""Command-line front end: ``artifact {simulate,sweep,validate,plot}``.

Exit codes: 0 success, 1 runtime or gate failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import bench
from .core import ConfigError, DomainError, load_building
from .policy import POLICIES, SchedulerParams
from .sim import load_traffic, run_trial

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _echo(title: str, config: dict) -> None:
    print(f"# {title}: " + json.dumps(config, sort_keys=True, default=str))


def _tolerance(text: str):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected GATE=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad tolerance value in {text!r}") from exc


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one trial and write a metrics row")
    sim.add_argument("--building", required=True, help="INI file with a [building] section")
    sim.add_argument("--traffic", required=True, help="INI file with a [traffic] section")
    sim.add_argument("--scheduler", choices=POLICIES, default="esa-dp-la")
    sim.add_argument("--alpha", type=float, default=0.2)
    sim.add_argument("--beta", type=float, default=0.02)
    sim.add_argument("--seed", type=int, help="overrides the traffic file's seed")
    sim.add_argument("--out", help="CSV path (default: stdout)")
    sim.add_argument("--rate-source", choices=("lobby", "total"), default="lobby")
    sim.add_argument("--rate-decay-s", type=float, default=300.0)
    sim.add_argument("--no-park", action="store_true", help="leave empty cars where they stop")
    sim.add_argument("--coalesce-calls", action="store_true", help="passengers join a lit hall call")

    sw = sub.add_parser("sweep", help="run a seeded sweep and write sweep.csv")
    sw.add_argument("--config", required=True, help="INI file with a [sweep] section")
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--jobs", type=_positive_int, default=1)
    sw.add_argument("--seeds", choices=("test", "fit"), default="test")

    val = sub.add_parser("validate", help="run the oracle gates")
    val.add_argument("--tol", type=_tolerance, action="append", default=[], metavar="GATE=VALUE")
    val.add_argument("--gate", action="append", choices=sorted(bench.GATES), help="run only these gates")
    val.add_argument("--json", help="also write the report to this path")

    plot = sub.add_parser("plot", help="emit plot data from a sweep CSV")
    plot.add_argument("--in", dest="input", required=True)
    plot.add_argument("--kind", choices=bench.PLOT_KINDS, required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--target", choices=POLICIES, default="esa-dp-la")
    return parser


def cmd_simulate(args) -> int:
    building = load_building(args.building)
    profile = load_traffic(args.traffic)
    if args.seed is not None:
        profile = dataclasses.replace(profile, seed=args.seed)
    params = SchedulerParams(args.alpha, args.beta)
    _echo("simulate", {"building": dataclasses.asdict(building), "traffic": dataclasses.asdict(profile),
                       "scheduler": args.scheduler, "alpha": args.alpha, "beta": args.beta,
                       "rate_source": args.rate_source, "rate_decay_s": args.rate_decay_s,
                       "park_idle_at_lobby": not args.no_park, "coalesce_calls": args.coalesce_calls})
    m = run_trial(building, args.scheduler, profile, params, park_idle_at_lobby=not args.no_park,
                  rate_source=args.rate_source, rate_decay_s=args.rate_decay_s,
                  coalesce_calls=args.coalesce_calls)
    la = args.scheduler == "esa-dp-la"
    row = {"building": building.label, "floors": building.num_floors, "shafts": building.num_cars,
           "rate": bench._fmt(profile.rate_per_hour), "policy": args.scheduler,
           "alpha": bench._fmt(args.alpha) if la else "", "beta": bench._fmt(args.beta) if la else "",
           "seed": profile.seed, "avg_wait_s": format(m.average_wait, ".6f"),
           "max_wait_s": format(m.max_wait, ".6f"), "served": m.served, "unserved": m.unserved,
           "traffic_hash": m.traffic_hash}
    if args.out:
        bench.write_csv([row], args.out)
    else:
        sys.stdout.write(bench.rows_to_csv([row]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = bench.load_sweep_config(args.config)
    _echo("sweep", {"config": dataclasses.asdict(config), "jobs": args.jobs, "seeds": args.seeds})
    rows = bench.run_sweep(config, jobs=args.jobs, which=args.seeds)
    path = bench.write_csv(rows, Path(args.out) / "sweep.csv")
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    tolerances = dict(args.tol)
    _echo("validate", {"tolerances": {**bench.DEFAULT_TOLERANCES, **tolerances}, "gates": args.gate or "all"})
    report = bench.validate_suite(tolerances, args.gate)
    for g in report["gates"]:
        status = "PASS" if g["passed"] else "FAIL"
        print(f"{status} {g['name']}: max_error={g['max_error']:.3e} tol={g['tolerance']:.3e} "
              f"({g['seconds']:.1f}s) {g['detail']}")
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_plot(args) -> int:
    _echo("plot", {"in": args.input, "kind": args.kind, "out": args.out, "target": args.target})
    rows = bench.read_csv(args.input)
    path = bench.emit_plot_data(rows, args.kind, args.out, target=args.target)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "validate": cmd_validate, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
