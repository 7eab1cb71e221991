"""Command line entry point: ``loratherm run|report|verify|replay|export``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import scenario as scenario_mod
from . import sim
from .store import Store, StoreError, iso_to_ms


def _load_scenario(arg: str):
    if arg in scenario_mod.FIXTURES and not Path(arg).is_file():
        return scenario_mod.load_fixture(arg)
    return scenario_mod.parse_scenario(arg)


def _print_checks(results) -> bool:
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} expectations passed")
    return passed == len(results)


def cmd_run(args) -> int:
    sc = _load_scenario(args.scenario)
    out = Path(args.out or f"runs/{sc.name}")
    art = sim.run(sc, out, seed=args.seed)
    acc = art.accounting
    print(f"run {sc.name} seed={args.seed if args.seed is not None else sc.seed} -> {out}")
    print("accounting: " + ", ".join(f"{k}={v}" for k, v in acc.items()))
    if args.report:
        for p in sim.emit_report(art):
            print(f"wrote {p}")
    return 0 if _print_checks(sim.verify(art)) else 1


def cmd_report(args) -> int:
    art = sim.RunArtifacts.load(args.run_dir)
    for p in sim.emit_report(art, args.out):
        print(f"wrote {p}")
    return 0


def cmd_verify(args) -> int:
    art = sim.RunArtifacts.load(args.run_dir)
    return 0 if _print_checks(sim.verify(art)) else 1


def cmd_replay(args) -> int:
    res = sim.replay(args.trace, args.registry, args.store)
    print(f"replayed into {res.store_path}")
    print(", ".join(f"{k}={v}" for k, v in sorted(res.counts.items())))
    return 0


def cmd_export(args) -> int:
    if not Path(args.store).exists():
        raise StoreError(f"no such store: {args.store}")
    t0 = iso_to_ms(args.t_from) if args.t_from else None
    t1 = iso_to_ms(args.t_to) if args.t_to else None
    with Store(args.store) as store:
        if args.out:
            n = store.export_csv(args.out, args.device, t0, t1)
            print(f"wrote {n} readings to {args.out}", file=sys.stderr)
        else:
            store.export_csv(sys.stdout, args.device, t0, t1)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loratherm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and check its expectations")
    r.add_argument("scenario", help="scenario file, or the name of a bundled case study")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="run directory (default runs/<name>)")
    r.add_argument("--report", action="store_true", help="also write the SVG plot and summary")
    r.set_defaults(func=cmd_run)

    r = sub.add_parser("report", help="write plot and summary CSV for a finished run")
    r.add_argument("run_dir")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)

    r = sub.add_parser("verify", help="re-check a finished run's expectations")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_verify)

    r = sub.add_parser("replay", help="feed a packet trace through the network server again")
    r.add_argument("trace")
    r.add_argument("--registry", required=True)
    r.add_argument("--store", default="replay.sqlite")
    r.set_defaults(func=cmd_replay)

    r = sub.add_parser("export", help="export readings from a store as CSV")
    r.add_argument("store")
    r.add_argument("--device", default=None)
    r.add_argument("--from", dest="t_from", default=None, help="ISO-8601 UTC, inclusive")
    r.add_argument("--to", dest="t_to", default=None, help="ISO-8601 UTC, exclusive")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (scenario_mod.ScenarioError, StoreError, sim.ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
