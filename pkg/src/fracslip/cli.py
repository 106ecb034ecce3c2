"""Command-line front end.

Subcommands: ``cell`` (boundary-layer constants), ``dns`` (populate the
solution cache), ``sweep`` (full verification run), ``report`` (tables from
the summary).  Exit codes: 0 success, 1 compute failure, 2 configuration
error, 3 missing artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import RunConfig
from .errors import ConfigError, FracslipError, MissingArtifacts
from .pipeline import cell_stage, report_stage, run_dns_points, sweep_stage

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", default=None, help="run configuration (YAML)")
    sub.add_argument("--cache", metavar="PATH", default=None, help="override the cache directory")
    sub.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracslip",
        description="Effective slip laws at a fracture/porous interface: "
        "cell problems, resolved sweeps, rate verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cell = sub.add_parser("cell", help="solve the boundary-layer cell problems")
    _add_common(p_cell)
    p_cell.add_argument("--refine-check", action="store_true",
                        help="re-solve at half the grid spacing and report Richardson deltas")

    p_dns = sub.add_parser("dns", help="run the resolved solves into the cache")
    _add_common(p_dns)
    p_dns.add_argument("--jobs", type=int, default=None, metavar="N")
    p_dns.add_argument("--allow-out-of-hypothesis", action="store_true")

    p_sweep = sub.add_parser("sweep", help="full verification sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=None, metavar="N")
    p_sweep.add_argument("--skip-dns", action="store_true",
                         help="reuse cached solves only; fail on a cold cache")
    p_sweep.add_argument("--allow-out-of-hypothesis", action="store_true")
    p_sweep.add_argument("--refine-check", action="store_true",
                         help="also run the refined cell stage before sweeping")

    p_rep = sub.add_parser("report", help="render tables from the sweep summary")
    _add_common(p_rep)
    return parser


def _load_config(args) -> RunConfig:
    overrides = {}
    if args.cache is not None:
        overrides = {"output": {"cache_dir": args.cache}}
    return RunConfig.load(args.config, overrides)


def _print_cell_summary(payload: dict) -> None:
    first = payload["constants"]["first_layer"]
    print("boundary-layer constants")
    print(f"  C1        = {first['c1']:+.8f}")
    print(f"  C_omega   = {first['c_omega']:+.8e}")
    print(f"  dual identity rel. error = {payload['checks']['dual_identity_rel']:.3e}")
    print(f"  decay above: {first['decay_above']['rate']:.4f}  "
          f"below: {first['decay_below']['rate']:.4f}  "
          f"pressure: {first['decay_above_pressure']['rate']:.4f}")
    if "second_layer" in payload["constants"]:
        second = payload["constants"]["second_layer"]
        print(f"  C11       = {second['c11']:+.8e}")
        print(f"  <beta1|S> = {second['interface_slip_avg']:+.8e}")
    if "refine" in payload:
        ref = payload["refine"]
        print(f"  refine: C1(h/2) = {ref['c1']:+.8f}  richardson {ref['c1_richardson']:+.8f} "
              f"delta {ref['c1_delta']:+.2e}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _load_config(args)
        if args.command == "cell":
            payload = cell_stage(cfg, refine_check=args.refine_check)
            _print_cell_summary(payload)
        elif args.command == "dns":
            allow = args.allow_out_of_hypothesis or None
            labels = run_dns_points(cfg, jobs=args.jobs, allow=allow)
            print(f"cached {len(labels)} resolved solves")
        elif args.command == "sweep":
            if args.refine_check:
                cell_stage(cfg, refine_check=True)
            allow = args.allow_out_of_hypothesis or None
            summary = sweep_stage(cfg, skip_dns=args.skip_dns or None,
                                  jobs=args.jobs, allow=allow)
            acc = summary["acceptance"]
            print(json.dumps(acc, indent=1, sort_keys=True))
        elif args.command == "report":
            print(report_stage(cfg), end="")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifacts as exc:
        print(f"missing artifacts: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FracslipError as exc:
        print(f"compute failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
