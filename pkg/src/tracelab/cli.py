"""Command-line entry point: batch experiments from config files.

Every subcommand takes ``--config <file>``, ``--out <dir>``, and
``--seed <u64>``; results land in the output directory as CSV files plus a
gnuplot script and a hash manifest. Exit codes: 0 when every checked
criterion passes, 2 on a criterion failure, 1 on errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError
from .experiments import (
    audit_report_bundle,
    emit_outputs,
    run_audit_campaign,
    run_corollary_experiment,
    run_decay_experiment,
    run_omega_experiment,
    run_uniqueness_experiment,
    scenario_from_file,
)

RUNNERS = {
    "uniqueness": run_uniqueness_experiment,
    "corollary": run_corollary_experiment,
    "omega": run_omega_experiment,
    "decay": run_decay_experiment,
}


def _add_common(sub):
    sub.add_argument("--config", required=True, help="scenario config file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", required=True, type=int,
                     help="experiment seed (unsigned integer)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracelab",
        description="deterministic desk-scale experiments for single-trace "
                    "coefficient recovery")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, description in [
        ("uniqueness", "trace discrepancy vs coefficient gap experiment"),
        ("corollary", "mode-series recovery and comparison experiment"),
        ("audit", "Carleman inequality audit campaign"),
        ("omega", "support / active boundary / reachable region masks"),
        ("decay", "decay conditions and the audited mode-bound chain"),
    ]:
        sub = subs.add_parser(name, help=description)
        _add_common(sub)
        if name == "audit":
            sub.add_argument("--which", default="elliptic,boundary,parabolic",
                             help="comma list of audits to run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0:
        print("error: seed must be non-negative", file=sys.stderr)
        return 1
    try:
        scenario = scenario_from_file(args.config, args.seed)
        if args.command == "audit":
            which = tuple(w.strip() for w in args.which.split(",") if w.strip())
            reports, constants = run_audit_campaign(scenario, which=which)
            report = audit_report_bundle(scenario, reports, constants)
        else:
            report = RUNNERS[args.command](scenario)
        manifest = emit_outputs(report, args.out)
    except (ConfigError, OSError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    for key, value in report.summary:
        print(f"{key} = {value}")
    for name, digest in manifest:
        print(f"wrote {name} ({digest[:12]})")
    if not report.passed:
        print("criterion FAILED", file=sys.stderr)
        return 2
    print("all criteria passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
