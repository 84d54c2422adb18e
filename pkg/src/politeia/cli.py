"""Command line: run scenarios, verify exported chains, summarize logs.

Exit codes: 0 ok, 1 config error, 2 verification violation, 3 scenario
assertion failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness.config import ConfigError, ScenarioConfig
from .harness.report import build_report
from .harness.sim import ScenarioFailure, run_scenario
from .ledger import LedgerError, load_chain, verify_directory

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_SCENARIO = 0, 1, 2, 3


def _describe(violation) -> str:
    where = "" if violation.height is None else f"height {violation.height}, "
    return f"violation: {where}{violation.path}: {violation.reason}"


def cmd_run(args) -> int:
    try:
        config = ScenarioConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        result = run_scenario(config, out)
    except ScenarioFailure as exc:
        print(f"scenario failure: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    report = build_report(result.events)
    (out / "report.json").write_text(report.to_json())
    if result.audit:
        print("archive audit failed:\n  " + "\n  ".join(result.audit[:10]), file=sys.stderr)
        return EXIT_SCENARIO
    if result.violation is not None:
        print(_describe(result.violation), file=sys.stderr)
        return EXIT_VIOLATION
    print(f"ran {config.epochs} epochs; {len(result.chain.blocks)} blocks; "
          f"total minted {report.total_minted}; final block {result.final_block_digest()}")
    return EXIT_OK


def cmd_verify(args) -> int:
    violation = verify_directory(Path(args.chain))
    if violation is not None:
        print(_describe(violation))
        return EXIT_VIOLATION
    print("ok")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        lines = Path(args.log).read_text().splitlines()
        report = build_report(lines)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.csv:
        sys.stdout.write(report.to_csv() + "\n" + report.reputation_csv())
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        chain = load_chain(Path(args.chain))
    except LedgerError as exc:
        print(f"violation: {exc}")
        return EXIT_VIOLATION
    block = next((b for b in chain.blocks.values() if b.epoch == args.epoch), None)
    if block is None:
        print(f"no block for epoch {args.epoch}", file=sys.stderr)
        return EXIT_CONFIG
    groups = sorted(gid for (e, gid) in chain.summaries if e == args.epoch)
    info = {
        "height": block.height,
        "epoch": block.epoch,
        "prev_hash": block.prev_hash.hex(),
        "summary_hash": block.summary_hash.hex(),
        "finalized": block.finalized,
        "finalize_epoch": block.finalize_epoch,
        "top_group": block.top_summary.group,
        "groups": {
            gid: {
                "level": chain.summaries[(args.epoch, gid)].report.state.level,
                "members": len(chain.summaries[(args.epoch, gid)].report.state.members),
                "cores": list(chain.summaries[(args.epoch, gid)].report.state.cores),
                "rejections": len(chain.summaries[(args.epoch, gid)].report.rejections),
                "rectifications": len(chain.summaries[(args.epoch, gid)].report.rectifications),
            }
            for gid in groups
        },
        "rewards": [
            {"case": r.case_id, "node": r.beneficiary, "amount": r.amount, "hold": r.hold}
            for r in block.top_summary.report.rewards
        ],
        "announcements": [
            {"node": a.subject, "offense": a.offense, "until": a.restricted_until}
            for a in block.top_summary.report.announcements
        ],
    }
    print(json.dumps(info, indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="politeia")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario and export its chain")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", help="verify an exported chain directory")
    p.add_argument("--chain", required=True)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("report", help="summarize an event log")
    p.add_argument("--log", required=True)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--csv", action="store_true")
    fmt.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)
    p = sub.add_parser("inspect", help="show one epoch's block")
    p.add_argument("--chain", required=True)
    p.add_argument("--epoch", type=int, required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # Output piped into something like `head`; stop quietly.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
