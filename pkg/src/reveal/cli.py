"""Command-line entry point: ``reveal run|report|overlay|parse``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import RevealError
from .overlay import overlay_png
from .parser import SCHEMA_IDS, outcome_to_dict, parse
from .report import render_report
from .runner import RunConfig, format_plan, plan, run

log = logging.getLogger("reveal")


def _cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    if args.resume:
        config.resume = True
    if args.dry_run:
        for line in format_plan(plan(config)):
            print(line)
        return 0
    records = run(config)
    print(records)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    artifacts = render_report(args.records, args.out)
    sys.stdout.write(artifacts.table_txt.read_text(encoding="utf-8"))
    print(f"\nreport written to {artifacts.table_txt.parent}")
    return 0


def _cmd_overlay(args: argparse.Namespace) -> int:
    data = Path(args.input).read_bytes()
    Path(args.output).write_bytes(overlay_png(data))
    return 0


def _cmd_parse(args: argparse.Namespace) -> int:
    text = sys.stdin.read() if args.input == "-" else Path(args.input).read_text(encoding="utf-8")
    outcome = parse(text, args.schema, repair=not args.strict)
    print(json.dumps(outcome_to_dict(outcome), indent=2))
    return 0 if outcome.ok else 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reveal", description="Forgery-detection prompting harness for vision-language models.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evaluate the model x strategy x dataset matrix")
    p.add_argument("--config", required=True, help="YAML or JSON run configuration")
    p.add_argument("--dry-run", action="store_true", help="print the call matrix and cost estimate only")
    p.add_argument("--resume", action="store_true", help="continue the latest run in output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render tables and ROC files from a records log")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default=None, help="output folder (default: <run dir>/report)")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("overlay", help="draw the numbered 3x3 grid on an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_overlay)

    p = sub.add_parser("parse", help="parse a model reply and print the outcome as JSON")
    p.add_argument("--schema", required=True, choices=SCHEMA_IDS)
    p.add_argument("--in", dest="input", required=True, help="text file, or - for stdin")
    p.add_argument("--strict", action="store_true", help="disable repairs")
    p.set_defaults(func=_cmd_parse)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (RevealError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
