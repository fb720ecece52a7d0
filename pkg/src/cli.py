from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from src.runner.commands import (
    EXIT_USAGE,
    REPORT_MODES,
    cmd_compress,
    cmd_fetch_data,
    cmd_report,
    cmd_run,
)
from src.utils.config import load_settings
from src.utils.logs import configure_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hat", description="Continual learning with hard attention to the task"
    )
    parser.add_argument("--log-level", default=None, help="override HAT_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train a task sequence for every configured seed")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--seed", type=int, action="append", dest="seeds", help="seed override, repeatable")
    run.add_argument("--force", action="store_true", help="re-run seeds that already completed")

    report = sub.add_parser("report", help="aggregate completed runs into tables")
    report.add_argument("--mode", choices=REPORT_MODES, default="accuracy")
    report.add_argument("--out", default=None, help="also write the table to this CSV")
    report.add_argument("dirs", nargs="+", help="run directories (seed dirs or any parent)")

    compress = sub.add_parser("compress", help="compression training and pruning of one task")
    compress.add_argument("--ckpt", required=True)
    compress.add_argument("--task", type=int, required=True)
    compress.add_argument("--c", type=float, default=1.5)
    compress.add_argument("--init", choices=("uniform", "gaussian"), default="uniform")
    compress.add_argument("--threshold", type=float, default=0.5)
    compress.add_argument("--out", default=None, help="output directory (default: next to the checkpoint)")

    fetch = sub.add_parser("fetch-data", help="download and verify a dataset")
    fetch.add_argument("--name", default="mnist")
    fetch.add_argument("--dest", default=None, help="target directory (default: HAT_DATA_DIR)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return EXIT_USAGE if exc.code else 0

    settings = load_settings()
    configure_logging((args.log_level or settings.log_level).upper())

    if args.command == "run":
        return cmd_run(args.config, args.seeds, args.force)
    if args.command == "report":
        return cmd_report(args.dirs, args.mode, args.out)
    if args.command == "compress":
        return cmd_compress(args.ckpt, args.task, args.c, args.init, args.threshold, args.out)
    if args.command == "fetch-data":
        return cmd_fetch_data(args.name, args.dest)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
