"""Command-line entry point.

    interference-lab <subcommand> [--config FILE] [--out DIR] [--jobs N]

Each subcommand writes ``<name>.json`` (the result record) and one CSV per
figure table into the output directory.  Exit status: 0 on success, 2 on a
configuration error, 3 on a data error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import ConfigError, DataError, LabError
from .io import _jsonable, write_table
from .pipeline import RUNNERS, SUBCOMMANDS, run_all

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_OTHER = 0, 2, 3, 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2 as well; keep the message short
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="interference-lab", description="Simulate interference in semantic kernel-threshold memories.")
    p.add_argument("subcommand", choices=SUBCOMMANDS + ("all",))
    p.add_argument("--config", type=Path, default=None, help="YAML config; defaults apply to anything omitted")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
    return p


def _write(out: Path, name: str, outcome) -> None:
    outcome.record.write(out / f"{name}.json")
    for table, (cols, rows) in outcome.tables.items():
        write_table(out / f"{table}.csv", cols, rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.subcommand == "all":
                outcomes = run_all(cfg, args.jobs)
            else:
                outcomes = {args.subcommand: RUNNERS[args.subcommand](cfg, args.jobs)}
        for name, oc in outcomes.items():
            _write(args.out, name, oc)
        summary = {name: oc.record.aggregates for name, oc in outcomes.items()}
        (args.out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    for name, oc in outcomes.items():
        print(f"{name}: wrote {args.out / (name + '.json')} ({oc.record.wall_time_s:.1f}s)")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
