"""Command-line entry point.

Exit codes: 0 success, 1 run errors, 2 configuration/usage errors.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from .bench import SchemaError, load_benchmark, run_benchmark
from .config import ConfigError, build_engine, load_config
from .memory import STORE_NAMES, _load_store_file
from .report import (
    load_report,
    render_csv,
    render_figures,
    render_instances_csv,
    render_table,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agora",
        description="Solve natural-language optimization benchmarks with debating agent teams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--benchmark", required=True, help="benchmark JSONL file")
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--out", default="report.json", help="report output path")
        p.add_argument("--parallelism", type=int, default=1)
        p.add_argument("--reverify", action="store_true",
                       help="re-run each final script before scoring")
        p.add_argument("--transcripts", default=None, help="directory for debate transcripts")

    run_p = sub.add_parser("run", help="execute a benchmark with the configured backends")
    add_run_args(run_p)
    run_p.add_argument("--mode", choices=["live", "record", "replay"], default=None)
    run_p.set_defaults(func=_cmd_run)

    replay_p = sub.add_parser("replay", help="run a benchmark entirely from a cassette")
    add_run_args(replay_p)
    replay_p.set_defaults(func=_cmd_run, mode="replay")

    record_p = sub.add_parser("record", help="live run that writes a cassette")
    add_run_args(record_p)
    record_p.set_defaults(func=_cmd_run, mode="record")

    memory_p = sub.add_parser("memory", help="inspect or export the memory stores")
    memory_sub = memory_p.add_subparsers(dest="memory_command", required=True)
    inspect_p = memory_sub.add_parser("inspect", help="print store sizes and sample keys")
    inspect_p.add_argument("--config", required=True)
    inspect_p.set_defaults(func=_cmd_memory_inspect)
    export_p = memory_sub.add_parser("export", help="copy the store files to a directory")
    export_p.add_argument("--config", required=True)
    export_p.add_argument("--out", required=True)
    export_p.set_defaults(func=_cmd_memory_export)

    report_p = sub.add_parser("report", help="render a saved report")
    report_p.add_argument("--in", dest="input", required=True, help="report JSON file")
    report_p.add_argument("--format", choices=["table", "csv"], default="table")
    report_p.add_argument("--out", default=None,
                          help="directory for CSV files and figures")
    report_p.set_defaults(func=_cmd_report)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    engine = build_engine(config, mode=getattr(args, "mode", None))
    benchmark = load_benchmark(args.benchmark)
    report = run_benchmark(
        benchmark,
        engine.teams,
        engine.debate_config,
        memory=engine.banks,
        parallelism=args.parallelism,
        write_back=engine.write_back,
        rule=engine.evaluation,
        reverify=args.reverify,
        reverify_timeout=engine.reverify_timeout,
        transcript_dir=args.transcripts,
    )
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(render_table(report))
    print(f"\nreport written to {args.out}")
    return 0


def _memory_dir(args: argparse.Namespace) -> Path:
    config = load_config(args.config)
    if config.memory_dir is None:
        raise ConfigError("config has no [memory] dir to inspect")
    directory = Path(config.memory_dir)
    if not directory.is_absolute():
        directory = config.base_dir / directory
    return directory


def _cmd_memory_inspect(args: argparse.Namespace) -> int:
    directory = _memory_dir(args)
    config = load_config(args.config)
    for store in STORE_NAMES:
        path = directory / f"{store}.jsonl"
        if not path.exists():
            print(f"{store}: (empty)")
            continue
        entries, corrupt = _load_store_file(path, store, config.embedding_dim)
        print(f"{store}: {len(entries)} entries" + (f", {corrupt} corrupt lines" if corrupt else ""))
        for entry in entries[:3]:
            key = " ".join(entry.key_text.split())[:90]
            print(f"  - {key}")
    return 0


def _cmd_memory_export(args: argparse.Namespace) -> int:
    directory = _memory_dir(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    exported = 0
    for store in STORE_NAMES:
        path = directory / f"{store}.jsonl"
        if path.exists():
            shutil.copy2(path, out / path.name)
            exported += 1
    print(f"exported {exported} store file(s) to {out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.input)
    if not path.exists():
        print(f"report file not found: {path}", file=sys.stderr)
        return 1
    try:
        report = load_report(path)
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"malformed report file: {exc}", file=sys.stderr)
        return 1
    if args.format == "csv":
        print(render_csv(report), end="")
    else:
        print(render_table(report))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(render_csv(report), encoding="utf-8")
        (out / "per_instance.csv").write_text(render_instances_csv(report), encoding="utf-8")
        figures = render_figures(report, out)
        names = ", ".join(p.name for p in figures)
        print(f"wrote report.csv, per_instance.csv, {names} to {out}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, OSError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
