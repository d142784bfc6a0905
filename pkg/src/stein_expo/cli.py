"""Command-line entry point: stein-expo <subcommand> --config <file> [...].

Exit codes: 0 all checks pass, 1 an invariant or bound comparison failed,
2 the configuration was invalid.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    KINDS,
    ConfigError,
    ExperimentConfig,
    RunReport,
    SCHEMA_NOTES,
    run,
    schema_for,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stein-expo",
        description="Exponential-approximation bounds checked against Monte Carlo truth.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", type=Path, help="JSON config file (one experiment)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out-csv", type=Path, help="write rows as CSV")
        p.add_argument("--out-json", type=Path, help="write the full report as JSON")
        p.add_argument("--threads", type=int, help="worker processes (does not affect results)")
        p.add_argument("--schema", action="store_true", help="print the CSV schema and exit")
    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top-level JSON object expected")
    if data.get("kind", args.kind) != args.kind:
        raise ConfigError(f"kind: config says {data.get('kind')!r}, subcommand is {args.kind!r}")
    data["kind"] = args.kind
    for flag in ("seed", "threads"):
        value = getattr(args, flag)
        if value is not None:
            data[flag] = value
    if args.out_csv is not None:
        data["out_csv"] = str(args.out_csv)
    if args.out_json is not None:
        data["out_json"] = str(args.out_json)
    config = ExperimentConfig.from_dict(data)
    config.validate()
    return config


def _print_schema(kind: str, mode: str) -> None:
    for col in schema_for(kind, mode):
        print(f"{col}: {SCHEMA_NOTES.get(col, '')}")


def _emit(report: RunReport, config: ExperimentConfig) -> None:
    if config.out_csv:
        Path(config.out_csv).write_bytes(report.to_csv_bytes())
    if config.out_json:
        Path(config.out_json).write_bytes(report.to_json_bytes())
    if not config.out_csv and not config.out_json:
        sys.stdout.buffer.write(report.to_json_bytes())
    for verdict in report.verdicts:
        print(f"[{verdict['status']}] {verdict['name']}", file=sys.stderr)
    print(f"wall time: {report.wall_time_s:.2f}s", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.schema:
            mode = "erdos-taylor"
            if args.config is not None:
                try:
                    mode = json.loads(Path(args.config).read_text()).get("mode", mode)
                except (OSError, json.JSONDecodeError):
                    pass
            _print_schema(args.kind, mode)
            return 0
        config = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report = run(config)
    _emit(report, config)
    if args.kind == "verify":
        for row in report.rows:
            print(f"[{row['status']}] {row['module']}/{row['invariant']}: {row['detail']}",
                  file=sys.stderr)
    return 1 if report.failed else 0


if __name__ == "__main__":
    sys.exit(main())
