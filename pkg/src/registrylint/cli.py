"""Command-line entry point: validate, synth and report subcommands.

validate wires the whole pipeline (parse registry tables and boundaries,
run the test catalog, export failures and metrics) in one invocation.
synth produces seeded test fixtures with an answer key; report rebuilds
the aggregate outputs from previously exported failures.

Exit codes: 0 = ran clean, 1 = ran and found failures, 2 = fatal error.
Progress goes to stderr; stdout carries exactly one final JSON line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .geo import GeometryError
from .ingest import (
    ColumnMapping,
    IngestError,
    RegistryReader,
    default_mapping,
    parse_boundaries,
    write_boundaries_geojson,
    write_registry_csv,
)
from .model import Technology
from .report import (
    ColumnStats,
    build_report,
    export,
    load_failures_ndjson,
)
from .rules import Boundaries, ConfigError, FailureSet, RuleConfig, run_suite
from .synth import ErrorInjectionSpec, SynthError, generate_clean, inject_errors, make_boundary_grid

CONFIG_ENV_VAR = "REGISTRYLINT_CONFIG"

EXIT_CLEAN = 0
EXIT_FAILURES = 1
EXIT_FATAL = 2


@dataclass
class RunConfig:
    """Resolved settings of one validate run."""

    inputs: dict[Technology, Path]
    districts_path: Path | None
    municipalities_path: Path | None
    out_dir: Path
    rules: RuleConfig
    mapping: ColumnMapping
    delimiter: str = ","
    region_keys: dict[str, str] = field(default_factory=dict)
    technologies: tuple[Technology, ...] | None = None
    jobs: int = 1
    dso_only: bool = False

    def validate(self) -> None:
        if self.jobs < 1:
            raise ConfigError("worker count must be >= 1")
        if not self.inputs:
            raise ConfigError("no registry inputs given (use --input tech=path)")
        for tech, path in self.inputs.items():
            if not path.is_file():
                raise ConfigError(f"input for {tech.value} does not exist: {path}")
        for path in (self.districts_path, self.municipalities_path):
            if path is not None and not path.is_file():
                raise ConfigError(f"boundary file does not exist: {path}")


def _load_config_file(path: str | None) -> dict:
    resolved = path or os.environ.get(CONFIG_ENV_VAR)
    if not resolved:
        return {}
    file = Path(resolved)
    if not file.is_file():
        raise ConfigError(f"config file does not exist: {file}")
    try:
        return json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {file} is not valid JSON: {exc}") from None


def _parse_inputs(pairs: list[str]) -> dict[Technology, Path]:
    inputs: dict[Technology, Path] = {}
    for pair in pairs:
        tech_name, sep, path = pair.partition("=")
        if not sep:
            raise ConfigError(f"--input expects tech=path, got {pair!r}")
        try:
            tech = Technology(tech_name)
        except ValueError:
            raise ConfigError(f"unknown technology {tech_name!r}") from None
        if tech in inputs:
            raise ConfigError(f"duplicate --input for {tech_name}")
        inputs[tech] = Path(path)
    return inputs


def _build_run_config(args) -> RunConfig:
    file_cfg = _load_config_file(args.config)
    rules_cfg = RuleConfig.from_dict(file_cfg.get("rules", {}))
    if args.buffer_m is not None:
        if args.buffer_m < 0:
            raise ConfigError("--buffer-m must be >= 0")
        payload = dict(file_cfg.get("rules", {}))
        payload["buffer_m"] = args.buffer_m
        rules_cfg = RuleConfig.from_dict(payload)
    mapping = default_mapping()
    if "mapping" in file_cfg:
        # Listed technologies replace their default mapping; others keep it.
        overrides = ColumnMapping.from_dict(file_cfg["mapping"])
        mapping = ColumnMapping({**mapping.entries, **overrides.entries})
    technologies = tuple(Technology(t) for t in args.technology) if args.technology else None
    run = RunConfig(
        inputs=_parse_inputs(args.input),
        districts_path=Path(args.districts) if args.districts else None,
        municipalities_path=Path(args.municipalities) if args.municipalities else None,
        out_dir=Path(args.out),
        rules=rules_cfg,
        mapping=mapping,
        delimiter=file_cfg.get("csv", {}).get("delimiter", ","),
        region_keys=file_cfg.get("boundary_keys", {}),
        technologies=technologies,
        jobs=args.jobs,
        dso_only=args.dso_only,
    )
    run.validate()
    return run


def _stream_records(readers: list[RegistryReader], stats: ColumnStats, dso_only: bool) -> Iterable:
    for reader in readers:
        print(f"reading {reader.path} ({reader.technology.value})", file=sys.stderr)
        for record in reader:
            if dso_only and record.grid_operator_inspection is not True:
                continue
            stats.update(record)
            yield record


def cmd_validate(args) -> int:
    run = _build_run_config(args)
    boundaries = Boundaries(
        districts=(
            parse_boundaries(run.districts_path, "district", region_key=run.region_keys.get("district"))
            if run.districts_path
            else None
        ),
        municipalities=(
            parse_boundaries(
                run.municipalities_path, "municipality", region_key=run.region_keys.get("municipality")
            )
            if run.municipalities_path
            else None
        ),
    )
    selected = [
        (tech, path)
        for tech, path in sorted(run.inputs.items(), key=lambda kv: kv[0].value)
        if run.technologies is None or tech in run.technologies
    ]
    readers = [
        RegistryReader(path, tech, run.mapping, delimiter=run.delimiter) for tech, path in selected
    ]
    stats = ColumnStats()
    failure_set = run_suite(
        _stream_records(readers, stats, run.dso_only),
        boundaries if (boundaries.districts or boundaries.municipalities) else None,
        run.rules,
        jobs=run.jobs,
    )
    issues = sum(len(r.issues) for r in readers)
    rejected = sum(r.rows_rejected for r in readers)
    rows = sum(r.rows_total for r in readers)
    print(f"parsed {rows} rows ({rejected} rejected, {issues} cell issues)", file=sys.stderr)

    report = build_report(failure_set, stats)
    export(failure_set.failures, report, run.out_dir)
    _print_tally(failure_set)

    failing = failure_set.failing_unit_count()
    print(
        json.dumps(
            {
                "records": failure_set.total_records,
                "rows_rejected": rejected,
                "cell_issues": issues,
                "failing_units": failing,
                "out_dir": str(run.out_dir),
            },
            sort_keys=True,
        )
    )
    return EXIT_FAILURES if failing else EXIT_CLEAN


def _print_tally(failure_set: FailureSet) -> None:
    print("failures per (test, technology):", file=sys.stderr)
    for (test_id, tech), count in sorted(
        failure_set.failure_tally.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
    ):
        print(f"  test {test_id:2d} {tech.value:<11s} {count}", file=sys.stderr)
    if not failure_set.failure_tally:
        print("  none", file=sys.stderr)


def cmd_synth(args) -> int:
    if args.count < 0:
        raise ConfigError("--count must be >= 0")
    if not 0.0 <= args.error_rate <= 1.0:
        raise ConfigError("--error-rate must be within [0, 1]")
    technologies = (
        tuple(Technology(t) for t in args.technology) if args.technology else tuple(Technology)
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    boundaries = make_boundary_grid()
    write_boundaries_geojson(boundaries.districts, out_dir / "districts.geojson")
    write_boundaries_geojson(boundaries.municipalities, out_dir / "municipalities.geojson")

    merged_expected: dict = {}
    merged_counts: dict = {}
    total = 0
    for tech in technologies:
        records = generate_clean(tech, args.count, args.seed, boundaries)
        if args.error_rate > 0 and records:
            spec = ErrorInjectionSpec.uniform(args.error_rate, tech, len(records))
            records, truth = inject_errors(records, spec, args.seed, boundaries=boundaries)
            merged_expected.update({uid: sorted(tests) for uid, tests in truth.expected.items()})
            for name, count in truth.class_counts.items():
                merged_counts[name] = merged_counts.get(name, 0) + count
        write_registry_csv(records, out_dir / f"{tech.value}.csv", tech)
        total += len(records)
        print(f"wrote {len(records)} {tech.value} records", file=sys.stderr)

    truth_payload = {
        "seed": args.seed,
        "class_counts": {k: merged_counts[k] for k in sorted(merged_counts)},
        "units": {uid: merged_expected[uid] for uid in sorted(merged_expected)},
    }
    (out_dir / "ground_truth.json").write_text(
        json.dumps(truth_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        json.dumps(
            {"records": total, "errors": len(merged_expected), "out_dir": str(out_dir)},
            sort_keys=True,
        )
    )
    return EXIT_CLEAN


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    failures_path = out_dir / "failures.ndjson"
    summary_path = out_dir / "summary.json"
    if not failures_path.is_file():
        raise ConfigError(f"missing failure file: {failures_path}")
    if not summary_path.is_file():
        raise ConfigError(f"missing summary file: {summary_path}")
    failures = load_failures_ndjson(failures_path)
    stored = json.loads(summary_path.read_text(encoding="utf-8"))

    records_total = {
        Technology(name): block["unit_count"] for name, block in stored["per_technology"].items()
    }
    records_dso = {
        Technology(name): block["unit_count"] for name, block in stored["per_technology_dso"].items()
    }
    evaluated = tuple(sorted({int(key.split(":")[0]) for key in stored["matrix"]["evaluated_counts"]}))
    completeness_table = {
        Technology(name): {column: Fraction(n, d) for column, (n, d) in table.items()}
        for name, table in stored.get("completeness_fraction", {}).items()
    }

    if args.dso_only:
        failures = [fr for fr in failures if fr.dso_inspected]
        records_total = records_dso

    tally: dict = {}
    for fr in failures:
        for outcome in fr.failed:
            key = (outcome.test_id, fr.technology)
            tally[key] = tally.get(key, 0) + 1
    failure_set = FailureSet(
        failures=failures,
        records_total=records_total,
        records_dso=records_dso,
        failure_tally=tally,
        evaluated_tests=evaluated,
    )
    overflow = None
    if args.overflow is not None:
        overflow = {tech: args.overflow for tech in Technology}
    report = build_report(
        failure_set,
        completeness_table=completeness_table,
        bin_width_km=args.bin_width,
        overflow_km=overflow,
    )
    written = export(failures, report, out_dir, formats=("csv", "summary"))
    print(json.dumps({"out_dir": str(out_dir), "files": len(written)}, sort_keys=True))
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="registrylint",
        description="Validate energy-unit registry tables against the data-test catalog.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="run the full pipeline on registry CSV tables")
    p_validate.add_argument(
        "--input",
        action="append",
        default=[],
        metavar="TECH=PATH",
        help="registry CSV for one technology (repeatable)",
    )
    p_validate.add_argument("--districts", help="district boundaries (GeoJSON)")
    p_validate.add_argument("--municipalities", help="municipality boundaries (GeoJSON)")
    p_validate.add_argument("--config", help=f"run configuration file (or ${CONFIG_ENV_VAR})")
    p_validate.add_argument("--out", required=True, help="output directory")
    p_validate.add_argument(
        "--technology", action="append", choices=[t.value for t in Technology], help="filter (repeatable)"
    )
    p_validate.add_argument("--jobs", type=int, default=1, help="worker count (default 1)")
    p_validate.add_argument("--buffer-m", type=float, default=None, help="location buffer override")
    p_validate.add_argument(
        "--dso-only", action="store_true", help="validate only DSO-inspected units"
    )
    p_validate.set_defaults(func=cmd_validate)

    p_synth = sub.add_parser("synth", help="generate seeded synthetic registry tables")
    p_synth.add_argument(
        "--technology", action="append", choices=[t.value for t in Technology], help="default: all"
    )
    p_synth.add_argument("--count", type=int, required=True, help="records per technology")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--error-rate", type=float, default=0.0, help="share of units with errors")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_report = sub.add_parser("report", help="regenerate metrics from exported failures")
    p_report.add_argument("--out", required=True, help="directory holding failures.ndjson")
    p_report.add_argument("--dso-only", action="store_true", help="restrict to DSO-inspected units")
    p_report.add_argument("--bin-width", type=float, default=5.0, help="histogram bin width (km)")
    p_report.add_argument("--overflow", type=float, default=None, help="histogram overflow (km)")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestError, GeometryError, SynthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
