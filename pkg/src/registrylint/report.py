"""Aggregation of suite results into quality metrics and file exports.

Metrics: per-technology error shares and accumulated failing power (with
a DSO-verified-subset variant of everything), column completeness, and
distance-to-boundary histograms for location failures. Exports are
deterministic: identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .model import (
    RECORD_FIELDS,
    SPECIFIC_FIELDS,
    FailureRecord,
    RuleOutcome,
    Technology,
    UnitRecord,
)
from .rules import CHECKED_PAIR_COUNT, MATRIX_CELL_COUNT, FailureSet

# Distances beyond these defaults collapse into one overflow bin.
DEFAULT_OVERFLOW_KM = 60.0
OVERFLOW_KM_BY_TECHNOLOGY = {Technology.SOLAR: 300.0}
DEFAULT_BIN_WIDTH_KM = 5.0


class ReportError(Exception):
    """Raised for unusable report inputs (unknown columns, empty denominators)."""


# Completeness is tracked for every canonical column except the table key.
_COMPLETENESS_COLUMNS: tuple[str, ...] = tuple(n for n in RECORD_FIELDS if n != "technology")


def columns_for(technology: Technology) -> tuple[str, ...]:
    """Canonical columns that structurally exist for a technology."""
    return tuple(
        name
        for name in _COMPLETENESS_COLUMNS
        if name not in SPECIFIC_FIELDS or technology in SPECIFIC_FIELDS[name]
    )


def completeness(records: Sequence[UnitRecord], column: str) -> Fraction:
    """Fraction of non-null entries in a column, as an exact rational.

    An empty table has vacuous completeness 1 (callers flag empty tables
    separately, so division by zero never occurs).
    """
    if column not in _COMPLETENESS_COLUMNS:
        raise ReportError(f"unknown column {column!r}")
    total = len(records)
    if total == 0:
        return Fraction(1)
    non_null = sum(1 for r in records if getattr(r, column) is not None)
    return Fraction(non_null, total)


def percent(fraction: Fraction) -> int:
    """Integer percent, rounded half up (display convention)."""
    return int(fraction * 100 + Fraction(1, 2))


@dataclass
class ColumnStats:
    """Streaming per-technology non-null counters for the completeness table."""

    totals: dict[Technology, int] = field(default_factory=dict)
    non_null: dict[Technology, dict[str, int]] = field(default_factory=dict)

    def update(self, record: UnitRecord) -> None:
        tech = record.technology
        if tech not in self.totals:
            self.totals[tech] = 0
            self.non_null[tech] = {name: 0 for name in columns_for(tech)}
        self.totals[tech] += 1
        counters = self.non_null[tech]
        for name in counters:
            if getattr(record, name) is not None:
                counters[name] += 1

    def collect(self, records: Iterable[UnitRecord]) -> "ColumnStats":
        for record in records:
            self.update(record)
        return self

    def fraction(self, technology: Technology, column: str) -> Fraction:
        total = self.totals.get(technology, 0)
        if total == 0:
            return Fraction(1)
        return Fraction(self.non_null[technology][column], total)


def error_share(
    failures: Iterable[FailureRecord],
    records: Sequence[UnitRecord],
    technology: Technology,
    test_filter: Iterable[int] | None = None,
    dso_only: bool = False,
) -> tuple[float, float]:
    """(failing share, accumulated failing power in kW) for one technology.

    With dso_only, both numerator and denominator are restricted to
    DSO-inspected units.
    """
    wanted = None if test_filter is None else frozenset(test_filter)
    total = sum(
        1
        for r in records
        if r.technology is technology and (not dso_only or r.grid_operator_inspection is True)
    )
    if total == 0:
        raise ReportError(f"empty denominator: no {technology.value} units" + (" (dso subset)" if dso_only else ""))
    failing = 0
    power = 0.0
    for fr in failures:
        if fr.technology is not technology:
            continue
        if dso_only and not fr.dso_inspected:
            continue
        if wanted is not None and not any(o.test_id in wanted for o in fr.failed):
            continue
        failing += 1
        if fr.power_kw is not None:
            power += fr.power_kw
    return failing / total, power


@dataclass(frozen=True)
class Histogram:
    """Fixed-width distance histogram with one open-ended overflow bin.

    Regular bins cover [k*w, (k+1)*w) below the overflow threshold; every
    distance at or beyond the threshold lands in the overflow bin, so bin
    counts always sum to the number of binned distances.
    """

    bin_width_km: float
    overflow_km: float
    counts: tuple[int, ...]
    overflow: int

    @property
    def total(self) -> int:
        return sum(self.counts) + self.overflow

    def edges_km(self) -> list[tuple[float, float]]:
        return [(i * self.bin_width_km, (i + 1) * self.bin_width_km) for i in range(len(self.counts))]


def distance_histogram(
    failures: Iterable[FailureRecord],
    bin_width_km: float = DEFAULT_BIN_WIDTH_KM,
    overflow_km: float = DEFAULT_OVERFLOW_KM,
    *,
    test_id: int = 10,
) -> Histogram:
    """Histogram of measured boundary distances for one location test.

    Failures without a computable distance (unknown region keys) are not
    binned.
    """
    if bin_width_km <= 0:
        raise ReportError("bin width must be positive")
    if overflow_km <= 0:
        raise ReportError("overflow threshold must be positive")
    n_bins = math.ceil(overflow_km / bin_width_km)
    counts = [0] * n_bins
    overflow = 0
    for fr in failures:
        for outcome in fr.failed:
            if outcome.test_id != test_id or outcome.measured is None:
                continue
            distance_km = outcome.measured / 1000.0
            if distance_km >= overflow_km:
                overflow += 1
            else:
                counts[int(distance_km / bin_width_km)] += 1
    return Histogram(bin_width_km, overflow_km, tuple(counts), overflow)


@dataclass
class TechnologyMetrics:
    unit_count: int
    failing_unit_count: int
    failure_share: float
    accumulated_failing_power_kw: float
    per_test: dict[int, int]


@dataclass
class QualityReport:
    """Aggregate quality metrics of one validation run."""

    per_technology: dict[Technology, TechnologyMetrics]
    per_technology_dso: dict[Technology, TechnologyMetrics]
    completeness: dict[Technology, dict[str, Fraction]]
    histograms: dict[Technology, Histogram]
    evaluated_counts: dict[tuple[int, Technology], int]
    matrix_cells: int = MATRIX_CELL_COUNT
    checked_pairs: int = CHECKED_PAIR_COUNT


def _metrics(
    failures: Sequence[FailureRecord],
    technology: Technology,
    total: int,
    *,
    dso_only: bool,
) -> TechnologyMetrics:
    per_test: dict[int, int] = {}
    distinct: set[str] = set()
    anonymous = 0
    power = 0.0
    for fr in failures:
        if fr.technology is not technology:
            continue
        if dso_only and not fr.dso_inspected:
            continue
        if fr.unit_id is None:
            anonymous += 1
        else:
            distinct.add(fr.unit_id)
        if fr.power_kw is not None:
            power += fr.power_kw
        for outcome in fr.failed:
            per_test[outcome.test_id] = per_test.get(outcome.test_id, 0) + 1
    failing = len(distinct) + anonymous
    share = failing / total if total else 0.0
    return TechnologyMetrics(total, failing, share, power, per_test)


def build_report(
    failure_set: FailureSet,
    column_stats: ColumnStats | None = None,
    *,
    completeness_table: dict[Technology, dict[str, Fraction]] | None = None,
    bin_width_km: float = DEFAULT_BIN_WIDTH_KM,
    overflow_km: dict[Technology, float] | None = None,
) -> QualityReport:
    overflow = {tech: OVERFLOW_KM_BY_TECHNOLOGY.get(tech, DEFAULT_OVERFLOW_KM) for tech in Technology}
    if overflow_km:
        overflow.update(overflow_km)
    per_technology = {}
    per_technology_dso = {}
    histograms = {}
    completeness_table = dict(completeness_table) if completeness_table else {}
    for tech in Technology:
        total = failure_set.records_total.get(tech, 0)
        dso_total = failure_set.records_dso.get(tech, 0)
        per_technology[tech] = _metrics(failure_set.failures, tech, total, dso_only=False)
        per_technology_dso[tech] = _metrics(failure_set.failures, tech, dso_total, dso_only=True)
        tech_failures = [fr for fr in failure_set.failures if fr.technology is tech]
        histograms[tech] = distance_histogram(
            tech_failures, bin_width_km=bin_width_km, overflow_km=overflow[tech]
        )
        if column_stats is not None:
            completeness_table[tech] = {
                column: column_stats.fraction(tech, column) for column in columns_for(tech)
            }
    return QualityReport(
        per_technology=per_technology,
        per_technology_dso=per_technology_dso,
        completeness=completeness_table,
        histograms=histograms,
        evaluated_counts=failure_set.evaluated_counts(),
    )


FAILURE_CSV_COLUMNS = (
    "unit_id",
    "technology",
    "test_ids",
    "detail",
    "measured",
    "measured_unit",
    "power_kw",
    "district_id",
    "municipality_id",
)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def failure_to_json(fr: FailureRecord) -> dict:
    return {
        "unit_id": fr.unit_id,
        "technology": fr.technology.value,
        "power_kw": fr.power_kw,
        "district_id": fr.district_id,
        "municipality_id": fr.municipality_id,
        "dso_inspected": fr.dso_inspected,
        "tests": [
            {
                "test_id": o.test_id,
                "detail": o.detail,
                "measured": o.measured,
                "measured_unit": o.measured_unit,
            }
            for o in fr.failed
        ],
    }


def failure_from_json(payload: dict) -> FailureRecord:
    return FailureRecord(
        unit_id=payload["unit_id"],
        technology=Technology(payload["technology"]),
        power_kw=payload["power_kw"],
        district_id=payload["district_id"],
        municipality_id=payload["municipality_id"],
        dso_inspected=payload["dso_inspected"],
        failed=tuple(
            RuleOutcome(payload["unit_id"], t["test_id"], False, t["detail"], t["measured"], t["measured_unit"])
            for t in payload["tests"]
        ),
    )


def _failures_ndjson(failures: Sequence[FailureRecord]) -> str:
    return "".join(json.dumps(failure_to_json(fr), ensure_ascii=False) + "\n" for fr in failures)


def _failures_csv(failures: Sequence[FailureRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FAILURE_CSV_COLUMNS)
    for fr in failures:
        writer.writerow(
            [
                _cell(fr.unit_id),
                fr.technology.value,
                ";".join(str(o.test_id) for o in fr.failed),
                ";".join(o.detail for o in fr.failed),
                ";".join(_cell(o.measured) for o in fr.failed),
                ";".join(_cell(o.measured_unit) for o in fr.failed),
                _cell(fr.power_kw),
                _cell(fr.district_id),
                _cell(fr.municipality_id),
            ]
        )
    return buf.getvalue()


def _metrics_json(metrics: TechnologyMetrics) -> dict:
    return {
        "unit_count": metrics.unit_count,
        "failing_unit_count": metrics.failing_unit_count,
        "failure_share": metrics.failure_share,
        "accumulated_failing_power_kw": metrics.accumulated_failing_power_kw,
        "per_test": {str(tid): metrics.per_test[tid] for tid in sorted(metrics.per_test)},
        "empty": metrics.unit_count == 0,
    }


def summary_json(report: QualityReport) -> str:
    payload = {
        "matrix": {
            "cells": report.matrix_cells,
            "checked_pairs": report.checked_pairs,
            "evaluated_counts": {
                f"{tid}:{tech.value}": count for (tid, tech), count in sorted(
                    report.evaluated_counts.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
                )
            },
        },
        "per_technology": {
            tech.value: _metrics_json(report.per_technology[tech]) for tech in Technology
        },
        "per_technology_dso": {
            tech.value: _metrics_json(report.per_technology_dso[tech]) for tech in Technology
        },
        "completeness_percent": {
            tech.value: {column: percent(frac) for column, frac in table.items()}
            for tech, table in sorted(report.completeness.items(), key=lambda kv: kv[0].value)
        },
        "completeness_fraction": {
            tech.value: {column: [frac.numerator, frac.denominator] for column, frac in table.items()}
            for tech, table in sorted(report.completeness.items(), key=lambda kv: kv[0].value)
        },
        "distance_histograms": {
            tech.value: {
                "bin_width_km": hist.bin_width_km,
                "overflow_km": hist.overflow_km,
                "counts": list(hist.counts),
                "overflow": hist.overflow,
            }
            for tech, hist in sorted(report.histograms.items(), key=lambda kv: kv[0].value)
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _completeness_csv(report: QualityReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["technology", "column", "fraction", "percent"])
    for tech in Technology:
        table = report.completeness.get(tech, {})
        for column in columns_for(tech):
            if column in table:
                frac = table[column]
                writer.writerow([tech.value, column, f"{frac.numerator}/{frac.denominator}", percent(frac)])
    return buf.getvalue()


def _histogram_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_low_km", "bin_high_km", "count"])
    for (low, high), count in zip(hist.edges_km(), hist.counts):
        writer.writerow([repr(low), repr(high), count])
    writer.writerow([repr(hist.overflow_km), "inf", hist.overflow])
    return buf.getvalue()


def _errors_by_district_csv(failures: Sequence[FailureRecord]) -> str:
    acc: dict[tuple[str, int], tuple[int, float]] = {}
    for fr in failures:
        district = fr.district_id or ""
        for outcome in fr.failed:
            key = (district, outcome.test_id)
            count, power = acc.get(key, (0, 0.0))
            acc[key] = (count + 1, power + (fr.power_kw or 0.0))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["district_id", "test_id", "count", "accumulated_power_kw"])
    for (district, test_id), (count, power) in sorted(acc.items()):
        writer.writerow([district, test_id, count, repr(power)])
    return buf.getvalue()


def export(
    failures: Sequence[FailureRecord],
    report: QualityReport,
    out_dir: str | Path,
    formats: Iterable[str] = ("ndjson", "csv", "summary"),
) -> list[Path]:
    """Write failure and summary files; returns the written paths.

    Files are written to a temporary name and renamed, so a failed run
    never leaves partial outputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = set(formats)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = out / name
        _atomic_write(path, text)
        written.append(path)

    if "ndjson" in formats:
        emit("failures.ndjson", _failures_ndjson(failures))
    if "csv" in formats:
        emit("failures.csv", _failures_csv(failures))
    if "summary" in formats:
        emit("summary.json", summary_json(report))
        emit("completeness.csv", _completeness_csv(report))
        for tech in Technology:
            if tech in report.histograms:
                emit(f"distance_histogram_{tech.value}.csv", _histogram_csv(report.histograms[tech]))
        emit("errors_by_district.csv", _errors_by_district_csv(failures))
    return written


def load_failures_ndjson(path: str | Path) -> list[FailureRecord]:
    failures = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                failures.append(failure_from_json(json.loads(line)))
    return failures
