"""Parsing of raw registry CSV dumps and geoboundary files.

Raw per-technology CSV tables are reduced to the common data model via a
declarative column mapping (selection, renaming, unit conversion). Cell
values that cannot be parsed become nulls with a recorded issue, so the
null test can flag them; only structurally broken rows are rejected. No
row is ever dropped silently: rows = records + rejected rows.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator

from .geo import BoundarySet, PolygonGeom, Region
from .model import RECORD_FIELDS, Technology, UnitRecord


class IngestError(Exception):
    """Fatal input problem: bad header, malformed boundary file, etc."""


@dataclass(frozen=True, slots=True)
class ParseIssue:
    line: int  # 1-based line number in the source file
    field: str | None
    value: str | None
    reason: str


@dataclass(slots=True)
class ParseResult:
    records: list[UnitRecord]
    issues: list[ParseIssue]
    rows_total: int
    rows_rejected: int


@dataclass(frozen=True, slots=True)
class MappingEntry:
    raw: str  # column name in the raw export
    field: str  # canonical UnitRecord field
    factor: float = 1.0  # multiplicative unit conversion, numeric fields only


# Canonical fields that some enabled test reads, per technology. district_id
# counts as covered when municipality_id is mapped (first-5-digits rule).
_COMMON_TEST_FIELDS = frozenset(
    {"unit_id", "municipality_id", "operating_status", "zip_code", "coordinate", "installation_year"}
)
_TEST_FIELDS: dict[Technology, frozenset[str]] = {
    Technology.BIOMASS: _COMMON_TEST_FIELDS | {"power_kw"},
    Technology.COMBUSTION: _COMMON_TEST_FIELDS | {"power_kw"},
    Technology.HYDRO: _COMMON_TEST_FIELDS | {"power_kw"},
    Technology.SOLAR: _COMMON_TEST_FIELDS
    | {
        "power_gross_kw",
        "power_inverter_kw",
        "power_net_kw",
        "number_of_modules",
        "unit_type",
        "area_ha",
        "unit_name",
    },
    Technology.STORAGE: _COMMON_TEST_FIELDS | {"power_gross_kw", "power_inverter_kw", "power_net_kw"},
    Technology.WIND: _COMMON_TEST_FIELDS | {"power_kw", "hub_height_m", "rotor_diameter_m"},
}

_FLOAT_FIELDS = frozenset(
    {
        "power_kw",
        "power_gross_kw",
        "power_inverter_kw",
        "power_net_kw",
        "storage_capacity_kwh",
        "hub_height_m",
        "rotor_diameter_m",
        "area_ha",
    }
)
_INT_FIELDS = frozenset({"installation_year", "number_of_modules"})
_DATE_FIELDS = frozenset({"commissioning_date", "planned_commissioning_date", "download_date"})
_BOOL_FIELDS = frozenset({"grid_operator_inspection"})


@dataclass(frozen=True)
class ColumnMapping:
    """Per-technology mapping from raw columns to canonical fields."""

    entries: dict[Technology, tuple[MappingEntry, ...]]

    def __post_init__(self) -> None:
        for tech, tech_entries in self.entries.items():
            targets = [e.field for e in tech_entries]
            for name in targets:
                if name not in RECORD_FIELDS:
                    raise IngestError(f"mapping for {tech.value} targets unknown field {name!r}")
                if targets.count(name) > 1:
                    raise IngestError(f"mapping for {tech.value} targets {name!r} more than once")
            covered = set(targets)
            if "municipality_id" in covered:
                covered.add("district_id")
            missing = _TEST_FIELDS[tech] - covered
            if missing:
                raise IngestError(
                    f"mapping for {tech.value} misses test-required fields: {', '.join(sorted(missing))}"
                )

    def for_technology(self, technology: Technology) -> tuple[MappingEntry, ...]:
        if technology not in self.entries:
            raise IngestError(f"no column mapping for technology {technology.value!r}")
        return self.entries[technology]

    @classmethod
    def from_dict(cls, payload: dict) -> ColumnMapping:
        entries: dict[Technology, tuple[MappingEntry, ...]] = {}
        for tech_name, rows in payload.items():
            tech = Technology(tech_name)
            entries[tech] = tuple(
                MappingEntry(raw=r[0], field=r[1], factor=float(r[2]) if len(r) > 2 and r[2] is not None else 1.0)
                for r in rows
            )
        return cls(entries)


_COMMON_COLUMNS = (
    ("mastr id", "unit_id"),
    ("unit owner mastr id", "owner_id"),
    ("operating status", "operating_status"),
    ("grid operator inspection", "grid_operator_inspection"),
    ("commissioning date", "commissioning_date"),
    ("planned commissioning date", "planned_commissioning_date"),
    ("installation year", "installation_year"),
    ("download date", "download_date"),
    ("zip code", "zip_code"),
    ("municipality", "municipality"),
    ("municipality id", "municipality_id"),
    ("district", "district"),
    ("district id", "district_id"),
    ("coordinate", "coordinate"),
    ("unit name", "unit_name"),
)

_SPECIFIC_COLUMNS: dict[Technology, tuple[tuple[str, str], ...]] = {
    Technology.BIOMASS: (
        ("power", "power_kw"),
        ("combustion technology", "combustion_technology"),
        ("fuel type", "fuel_type"),
    ),
    Technology.COMBUSTION: (("power", "power_kw"), ("energy carrier", "energy_carrier")),
    Technology.HYDRO: (
        ("power", "power_kw"),
        ("plant type", "plant_type"),
        ("type of inflow", "type_of_inflow"),
    ),
    Technology.SOLAR: (
        ("power gross", "power_gross_kw"),
        ("power inverter", "power_inverter_kw"),
        ("power net", "power_net_kw"),
        ("number of modules", "number_of_modules"),
        ("unit type", "unit_type"),
        ("area", "area_ha"),
        ("orientation", "orientation"),
        ("orientation secondary", "orientation_secondary"),
    ),
    Technology.STORAGE: (
        ("power gross", "power_gross_kw"),
        ("power inverter", "power_inverter_kw"),
        ("power net", "power_net_kw"),
        ("storage capacity", "storage_capacity_kwh"),
        ("battery technology", "battery_technology"),
    ),
    Technology.WIND: (
        ("power", "power_kw"),
        ("hub height", "hub_height_m"),
        ("rotor diameter", "rotor_diameter_m"),
        ("position", "position"),
        ("manufacturer", "manufacturer"),
        ("type description", "type_description"),
    ),
}


def default_mapping() -> ColumnMapping:
    """Mapping for the standard transformed export (column names as shipped)."""
    entries = {
        tech: tuple(MappingEntry(raw, fld) for raw, fld in _COMMON_COLUMNS + _SPECIFIC_COLUMNS[tech])
        for tech in Technology
    }
    return ColumnMapping(entries)


def _parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        # Accept German decimal commas ("5,5"), but not mixed separators.
        if text.count(",") == 1 and "." not in text:
            value = float(text.replace(",", "."))
        else:
            raise ValueError("not a number") from None
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _parse_cell(name: str, text: str, factor: float):
    if name in _FLOAT_FIELDS:
        value = _parse_float(text) * factor
        if value < 0:
            raise ValueError("negative value")
        return value
    if name in _INT_FIELDS:
        value = int(text)
        if name == "number_of_modules" and value < 0:
            raise ValueError("negative count")
        return value
    if name in _DATE_FIELDS:
        return date.fromisoformat(text)
    if name in _BOOL_FIELDS:
        lowered = text.lower()
        if lowered in ("1", "true", "ja", "yes"):
            return True
        if lowered in ("0", "false", "nein", "no"):
            return False
        raise ValueError("not a boolean")
    if name == "coordinate":
        parts = text.split(",")
        if len(parts) != 2:
            raise ValueError("expected 'latitude, longitude'")
        lat = float(parts[0])
        lon = float(parts[1])
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError("not finite")
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ValueError("out of WGS84 bounds")
        return (lat, lon)
    return text


class RegistryReader:
    """Streaming CSV reader yielding UnitRecords in file order.

    Issues, row totals and rejected-row counts accumulate on the reader
    while it is consumed; memory stays bounded by one row.
    """

    def __init__(
        self,
        path: str | Path,
        technology: Technology,
        mapping: ColumnMapping | None = None,
        *,
        delimiter: str = ",",
        encoding: str = "utf-8",
    ):
        self.path = Path(path)
        self.technology = technology
        self.entries = (mapping or default_mapping()).for_technology(technology)
        self.delimiter = delimiter
        self.encoding = encoding
        self.issues: list[ParseIssue] = []
        self.rows_total = 0
        self.rows_rejected = 0

    def __iter__(self) -> Iterator[UnitRecord]:
        with open(self.path, newline="", encoding=self.encoding) as handle:
            reader = csv.reader(handle, delimiter=self.delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestError(f"{self.path}: missing header row") from None
            index = {name: i for i, name in enumerate(header)}
            missing = [e.raw for e in self.entries if e.raw not in index]
            if missing:
                raise IngestError(f"{self.path}: missing mandatory columns: {', '.join(missing)}")
            columns = [(e, index[e.raw]) for e in self.entries]
            width = len(header)

            for line_no, row in enumerate(reader, start=2):
                self.rows_total += 1
                if len(row) != width:
                    self.rows_rejected += 1
                    self.issues.append(
                        ParseIssue(line_no, None, None, f"expected {width} cells, got {len(row)}")
                    )
                    continue
                values: dict = {"technology": self.technology}
                for entry, col in columns:
                    text = row[col].strip()
                    if not text:
                        continue
                    try:
                        values[entry.field] = _parse_cell(entry.field, text, entry.factor)
                    except (ValueError, OverflowError) as exc:
                        self.issues.append(ParseIssue(line_no, entry.field, text, str(exc)))
                mid = values.get("municipality_id")
                if "district_id" not in values and isinstance(mid, str) and len(mid) == 8 and mid.isdigit():
                    values["district_id"] = mid[:5]
                try:
                    yield UnitRecord(**values)
                except ValueError as exc:
                    self.rows_rejected += 1
                    self.issues.append(ParseIssue(line_no, None, None, f"row rejected: {exc}"))


def parse_registry(
    path: str | Path,
    technology: Technology,
    mapping: ColumnMapping | None = None,
    *,
    delimiter: str = ",",
    encoding: str = "utf-8",
) -> ParseResult:
    """Materialize a whole registry table; see RegistryReader for streaming."""
    reader = RegistryReader(path, technology, mapping, delimiter=delimiter, encoding=encoding)
    records = list(reader)
    return ParseResult(records, reader.issues, reader.rows_total, reader.rows_rejected)


def _cell_text(name: str, value, factor: float) -> str:
    if value is None:
        return ""
    if name in _FLOAT_FIELDS:
        return repr(value / factor)
    if name in _DATE_FIELDS:
        return value.isoformat()
    if name in _BOOL_FIELDS:
        return "1" if value else "0"
    if name == "coordinate":
        return f"{value[0]!r}, {value[1]!r}"
    return str(value)


def write_registry_csv(
    records: Iterable[UnitRecord],
    path: str | Path,
    technology: Technology,
    mapping: ColumnMapping | None = None,
    *,
    delimiter: str = ",",
) -> None:
    """Inverse of parse_registry under the same mapping (writes raw columns)."""
    entries = (mapping or default_mapping()).for_technology(technology)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow([e.raw for e in entries])
        for record in records:
            writer.writerow([_cell_text(e.field, getattr(record, e.field), e.factor) for e in entries])


DEFAULT_REGION_KEYS = {"district": "krs", "municipality": "ags"}


def parse_boundaries(
    path: str | Path,
    level: str,
    *,
    region_key: str | None = None,
    name_key: str = "name",
) -> BoundarySet:
    """Load a GeoJSON FeatureCollection of administrative polygons.

    Multipolygon features become multiple polygon parts under one region
    id. Duplicate region ids, missing region keys, unclosed rings and
    non-polygon geometries are fatal.
    """
    if level not in DEFAULT_REGION_KEYS:
        raise IngestError(f"unknown boundary level {level!r}")
    key = region_key or DEFAULT_REGION_KEYS[level]
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("type") != "FeatureCollection":
        raise IngestError(f"{path}: expected a GeoJSON FeatureCollection")

    regions: dict[str, Region] = {}
    for idx, feature in enumerate(payload.get("features", [])):
        props = feature.get("properties") or {}
        if key not in props or props[key] in (None, ""):
            raise IngestError(f"{path}: feature {idx} has no region-key property {key!r}")
        region_id = str(props[key])
        if region_id in regions:
            raise IngestError(f"{path}: duplicate region key {region_id!r} at feature {idx}")
        geometry = feature.get("geometry") or {}
        gtype = geometry.get("type")
        if gtype == "Polygon":
            raw_polys = [geometry["coordinates"]]
        elif gtype == "MultiPolygon":
            raw_polys = geometry["coordinates"]
        else:
            raise IngestError(f"{path}: feature {idx} has unsupported geometry {gtype!r}")
        polygons = []
        for raw_rings in raw_polys:
            rings = []
            for raw_ring in raw_rings:
                ring = tuple((float(pos[1]), float(pos[0])) for pos in raw_ring)
                if len(ring) < 4:
                    raise IngestError(f"{path}: feature {idx} has a ring with fewer than 4 vertices")
                if ring[0] != ring[-1]:
                    raise IngestError(f"{path}: feature {idx} has an unclosed ring")
                rings.append(ring)
            polygons.append(PolygonGeom(outer=rings[0], holes=tuple(rings[1:])))
        name = props.get(name_key) or region_id
        regions[region_id] = Region(region_id=region_id, name=str(name), polygons=tuple(polygons))
    return BoundarySet(level=level, regions=regions)


def write_boundaries_geojson(
    boundary_set: BoundarySet,
    path: str | Path,
    *,
    region_key: str | None = None,
    name_key: str = "name",
) -> None:
    key = region_key or DEFAULT_REGION_KEYS[boundary_set.level]
    features = []
    for region in sorted(boundary_set, key=lambda r: r.region_id):
        coords = [
            [[[lon, lat] for lat, lon in ring] for ring in poly.rings()] for poly in region.polygons
        ]
        if len(coords) == 1:
            geometry = {"type": "Polygon", "coordinates": coords[0]}
        else:
            geometry = {"type": "MultiPolygon", "coordinates": coords}
        features.append(
            {
                "type": "Feature",
                "properties": {key: region.region_id, name_key: region.name},
                "geometry": geometry,
            }
        )
    payload = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")
