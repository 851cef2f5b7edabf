"""Normalized schema for registry units.

One record per registered unit. Common fields are shared by every
technology; technology-specific fields are structurally absent (must be
None) for tables that do not carry them, mirroring the transformed
registry layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from datetime import date
from enum import Enum
from typing import NamedTuple


class Technology(str, Enum):
    BIOMASS = "biomass"
    COMBUSTION = "combustion"
    HYDRO = "hydro"
    SOLAR = "solar"
    STORAGE = "storage"
    WIND = "wind"


TECHNOLOGIES: tuple[Technology, ...] = tuple(Technology)

# Which technology tables carry which specific columns. Anything not listed
# here is a common field present for all technologies.
SPECIFIC_FIELDS: dict[str, frozenset[Technology]] = {
    "power_kw": frozenset({Technology.BIOMASS, Technology.COMBUSTION, Technology.HYDRO, Technology.WIND}),
    "power_gross_kw": frozenset({Technology.SOLAR, Technology.STORAGE}),
    "power_inverter_kw": frozenset({Technology.SOLAR, Technology.STORAGE}),
    "power_net_kw": frozenset({Technology.SOLAR, Technology.STORAGE}),
    "number_of_modules": frozenset({Technology.SOLAR}),
    "unit_type": frozenset({Technology.SOLAR}),
    "area_ha": frozenset({Technology.SOLAR}),
    "orientation": frozenset({Technology.SOLAR}),
    "orientation_secondary": frozenset({Technology.SOLAR}),
    "storage_capacity_kwh": frozenset({Technology.STORAGE}),
    "battery_technology": frozenset({Technology.STORAGE}),
    "hub_height_m": frozenset({Technology.WIND}),
    "rotor_diameter_m": frozenset({Technology.WIND}),
    "position": frozenset({Technology.WIND}),
    "manufacturer": frozenset({Technology.WIND}),
    "type_description": frozenset({Technology.WIND}),
    "combustion_technology": frozenset({Technology.BIOMASS}),
    "fuel_type": frozenset({Technology.BIOMASS}),
    "energy_carrier": frozenset({Technology.COMBUSTION}),
    "plant_type": frozenset({Technology.HYDRO}),
    "type_of_inflow": frozenset({Technology.HYDRO}),
}

# Numeric fields that must be non-negative and finite when present.
_NON_NEGATIVE_FIELDS = (
    "power_kw",
    "power_gross_kw",
    "power_inverter_kw",
    "power_net_kw",
    "storage_capacity_kwh",
    "hub_height_m",
    "rotor_diameter_m",
    "area_ha",
)

_DATE_FIELDS = ("commissioning_date", "planned_commissioning_date", "download_date")


def fields_for(technology: Technology) -> frozenset[str]:
    """Specific fields that exist for a technology's table."""
    return frozenset(name for name, techs in SPECIFIC_FIELDS.items() if technology in techs)


@dataclass(frozen=True, slots=True)
class UnitRecord:
    """One registry unit after transformation to the common data model.

    Immutable; safe to share between workers. Construction enforces the
    structural invariants (field applicability per technology, coordinate
    bounds, non-negative finite quantities). Semantic plausibility is the
    rule engine's job, not the schema's.
    """

    technology: Technology
    unit_id: str | None = None
    owner_id: str | None = None
    operating_status: str | None = None
    grid_operator_inspection: bool | None = None
    commissioning_date: date | None = None
    planned_commissioning_date: date | None = None
    installation_year: int | None = None
    download_date: date | None = None
    zip_code: str | None = None
    municipality: str | None = None
    municipality_id: str | None = None
    district: str | None = None
    district_id: str | None = None
    coordinate: tuple[float, float] | None = None  # (latitude, longitude), WGS84
    unit_name: str | None = None
    # solar / storage
    power_gross_kw: float | None = None
    power_inverter_kw: float | None = None
    power_net_kw: float | None = None
    # biomass / combustion / hydro / wind
    power_kw: float | None = None
    # solar
    number_of_modules: int | None = None
    unit_type: str | None = None
    area_ha: float | None = None
    orientation: str | None = None
    orientation_secondary: str | None = None
    # storage
    storage_capacity_kwh: float | None = None
    battery_technology: str | None = None
    # wind
    hub_height_m: float | None = None
    rotor_diameter_m: float | None = None
    position: str | None = None
    manufacturer: str | None = None
    type_description: str | None = None
    # biomass
    combustion_technology: str | None = None
    fuel_type: str | None = None
    # combustion
    energy_carrier: str | None = None
    # hydro
    plant_type: str | None = None
    type_of_inflow: str | None = None

    def __post_init__(self) -> None:
        tech = self.technology
        if not isinstance(tech, Technology):
            raise ValueError(f"technology must be a Technology, got {tech!r}")
        for name, techs in SPECIFIC_FIELDS.items():
            if tech not in techs and getattr(self, name) is not None:
                raise ValueError(f"field {name!r} does not exist for technology {tech.value!r}")
        for name in _NON_NEGATIVE_FIELDS:
            value = getattr(self, name)
            if value is not None and (not math.isfinite(value) or value < 0):
                raise ValueError(f"field {name!r} must be non-negative and finite, got {value!r}")
        if self.number_of_modules is not None and self.number_of_modules < 0:
            raise ValueError(f"number_of_modules must be >= 0, got {self.number_of_modules!r}")
        if self.coordinate is not None:
            lat, lon = self.coordinate
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise ValueError(f"coordinate must be finite, got {self.coordinate!r}")
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise ValueError(f"coordinate out of WGS84 bounds: {self.coordinate!r}")


# Field names in declaration order, reused by serialization and ingest.
RECORD_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(UnitRecord))


def power_of(record: UnitRecord) -> float | None:
    """Rated power in kW used by range tests and power accumulation.

    Net power for solar and storage units, the plain power column for all
    other technologies. None marks a missing value (flagged by test 1).
    """
    if record.technology is Technology.SOLAR or record.technology is Technology.STORAGE:
        return record.power_net_kw
    return record.power_kw


def record_to_dict(record: UnitRecord) -> dict:
    """JSON-safe dict with None fields omitted; inverse of record_from_dict."""
    out: dict = {}
    for name in RECORD_FIELDS:
        value = getattr(record, name)
        if value is None:
            continue
        if name == "technology":
            value = value.value
        elif name in _DATE_FIELDS:
            value = value.isoformat()
        elif name == "coordinate":
            value = [value[0], value[1]]
        out[name] = value
    return out


def record_from_dict(payload: dict) -> UnitRecord:
    kwargs: dict = {}
    for name, value in payload.items():
        if name not in RECORD_FIELDS:
            raise ValueError(f"unknown record field {name!r}")
        if name == "technology":
            value = Technology(value)
        elif name in _DATE_FIELDS and value is not None:
            value = date.fromisoformat(value)
        elif name == "coordinate" and value is not None:
            value = (float(value[0]), float(value[1]))
        kwargs[name] = value
    return UnitRecord(**kwargs)


class RuleOutcome(NamedTuple):
    """Verdict of one data test applied to one unit."""

    unit_id: str | None
    test_id: int
    passed: bool
    detail: str
    measured: float | None = None
    measured_unit: str | None = None


@dataclass(frozen=True, slots=True)
class FailureRecord:
    """All failed tests of one unit, with the context needed for triage."""

    unit_id: str | None
    technology: Technology
    power_kw: float | None
    district_id: str | None
    municipality_id: str | None
    dso_inspected: bool
    failed: tuple[RuleOutcome, ...]

    @property
    def test_ids(self) -> tuple[int, ...]:
        return tuple(o.test_id for o in self.failed)
