"""Shared fixtures: boundary grids and consistent per-technology records."""

from datetime import date

import pytest

from registrylint.model import Technology, UnitRecord
from registrylint.rules import Boundaries, IndexedBoundaries, RuleConfig
from registrylint.synth import make_boundary_grid

# One municipality per technology so example records can carry coordinates
# inside their registered regions (grid origin 48N 10E, 0.5 deg districts).
_MUNI_FOR = {
    Technology.BIOMASS: "10001000",
    Technology.COMBUSTION: "10001001",
    Technology.HYDRO: "10001002",
    Technology.SOLAR: "10001003",
    Technology.STORAGE: "10002000",
    Technology.WIND: "10002001",
}


@pytest.fixture(scope="session")
def grid() -> Boundaries:
    return make_boundary_grid()


@pytest.fixture(scope="session")
def indexed_grid(grid) -> tuple[IndexedBoundaries, IndexedBoundaries]:
    return (
        IndexedBoundaries.build(grid.districts),
        IndexedBoundaries.build(grid.municipalities),
    )


@pytest.fixture(scope="session")
def config() -> RuleConfig:
    return RuleConfig()


def _muni_center(grid: Boundaries, muni_id: str) -> tuple[float, float]:
    minlat, minlon, maxlat, maxlon = grid.municipalities.regions[muni_id].bbox()
    return ((minlat + maxlat) / 2.0, (minlon + maxlon) / 2.0)


def example_record(grid: Boundaries, technology: Technology, **overrides) -> UnitRecord:
    """A record built from the published example column, consistent enough
    to pass every test (coordinates land inside the registered region)."""
    muni_id = overrides.pop("municipality_id", _MUNI_FOR[technology])
    common = dict(
        technology=technology,
        owner_id="ABR989393706204",
        operating_status="In Betrieb",
        grid_operator_inspection=True,
        commissioning_date=date(2001, 12, 21),
        installation_year=2017,
        download_date=date(2024, 3, 12),
        zip_code="17291",
        municipality="Bad Wünnenberg",
        municipality_id=muni_id,
        district="Nordfriesland",
        district_id=muni_id[:5],
        coordinate=_muni_center(grid, muni_id),
    )
    specific = {
        Technology.BIOMASS: dict(
            unit_id="SEE900002935310",
            power_kw=2000.0,
            combustion_technology="Verbrennungsmotor",
            fuel_type="Gasförmige Biomasse",
        ),
        Technology.COMBUSTION: dict(
            unit_id="SEE900002935311", power_kw=2000.0, energy_carrier="Erdgas"
        ),
        Technology.HYDRO: dict(
            unit_id="SEE900002935312",
            power_kw=2000.0,
            plant_type="Laufwasseranlage",
            type_of_inflow="Flusskraftwerk",
        ),
        Technology.SOLAR: dict(
            unit_id="SEE900002935313",
            power_gross_kw=5.0,
            power_inverter_kw=10.0,
            power_net_kw=5.0,
            number_of_modules=8,
            unit_type="Freifläche",
            area_ha=0.01,
            orientation="Süd",
            orientation_secondary="West",
        ),
        Technology.STORAGE: dict(
            unit_id="SEE900002935314",
            power_gross_kw=5.0,
            power_inverter_kw=10.0,
            power_net_kw=5.0,
            storage_capacity_kwh=10.0,
            battery_technology="Lithium-Batterie",
        ),
        Technology.WIND: dict(
            unit_id="SEE900002935315",
            power_kw=2000.0,
            hub_height_m=65.0,
            rotor_diameter_m=82.0,
            position="Windkraft an Land",
            manufacturer="ENERCON GmbH",
            type_description="E-70 E4",
        ),
    }[technology]
    return UnitRecord(**{**common, **specific, **overrides})


@pytest.fixture(scope="session")
def example_records(grid) -> dict[Technology, UnitRecord]:
    return {tech: example_record(grid, tech) for tech in Technology}
