"""Test-catalog behavior: every published example value plus the suite
invariants (matrix conformance, null ownership, determinism, aggregation)."""

import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from registrylint.geo import EARTH_RADIUS_M
from registrylint.model import Technology, UnitRecord
from registrylint.rules import (
    CHECKMARKS,
    MATRIX_CELL_COUNT,
    RuleConfig,
    ConfigError,
    check_area_density,
    check_balcony_power,
    check_gross_vs_net,
    check_hub_height,
    check_id_formats,
    check_installation_year,
    check_inverter_ratio,
    check_inverter_vs_net,
    check_location,
    check_module_power,
    check_power_range,
    check_required_fields,
    check_rotor_power,
    check_unique_ids,
    evaluate_record,
    run_suite,
)
from registrylint.synth import ErrorInjectionSpec, generate_clean, inject_errors

from conftest import example_record
from test_model import records


def lon_offset_deg(distance_m: float, lat: float) -> float:
    return math.degrees(distance_m / (EARTH_RADIUS_M * math.cos(math.radians(lat))))


@pytest.fixture(scope="module")
def cfg() -> RuleConfig:
    return RuleConfig()


class TestRequiredFields:
    def test_missing_municipality_id(self, grid, cfg):
        record = example_record(grid, Technology.BIOMASS, municipality_id="10001000")
        record = replace(record, municipality_id=None)
        outcome = check_required_fields(record, cfg)
        assert not outcome.passed
        assert "municipality_id" in outcome.detail

    def test_fully_populated_passes(self, grid, cfg):
        outcome = check_required_fields(example_record(grid, Technology.WIND), cfg)
        assert outcome.passed

    def test_missing_status_and_power_both_listed(self, grid, cfg):
        record = replace(example_record(grid, Technology.WIND), operating_status=None, power_kw=None)
        outcome = check_required_fields(record, cfg)
        assert not outcome.passed
        assert "operating_status" in outcome.detail
        assert "power" in outcome.detail

    def test_solar_power_means_net_power(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), power_net_kw=None)
        assert not check_required_fields(record, cfg).passed


class TestUniqueIds:
    def _minimal(self, uid):
        return UnitRecord(technology=Technology.WIND, unit_id=uid)

    def test_all_unique_no_failures(self):
        assert check_unique_ids([self._minimal(u) for u in ("A", "B", "C")]) == []

    def test_one_duplicate_two_failures(self):
        outcomes = check_unique_ids([self._minimal(u) for u in ("A", "A", "B")])
        assert len(outcomes) == 2
        assert all(o.unit_id == "A" and o.test_id == 2 and not o.passed for o in outcomes)
        assert outcomes[0].measured == 2.0

    def test_million_unique_ids_single_pass(self):
        stream = (self._minimal(f"SEE9{i:011d}") for i in range(1_000_000))
        assert check_unique_ids(stream) == []


class TestPowerOrdering:
    def test_example_values_pass(self, grid):
        record = example_record(grid, Technology.SOLAR)  # gross 5, inverter 10, net 5
        assert check_gross_vs_net(record).passed
        assert check_inverter_vs_net(record).passed

    def test_inverter_below_net_fails_test_4(self, grid):
        record = replace(example_record(grid, Technology.STORAGE), power_inverter_kw=4.0)
        outcome = check_inverter_vs_net(record)
        assert not outcome.passed
        assert outcome.test_id == 4
        assert check_gross_vs_net(record).passed

    def test_equal_gross_and_net_passes(self, grid):
        record = replace(example_record(grid, Technology.SOLAR), power_gross_kw=5.0, power_net_kw=5.0)
        assert check_gross_vs_net(record).passed

    def test_nulls_are_vacuous(self, grid):
        record = replace(example_record(grid, Technology.SOLAR), power_gross_kw=None)
        assert check_gross_vs_net(record).passed


class TestIdFormats:
    def test_example_ids_pass(self, grid, cfg):
        assert check_id_formats(example_record(grid, Technology.SOLAR), cfg).passed

    def test_four_digit_zip_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), zip_code="1729")
        outcome = check_id_formats(record, cfg)
        assert not outcome.passed
        assert "zip_code" in outcome.detail

    def test_lowercase_unit_id_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), unit_id="see900002935310")
        outcome = check_id_formats(record, cfg)
        assert not outcome.passed
        assert "unit_id" in outcome.detail

    def test_null_fields_skip_their_subcheck(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), zip_code=None)
        assert check_id_formats(record, cfg).passed


class TestModulePower:
    def test_8_modules_at_5kw_pass(self, grid, cfg):
        outcome = check_module_power(example_record(grid, Technology.SOLAR), cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(625.0, rel=1e-12)

    def test_single_placeholder_module_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), number_of_modules=1)
        outcome = check_module_power(record, cfg)
        assert not outcome.passed
        assert outcome.measured == pytest.approx(5000.0, rel=1e-12)

    def test_single_balcony_module_passes(self, grid, cfg):
        record = replace(
            example_record(grid, Technology.SOLAR), power_gross_kw=0.35, number_of_modules=1
        )
        outcome = check_module_power(record, cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(350.0, rel=1e-12)

    def test_zero_modules_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), number_of_modules=0)
        outcome = check_module_power(record, cfg)
        assert not outcome.passed
        assert outcome.detail == "zero modules"

    @pytest.mark.parametrize("per_module_w,expected", [(50.0, True), (700.0, True), (49.9, False), (700.1, False)])
    def test_inclusive_bounds(self, grid, cfg, per_module_w, expected):
        record = replace(
            example_record(grid, Technology.SOLAR),
            power_gross_kw=per_module_w / 1000.0,
            number_of_modules=1,
        )
        assert check_module_power(record, cfg).passed is expected


class TestInverterRatio:
    def test_ratio_2_passes(self, grid, cfg):
        outcome = check_inverter_ratio(example_record(grid, Technology.SOLAR), cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(2.0, rel=1e-12)

    def test_magnitude_mixup_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), power_inverter_kw=5000.0)
        outcome = check_inverter_ratio(record, cfg)
        assert not outcome.passed
        assert outcome.measured == pytest.approx(1000.0, rel=1e-12)

    def test_equal_powers_pass(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), power_inverter_kw=5.0)
        outcome = check_inverter_ratio(record, cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(1.0, rel=1e-12)

    def test_zero_power_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.STORAGE), power_inverter_kw=0.0)
        outcome = check_inverter_ratio(record, cfg)
        assert not outcome.passed
        assert outcome.detail == "zero power"

    def test_factor_20_exactly_fails(self, grid, cfg):
        record = replace(
            example_record(grid, Technology.SOLAR), power_gross_kw=5.0, power_inverter_kw=100.0
        )
        assert not check_inverter_ratio(record, cfg).passed

    @settings(max_examples=60, deadline=None)
    @given(
        gross=st.floats(min_value=1e-3, max_value=1e5, allow_nan=False),
        inverter=st.floats(min_value=1e-3, max_value=1e5, allow_nan=False),
        scale=st.floats(min_value=1e-6, max_value=1e6, allow_nan=False),
    )
    def test_scale_invariance(self, grid, cfg, gross, inverter, scale):
        base = replace(
            example_record(grid, Technology.SOLAR), power_gross_kw=gross, power_inverter_kw=inverter
        )
        scaled = replace(base, power_gross_kw=gross * scale, power_inverter_kw=inverter * scale)
        assert check_inverter_ratio(base, cfg).passed == check_inverter_ratio(scaled, cfg).passed


class TestAreaDensity:
    def _ground(self, grid, gross_kw, area_ha):
        return replace(
            example_record(grid, Technology.SOLAR),
            unit_type="Freifläche",
            power_gross_kw=gross_kw,
            area_ha=area_ha,
        )

    def test_mid_range_passes(self, grid, cfg):
        outcome = check_area_density(self._ground(grid, 1000.0, 1.0), cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(1.0, rel=1e-12)

    def test_wrong_unit_area_fails(self, grid, cfg):
        outcome = check_area_density(self._ground(grid, 750.0, 0.01), cfg)
        assert not outcome.passed
        assert outcome.measured == pytest.approx(75.0, rel=1e-12)

    def test_lower_bound_inclusive(self, grid, cfg):
        outcome = check_area_density(self._ground(grid, 50.0, 1.0), cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(0.05, rel=1e-12)

    def test_zero_area_fails(self, grid, cfg):
        outcome = check_area_density(self._ground(grid, 50.0, 0.0), cfg)
        assert not outcome.passed
        assert outcome.detail == "non-positive area"

    def test_rooftop_is_exempt(self, grid, cfg):
        record = replace(
            example_record(grid, Technology.SOLAR), unit_type="Gebäude", area_ha=None
        )
        assert check_area_density(record, cfg).passed


class TestRotorPower:
    def test_example_turbine_passes(self, grid, cfg):
        outcome = check_rotor_power(example_record(grid, Technology.WIND), cfg)
        assert outcome.passed
        expected = 2000.0 * 1000.0 / (math.pi * 41.0**2)
        assert outcome.measured == pytest.approx(expected, rel=1e-12)
        assert outcome.measured == pytest.approx(378.7, abs=0.05)

    def test_tiny_rotor_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.WIND), rotor_diameter_m=20.0)
        outcome = check_rotor_power(record, cfg)
        assert not outcome.passed
        assert outcome.measured == pytest.approx(2000.0 * 1000.0 / (math.pi * 100.0), rel=1e-12)

    def test_lower_bound_region_passes(self, grid, cfg):
        record = replace(example_record(grid, Technology.WIND), power_kw=845.0)
        outcome = check_rotor_power(record, cfg)
        assert outcome.passed
        assert outcome.measured == pytest.approx(160.0, abs=0.05)

    def test_non_positive_diameter_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.WIND), rotor_diameter_m=0.0)
        outcome = check_rotor_power(record, cfg)
        assert not outcome.passed
        assert outcome.detail == "non-positive rotor diameter"


class TestLocation:
    def test_inside_registered_regions_passes(self, grid, indexed_grid, cfg):
        districts, municipalities = indexed_grid
        record = example_record(grid, Technology.WIND)
        out10, out11 = check_location(record, districts, municipalities, cfg)
        assert out10.passed and out11.passed

    def test_just_outside_municipality_within_buffer(self, grid, indexed_grid, cfg):
        districts, municipalities = indexed_grid
        # Municipality 10001000 spans lon 10.0-10.25 inside district 10001
        # (lon 10.0-10.5): 1.2 km east of the shared-muni edge stays in the
        # district's interior and within the municipality buffer.
        lat = 48.1
        lon = 10.25 + lon_offset_deg(1200.0, lat)
        record = example_record(grid, Technology.WIND, municipality_id="10001000")
        record = replace(record, coordinate=(lat, lon))
        out10, out11 = check_location(record, districts, municipalities, cfg)
        assert out10.passed
        assert out11.passed

    def test_30km_away_fails_with_measured_distance(self, grid, indexed_grid, cfg):
        districts, municipalities = indexed_grid
        lat = 48.25
        lon = 10.5 + lon_offset_deg(30_000.0, lat)
        record = example_record(grid, Technology.WIND, municipality_id="10001000")
        record = replace(record, coordinate=(lat, lon))
        out10, out11 = check_location(record, districts, municipalities, cfg)
        assert not out10.passed
        assert out10.measured == pytest.approx(30_000.0, rel=5e-3)
        assert not out11.passed

    def test_unknown_region_key_fails(self, grid, indexed_grid, cfg):
        districts, municipalities = indexed_grid
        record = example_record(grid, Technology.WIND)
        record = replace(record, municipality_id="99999999")
        _, out11 = check_location(record, districts, municipalities, cfg)
        assert not out11.passed
        assert "unknown region key" in out11.detail
        assert out11.measured is None

    def test_nulls_are_vacuous(self, grid, indexed_grid, cfg):
        districts, municipalities = indexed_grid
        record = replace(example_record(grid, Technology.WIND), coordinate=None)
        out10, out11 = check_location(record, districts, municipalities, cfg)
        assert out10.passed and out11.passed


class TestPowerRange:
    def test_wind_at_22mw_passes(self, grid, cfg):
        record = replace(example_record(grid, Technology.WIND), power_kw=22_000.0)
        assert check_power_range(record, cfg).passed

    def test_wind_at_25mw_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.WIND), power_kw=25_000.0)
        outcome = check_power_range(record, cfg)
        assert not outcome.passed
        assert outcome.measured == 25_000.0

    def test_zero_power_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.SOLAR), power_net_kw=0.0)
        assert not check_power_range(record, cfg).passed

    @pytest.mark.parametrize(
        "technology,max_mw",
        [
            (Technology.BIOMASS, 150.0),
            (Technology.COMBUSTION, 2000.0),
            (Technology.HYDRO, 1500.0),
            (Technology.SOLAR, 500.0),
            (Technology.STORAGE, 800.0),
            (Technology.WIND, 22.0),
        ],
    )
    def test_upper_bounds_inclusive(self, grid, cfg, technology, max_mw):
        field = "power_net_kw" if technology in (Technology.SOLAR, Technology.STORAGE) else "power_kw"
        at_bound = replace(example_record(grid, technology), **{field: max_mw * 1000.0})
        above = replace(example_record(grid, technology), **{field: max_mw * 1000.0 + 1.0})
        assert check_power_range(at_bound, cfg).passed
        assert not check_power_range(above, cfg).passed


class TestInstallationYear:
    def test_solar_2017_passes(self, grid, cfg):
        assert check_installation_year(example_record(grid, Technology.SOLAR), cfg).passed

    def test_storage_1923_fails(self, grid, cfg):
        record = replace(example_record(grid, Technology.STORAGE), installation_year=1923)
        outcome = check_installation_year(record, cfg)
        assert not outcome.passed
        assert outcome.measured == 1923.0

    def test_hydro_1923_passes(self, grid, cfg):
        record = replace(example_record(grid, Technology.HYDRO), installation_year=1923)
        assert check_installation_year(record, cfg).passed

    @pytest.mark.parametrize("year,expected", [(1980, True), (2030, True), (1979, False), (2031, False)])
    def test_wind_bounds_inclusive(self, grid, cfg, year, expected):
        record = replace(example_record(grid, Technology.WIND), installation_year=year)
        assert check_installation_year(record, cfg).passed is expected


class TestHubHeight:
    def test_example_turbine_passes(self, grid):
        assert check_hub_height(example_record(grid, Technology.WIND)).passed

    def test_hub_below_radius_fails(self, grid):
        record = replace(example_record(grid, Technology.WIND), hub_height_m=30.0)
        outcome = check_hub_height(record)
        assert not outcome.passed
        assert "rotor radius 41" in outcome.detail

    def test_hub_equal_to_radius_passes(self, grid):
        record = replace(example_record(grid, Technology.WIND), hub_height_m=41.0)
        assert check_hub_height(record).passed


class TestBalconyPower:
    def _balcony(self, grid, net_kw, **overrides):
        return replace(
            example_record(grid, Technology.SOLAR),
            unit_type="Balkonkraftwerk",
            area_ha=None,
            power_net_kw=net_kw,
            power_gross_kw=net_kw,
            power_inverter_kw=net_kw,
            **overrides,
        )

    def test_legal_balcony_passes(self, grid, cfg):
        assert check_balcony_power(self._balcony(grid, 0.6), cfg).passed

    def test_overpowered_balcony_fails(self, grid, cfg):
        outcome = check_balcony_power(self._balcony(grid, 1.3), cfg)
        assert not outcome.passed
        assert outcome.measured == 1.3

    def test_tolerance_bound_passes(self, grid, cfg):
        assert check_balcony_power(self._balcony(grid, 1.2), cfg).passed

    def test_balcony_named_unit_over_5kw_fails(self, grid, cfg):
        record = replace(
            example_record(grid, Technology.SOLAR),
            unit_name="Balkonkraftwerk Müller",
            power_net_kw=6.0,
            power_gross_kw=6.0,
            power_inverter_kw=6.0,
        )
        outcome = check_balcony_power(record, cfg)
        assert not outcome.passed
        assert "balcony-named" in outcome.detail

    def test_keyword_match_is_case_insensitive(self, grid, cfg):
        record = replace(
            example_record(grid, Technology.SOLAR),
            unit_name="BALKON Süd",
            power_net_kw=6.0,
            power_gross_kw=6.0,
            power_inverter_kw=6.0,
        )
        assert not check_balcony_power(record, cfg).passed


class TestConfig:
    def test_invalid_ranges_rejected(self):
        with pytest.raises(ConfigError):
            RuleConfig(module_power_range_w=(700.0, 50.0))
        with pytest.raises(ConfigError):
            RuleConfig(inverter_ratio_factor=1.0)
        with pytest.raises(ConfigError):
            RuleConfig(buffer_m=-1.0)

    def test_from_dict_overrides(self):
        cfg = RuleConfig.from_dict(
            {"buffer_m": 2000.0, "power_range_mw": {"wind": [0, 30]}, "year_min": {"hydro": 1850}}
        )
        assert cfg.buffer_m == 2000.0
        assert cfg.power_range_mw[Technology.WIND] == (0, 30)
        assert cfg.power_range_mw[Technology.SOLAR] == (0.0, 500.0)
        assert cfg.year_min[Technology.HYDRO] == 1850

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown rule config key"):
            RuleConfig.from_dict({"buffer": 10})


class TestMatrix:
    def test_full_grid_spans_90_cells(self):
        assert MATRIX_CELL_COUNT == 90
        assert sum(len(techs) for techs in CHECKMARKS.values()) == 53

    def test_checkmarks_match_published_matrix(self):
        all_techs = set(Technology)
        assert CHECKMARKS[1] == CHECKMARKS[2] == CHECKMARKS[5] == frozenset(all_techs)
        assert CHECKMARKS[10] == CHECKMARKS[11] == CHECKMARKS[12] == CHECKMARKS[13] == frozenset(all_techs)
        pair = frozenset({Technology.SOLAR, Technology.STORAGE})
        assert CHECKMARKS[3] == CHECKMARKS[4] == CHECKMARKS[7] == pair
        solar_only = frozenset({Technology.SOLAR})
        assert CHECKMARKS[6] == CHECKMARKS[8] == CHECKMARKS[15] == solar_only
        wind_only = frozenset({Technology.WIND})
        assert CHECKMARKS[9] == CHECKMARKS[14] == wind_only

    def test_evaluate_record_respects_checkmarks(self, grid, indexed_grid, config):
        districts, municipalities = indexed_grid
        for tech in Technology:
            outcomes = evaluate_record(example_record(grid, tech), config, districts, municipalities)
            applied = {o.test_id for o in outcomes}
            expected = {tid for tid, techs in CHECKMARKS.items() if tech in techs} - {2}
            assert applied == expected

    def test_storage_never_sees_solar_or_wind_tests(self, grid, indexed_grid, config):
        districts, municipalities = indexed_grid
        outcomes = evaluate_record(
            example_record(grid, Technology.STORAGE), config, districts, municipalities
        )
        assert {o.test_id for o in outcomes}.isdisjoint({6, 8, 9, 14, 15})


class TestRunSuite:
    def test_example_rows_all_pass(self, grid, example_records, config):
        result = run_suite(list(example_records.values()), grid, config)
        assert result.failures == []
        assert result.total_records == 6

    def test_multi_test_failure_aggregates_into_one_record(self, grid, config):
        bad = replace(
            example_record(grid, Technology.SOLAR),
            number_of_modules=1,  # test 6: 5000 W per module
            power_inverter_kw=5000.0,  # test 7: ratio 1000
        )
        result = run_suite([bad], grid, config)
        (failure,) = result.failures
        assert failure.test_ids == (6, 7)

    def test_duplicate_ids_merge_with_other_failures(self, grid, config):
        a = example_record(grid, Technology.WIND)
        b = replace(example_record(grid, Technology.WIND), hub_height_m=10.0)
        b = replace(b, unit_id=a.unit_id)
        result = run_suite([a, b], grid, config)
        assert len(result.failures) == 2
        assert result.failures[0].test_ids == (2,)
        assert result.failures[1].test_ids == (2, 14)

    def test_deterministic_and_worker_independent(self, grid, config):
        records_in = []
        for tech in Technology:
            records_in.extend(generate_clean(tech, 120, 21, grid))
        spec = ErrorInjectionSpec(rates={"magnitude_mixup": 10, "zip_malformed": 5, "duplicate_id": 3})
        mutated, _ = inject_errors(records_in, spec, 21, boundaries=grid)
        first = run_suite(mutated, grid, config)
        second = run_suite(mutated, grid, config)
        assert first.failures == second.failures
        assert first.failure_tally == second.failure_tally
        parallel = run_suite(mutated, grid, config, jobs=2, chunk_size=64)
        assert parallel.failures == first.failures
        assert parallel.records_total == first.records_total

    def test_suite_equals_union_of_independent_results(self, grid, indexed_grid, config):
        districts, municipalities = indexed_grid
        records_in = []
        for tech in Technology:
            records_in.extend(generate_clean(tech, 80, 5, grid))
        spec = ErrorInjectionSpec(
            rates={
                "magnitude_mixup": 6,
                "null_required_field": 6,
                "duplicate_id": 2,
                "implausible_year": 6,
                "coordinate_displacement": 4,
                "zip_malformed": 4,
            }
        )
        mutated, _ = inject_errors(records_in, spec, 9, boundaries=grid)
        suite = run_suite(mutated, grid, config)
        suite_map = {}
        for fr in suite.failures:
            suite_map.setdefault(fr.unit_id, []).extend(fr.failed)

        independent = {}
        for record in mutated:
            failed = [
                o
                for o in evaluate_record(record, config, districts, municipalities)
                if not o.passed
            ]
            if failed:
                independent.setdefault(record.unit_id, []).extend(failed)
        for outcome in check_unique_ids(mutated):
            independent.setdefault(outcome.unit_id, []).append(outcome)

        assert set(suite_map) == set(independent)
        for uid, outcomes in independent.items():
            assert sorted(suite_map[uid], key=lambda o: o.test_id) == sorted(
                outcomes, key=lambda o: o.test_id
            )

    def test_suite_without_boundaries_skips_location_tests(self, grid, config):
        record = replace(example_record(grid, Technology.WIND), coordinate=(0.0, 0.0))
        result = run_suite([record], None, config)
        assert result.failures == []
        assert 10 not in result.evaluated_tests
        assert 11 not in result.evaluated_tests

    def test_evaluated_counts_follow_matrix(self, grid, example_records, config):
        result = run_suite(list(example_records.values()), grid, config)
        counts = result.evaluated_counts()
        assert all(tech in CHECKMARKS[tid] for tid, tech in counts)
        assert counts[(1, Technology.WIND)] == 1
        assert (6, Technology.WIND) not in counts

    @settings(max_examples=120, deadline=None)
    @given(record=records())
    def test_null_ownership_no_crashes(self, config, record):
        outcomes = evaluate_record(record, config)
        failing = {o.test_id for o in outcomes if not o.passed}
        required_null = (
            record.unit_id is None
            or record.municipality_id is None
            or record.operating_status is None
            or (
                record.power_net_kw is None
                if record.technology in (Technology.SOLAR, Technology.STORAGE)
                else record.power_kw is None
            )
        )
        assert required_null == (1 in failing)
