"""Generator and error-injector tests."""

import math
import re

import pytest

from registrylint.model import Technology, power_of
from registrylint.rules import RuleConfig, run_suite
from registrylint.synth import (
    ERROR_CLASSES,
    ErrorInjectionSpec,
    GroundTruth,
    SynthError,
    generate_clean,
    inject_errors,
    make_boundary_grid,
)

from geo_oracle import oracle_boundary_distance_m, oracle_point_in_region


class TestBoundaryGrid:
    def test_municipality_keys_nest_in_district_keys(self):
        grid = make_boundary_grid(2, 2)
        assert len(grid.districts.regions) == 4
        assert len(grid.municipalities.regions) == 16
        for muni_id in grid.municipalities.regions:
            assert len(muni_id) == 8
            assert muni_id[:5] in grid.districts.regions

    def test_sized_grid(self):
        grid = make_boundary_grid(5, 4, munis_per_side=3)
        assert len(grid.districts.regions) == 20
        assert len(grid.municipalities.regions) == 180


class TestGenerateClean:
    def test_seed_determinism(self, grid):
        first = generate_clean(Technology.WIND, 100, 42, grid)
        second = generate_clean(Technology.WIND, 100, 42, grid)
        assert first == second
        other_seed = generate_clean(Technology.WIND, 100, 43, grid)
        assert first != other_seed

    def test_zero_records(self, grid):
        assert generate_clean(Technology.SOLAR, 0, 1, grid) == []

    def test_negative_count_rejected(self, grid):
        with pytest.raises(SynthError):
            generate_clean(Technology.SOLAR, -1, 1, grid)

    @pytest.mark.parametrize("technology", list(Technology))
    def test_clean_tables_pass_the_suite(self, grid, config, technology):
        records = generate_clean(technology, 150, 4, grid)
        result = run_suite(records, grid, config)
        assert result.failures == []

    def test_hand_check_of_sampled_wind_records(self, grid):
        """Field-level spot check with arithmetic independent of the rules."""
        records = generate_clean(Technology.WIND, 50, 8, grid)
        for record in records[::10]:  # five samples
            assert re.fullmatch(r"[A-Z]{3}\d{12}", record.unit_id)
            assert re.fullmatch(r"\d{8}", record.municipality_id)
            assert re.fullmatch(r"\d{5}", record.zip_code)
            specific = record.power_kw * 1000.0 / (math.pi * (record.rotor_diameter_m / 2.0) ** 2)
            assert 160.0 <= specific <= 700.0
            assert record.hub_height_m >= record.rotor_diameter_m / 2.0
            assert 1980 <= record.installation_year <= 2030
            assert 0.0 < record.power_kw <= 22_000.0
            muni = grid.municipalities.regions[record.municipality_id]
            lat, lon = record.coordinate
            assert oracle_point_in_region(lat, lon, muni)
            assert oracle_boundary_distance_m(lat, lon, muni) > 1500.0

    def test_coordinates_keep_margin_above_buffer(self, grid):
        records = generate_clean(Technology.BIOMASS, 60, 12, grid)
        for record in records[:10]:
            muni = grid.municipalities.regions[record.municipality_id]
            lat, lon = record.coordinate
            assert oracle_boundary_distance_m(lat, lon, muni) >= 2000.0


class TestInjectionSpec:
    def test_unknown_class_rejected(self):
        with pytest.raises(SynthError, match="unknown error class"):
            ErrorInjectionSpec(rates={"gremlins": 1})

    def test_probability_bounds(self):
        with pytest.raises(SynthError, match="within"):
            ErrorInjectionSpec(rates={"zip_malformed": 1.5})

    def test_counts_from_probability(self):
        spec = ErrorInjectionSpec(rates={"zip_malformed": 0.05})
        assert spec.count_for("zip_malformed", 1000) == 50

    def test_uniform_split_covers_applicable_classes(self):
        spec = ErrorInjectionSpec.uniform(0.05, Technology.WIND, 1000)
        assert set(spec.rates) <= set(ERROR_CLASSES)
        assert "balcony_overpower" not in spec.rates
        assert "hub_rotor_swap" in spec.rates


class TestInjectErrors:
    def test_determinism(self, grid):
        records = generate_clean(Technology.STORAGE, 200, 3, grid)
        spec = ErrorInjectionSpec(rates={"magnitude_mixup": 5, "implausible_year": 5})
        first = inject_errors(records, spec, 11, boundaries=grid)
        second = inject_errors(records, spec, 11, boundaries=grid)
        assert first[0] == second[0]
        assert first[1].expected == second[1].expected

    def test_magnitude_mixup_expected_tests(self, grid):
        records = generate_clean(Technology.SOLAR, 120, 6, grid)
        spec = ErrorInjectionSpec(rates={"magnitude_mixup": 10})
        mutated, truth = inject_errors(records, spec, 2, boundaries=grid)
        assert len(truth.expected) == 10
        for tests in truth.expected.values():
            assert 7 in tests
            assert tests <= {4, 7}

    def test_duplicate_pair_expected(self, grid):
        records = generate_clean(Technology.HYDRO, 50, 6, grid)
        spec = ErrorInjectionSpec(rates={"duplicate_id": 1})
        mutated, truth = inject_errors(records, spec, 2, boundaries=grid)
        ((uid, tests),) = truth.expected.items()
        assert tests == {2}
        assert sum(1 for r in mutated if r.unit_id == uid) == 2

    def test_displacement_expected_location_tests(self, grid):
        records = generate_clean(Technology.WIND, 80, 6, grid)
        spec = ErrorInjectionSpec(rates={"coordinate_displacement": 8}, displacement_km=10.0)
        mutated, truth = inject_errors(records, spec, 3, boundaries=grid)
        for tests in truth.expected.values():
            assert 11 in tests
            assert tests <= {10, 11}
        by_id = {r.unit_id: r for r in mutated}
        for uid in truth.expected:
            record = by_id[uid]
            muni = grid.municipalities.regions[record.municipality_id]
            lat, lon = record.coordinate
            assert not oracle_point_in_region(lat, lon, muni)
            assert oracle_boundary_distance_m(lat, lon, muni) >= 10_000.0 * 0.999

    def test_untouched_units_stay_identical(self, grid):
        records = generate_clean(Technology.BIOMASS, 100, 5, grid)
        spec = ErrorInjectionSpec(rates={"zip_malformed": 5})
        mutated, truth = inject_errors(records, spec, 4, boundaries=grid)
        touched = set(truth.expected)
        for before, after in zip(records, mutated):
            if after.unit_id in touched:
                assert before != after
            else:
                assert before == after

    def test_more_targets_than_records_is_an_error(self, grid):
        records = generate_clean(Technology.WIND, 10, 5, grid)
        with pytest.raises(SynthError, match="eligible"):
            inject_errors(records, ErrorInjectionSpec(rates={"zip_malformed": 11}), 1, boundaries=grid)

    def test_each_unit_gets_at_most_one_class(self, grid):
        records = generate_clean(Technology.WIND, 60, 5, grid)
        spec = ErrorInjectionSpec(
            rates={"zip_malformed": 20, "implausible_year": 20, "hub_rotor_swap": 20}
        )
        mutated, truth = inject_errors(records, spec, 1, boundaries=grid)
        assert len(truth.expected) == 60

    def test_displacement_must_exceed_buffer(self, grid):
        records = generate_clean(Technology.WIND, 10, 5, grid)
        spec = ErrorInjectionSpec(rates={"coordinate_displacement": 1}, displacement_km=1.0)
        with pytest.raises(SynthError, match="buffer"):
            inject_errors(records, spec, 1, boundaries=grid, config=RuleConfig())

    def test_injected_errors_detected_with_exact_recall(self, grid, config):
        for technology in (Technology.SOLAR, Technology.WIND):
            records = generate_clean(technology, 300, 9, grid)
            spec = ErrorInjectionSpec.uniform(0.06, technology, len(records))
            mutated, truth = inject_errors(records, spec, 9, boundaries=grid)
            result = run_suite(mutated, grid, config)
            flagged: dict = {}
            for fr in result.failures:
                flagged.setdefault(fr.unit_id, set()).update(fr.test_ids)
            for uid, expected in truth.expected.items():
                assert expected <= flagged.get(uid, set())
            for uid in flagged:
                assert uid in truth.expected


class TestGroundTruth:
    def test_json_round_trip(self, grid):
        records = generate_clean(Technology.SOLAR, 80, 2, grid)
        spec = ErrorInjectionSpec(rates={"placeholder_modules": 4, "balcony_overpower": 3})
        _, truth = inject_errors(records, spec, 5, boundaries=grid)
        again = GroundTruth.from_json_dict(truth.to_json_dict())
        assert again.expected == truth.expected
        assert again.class_counts == truth.class_counts
        assert again.seed == truth.seed

    def test_power_accumulation_helper_consistency(self, grid):
        records = generate_clean(Technology.WIND, 20, 2, grid)
        assert all(power_of(r) == r.power_kw for r in records)
