import json
from dataclasses import replace

import numpy as np
import pytest

import cssid
from cssid import DimensionError, InputSpec, NoiseSpec, StateSpaceModel
from cssid.simulator import (
    load_scenario,
    load_trajectory_csv,
    save_scenario,
    save_trajectory_csv,
    scenario_from_dict,
    scenario_to_dict,
)


class TestSimulate:
    def test_noise_free_mass_is_conserved(self):
        spec = cssid.scenario_compartmental_ti()
        traj = cssid.simulate(spec.model, [1.0, 1.0, 1.0],
                              NoiseSpec(0.0, 0.0, seed=1), N=1000)
        assert np.max(np.abs(traj.x.sum(axis=1) - 3.0)) <= 1e-10

    def test_process_noise_respects_constraint(self):
        # noise enters through G with SG = 0, so the state never leaves the plane
        spec = cssid.scenario_compartmental_ti()
        traj = cssid.simulate(spec.model, [1.0, 1.0, 1.0],
                              NoiseSpec(1.0, 0.0, seed=2), N=1000)
        assert np.max(np.abs(traj.x.sum(axis=1) - 3.0)) <= 1e-10

    def test_identity_holds_state(self):
        model = StateSpaceModel(np.eye(3), np.zeros((3, 0)), np.zeros((3, 1)))
        traj = cssid.simulate(model, [1.0, 2.0, 3.0], NoiseSpec(0.0, 0.0, seed=3), N=20)
        np.testing.assert_array_equal(traj.x, np.tile([1.0, 2.0, 3.0], (21, 1)))

    def test_deterministic_given_seed(self):
        spec = cssid.scenario_compartmental_ti()
        a = cssid.simulate_scenario(spec, seed=99)
        b = cssid.simulate_scenario(spec, seed=99)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)

    def test_noise_free_record_shares_inputs_with_noisy_one(self):
        spec = cssid.scenario_forest(N=50)
        noisy = cssid.simulate_scenario(spec, seed=5)
        clean = cssid.simulate_scenario(spec, seed=5, with_noise=False)
        np.testing.assert_array_equal(noisy.u, clean.u)

    def test_measured_outputs_violate_constraint(self):
        spec = cssid.scenario_compartmental_ti(N=2000)
        traj = cssid.simulate_scenario(spec, seed=11)
        violations = traj.y.sum(axis=1) - 3.0
        expected = spec.sigma_v * np.linalg.norm(spec.constraint.S)
        assert abs(violations.std() - expected) <= 0.2 * expected

    def test_switching_schedule(self):
        spec = cssid.scenario_compartmental_tv(window=50)
        traj = cssid.simulate_scenario(spec)
        assert traj.mode_schedule == [(0, 0), (50, 1), (100, 2)]
        assert traj.mode_at(0) == 0
        assert traj.mode_at(50) == 1
        assert traj.mode_at(149) == 2

    def test_dimension_errors(self):
        spec = cssid.scenario_compartmental_ti()
        with pytest.raises(DimensionError):
            cssid.simulate(spec.model, [1.0, 1.0], NoiseSpec(0.0, 0.0, seed=1), N=5)
        forest = cssid.scenario_forest()
        with pytest.raises(DimensionError):
            cssid.simulate(forest.model, forest.x0_id, NoiseSpec(0.0, 0.0, seed=1), N=5)

    def test_mode_windows_must_sum_to_n(self):
        spec = cssid.scenario_compartmental_tv()
        with pytest.raises(ValueError):
            cssid.simulate(spec.modes, spec.x0_id, NoiseSpec(0.0, 0.0, seed=1),
                           N=100, mode_windows=[10, 10, 10])


class TestCompartmentalTI:
    def test_columns_sum_to_one(self):
        spec = cssid.scenario_compartmental_ti()
        S = spec.constraint.S
        assert np.max(np.abs(S @ spec.model.A - S)) <= 1e-12

    def test_noise_matrix_columns_sum_to_zero(self):
        spec = cssid.scenario_compartmental_ti()
        assert np.max(np.abs(spec.model.G.sum(axis=0))) <= 1e-12

    def test_validation_start_is_on_plane(self):
        spec = cssid.scenario_compartmental_ti()
        assert spec.x0_val.sum() == pytest.approx(3.0)

    def test_estimate_b_variant_carries_input(self):
        spec = cssid.scenario_compartmental_ti(estimate_b=True)
        assert spec.model.p == 1
        assert spec.input_spec == InputSpec(mean=0.0, sigma=1.0)
        traj = cssid.simulate_scenario(spec)
        assert traj.u.shape == (spec.N, 1)


class TestCompartmentalTV:
    def test_all_modes_compatible(self):
        spec = cssid.scenario_compartmental_tv()
        for mode in spec.modes:
            report = cssid.check_compatibility(mode, spec.constraint)
            assert report.compatible

    def test_initial_mass(self):
        spec = cssid.scenario_compartmental_tv()
        assert spec.x0_id.sum() == pytest.approx(50.0)
        assert spec.x0_val.sum() == pytest.approx(50.0)

    def test_constraint_holds_at_scenario_noise(self):
        spec = cssid.scenario_compartmental_tv()
        traj = cssid.simulate_scenario(spec, seed=13)
        drift = np.max(np.abs(traj.x.sum(axis=1) - 50.0))
        assert drift <= 1e-7 * 51.0


class TestForest:
    def test_column_sums_match_published_rounding(self):
        spec = cssid.scenario_forest()
        A, B = spec.model.A, spec.model.B
        assert np.max(np.abs(A.sum(axis=0) - 1.0)) <= 2e-4
        assert np.max(np.abs(B.sum(axis=0))) <= 2e-4
        assert np.max(np.abs(spec.model.G.sum(axis=0))) <= 1e-12

    def test_constraint_level_from_initial_mass(self):
        spec = cssid.scenario_forest()
        s = spec.constraint.s[0]
        assert s == pytest.approx(1947.21)
        # published (rounded) total kept as metadata; validation start close to it
        assert spec.meta["published_s"] == pytest.approx(1947.2)
        assert abs(spec.x0_val.sum() - s) / s <= 6e-4

    def test_input_statistics(self):
        spec = cssid.scenario_forest(N=4000)
        traj = cssid.simulate_scenario(spec, seed=17)
        assert abs(traj.u.mean() - 1.0) <= 3 * 0.1 / np.sqrt(4000)

    def test_spectral_radius_at_most_one(self):
        spec = cssid.scenario_forest()
        from cssid.linalg import spectral_radius
        assert spectral_radius(spec.model.A) <= 1.0 + 1e-9


class TestSerialization:
    def test_scenario_json_round_trip(self, tmp_path):
        for make in (cssid.scenario_compartmental_ti, cssid.scenario_compartmental_tv,
                     cssid.scenario_forest):
            spec = make()
            path = tmp_path / f"{spec.name}.json"
            save_scenario(spec, path)
            loaded = load_scenario(path)
            assert loaded.name == spec.name
            np.testing.assert_array_equal(loaded.modes[0].A, spec.modes[0].A)
            np.testing.assert_array_equal(loaded.x0_id, spec.x0_id)
            assert loaded.seed == spec.seed
            assert loaded.mode_windows == spec.mode_windows
            # a reloaded scenario must simulate identically
            a = cssid.simulate_scenario(spec)
            b = cssid.simulate_scenario(loaded)
            np.testing.assert_array_equal(a.y, b.y)

    def test_scenario_dict_keeps_uncertain_constraint(self):
        spec = cssid.scenario_compartmental_ti()
        data = scenario_to_dict(spec)
        assert data["S_uncertain"] == [[1.4, 0.9, 1.2]]
        loaded = scenario_from_dict(json.loads(json.dumps(data)))
        np.testing.assert_array_equal(loaded.uncertain_constraint.S, [[1.4, 0.9, 1.2]])

    def test_builtin_lookup(self):
        spec = load_scenario("compartmental-tv")
        assert spec.name == "compartmental-tv"
        with pytest.raises(FileNotFoundError):
            load_scenario("no-such-scenario.json")

    def test_trajectory_csv_round_trip_is_bit_exact(self, tmp_path):
        spec = cssid.scenario_forest(N=40)
        traj = cssid.simulate_scenario(spec, seed=23)
        path = tmp_path / "traj.csv"
        save_trajectory_csv(traj, path)
        loaded = load_trajectory_csv(path)
        np.testing.assert_array_equal(loaded.x, traj.x)
        np.testing.assert_array_equal(loaded.y, traj.y)
        np.testing.assert_array_equal(loaded.u, traj.u)

    def test_trajectory_csv_switching_schedule_round_trip(self, tmp_path):
        spec = cssid.scenario_compartmental_tv(window=20)
        traj = cssid.simulate_scenario(spec, seed=29)
        path = tmp_path / "traj.csv"
        save_trajectory_csv(traj, path)
        loaded = load_trajectory_csv(path)
        assert loaded.mode_schedule == traj.mode_schedule
        header = path.read_text().splitlines()[0]
        assert header == "k,x_1,x_2,x_3,y_1,y_2,y_3,mode"
