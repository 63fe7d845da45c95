import csv
import tempfile
import unittest
from pathlib import Path

import numpy as np

from channellab import exceptions, ground_state, radial, solver
from channellab.models import GridPolicy, RadialField, WaveState


def bump_state(grid, amplitude=1.0, t=0.0):
    r = grid.nodes
    u = amplitude * np.exp(-8.0 * (r - 2.0) ** 2) * r ** 2
    return WaveState(
        t=t, u=radial.field_from_samples(grid, u), v=radial.field_from_samples(grid, np.zeros(grid.count))
    )


class TestOperator(unittest.TestCase):
    def setUp(self):
        self.grid = radial.make_grid(0.0, 10.0, 401)

    def test_free_operator_is_positive(self):
        # Act
        low, high = solver.RadialWaveOperator(self.grid, None, 8).spectrum_bounds()

        # Assert
        self.assertGreater(low, 0.0)
        self.assertGreater(high, low)

    def test_operator_is_symmetric_in_node_weights(self):
        # Arrange
        operator = solver.RadialWaveOperator(self.grid, None, 8)
        rng = np.random.default_rng(5)
        a = rng.standard_normal(self.grid.count - 1)
        b = rng.standard_normal(self.grid.count - 1)

        # Act
        left = operator.dot(a, operator.apply(b))
        right = operator.dot(operator.apply(a), b)

        # Assert
        self.assertAlmostEqual(left / right, 1.0, places=10)

    def test_graded_grid_rejected(self):
        # Arrange
        grid = radial.make_grid(1e-3, 10.0, 401, GridPolicy.GRADED_LOG)

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            solver.RadialWaveOperator(grid, None, 8)

        # Assert
        self.assertEqual(context.exception.code, "grid")

    def test_step_divides_the_run(self):
        # Arrange
        operator = solver.RadialWaveOperator(self.grid, None, 8)
        _, high = operator.spectrum_bounds()

        # Act
        dt, steps = solver.time_step(operator, 0.9, 3.0, high)

        # Assert
        self.assertAlmostEqual(dt * steps, 3.0, places=12)
        self.assertLessEqual(dt, 0.9 * self.grid.spacing * (1 + 1e-12))

    def test_cfl_out_of_range(self):
        # Arrange
        operator = solver.RadialWaveOperator(self.grid, None, 8)

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            solver.time_step(operator, 1.5, 3.0, 1.0)

        # Assert
        self.assertEqual(context.exception.code, "cfl")


class TestEvolve(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(0.0, 10.0, 401)
        cls.probe = solver.evolve(bump_state(cls.grid), None, 8, 3.0, probes=[0.0, 1.0], keep_snapshots=True)

    def test_leapfrog_invariant_is_conserved(self):
        # Assert
        self.assertLess(solver.conserved_drift(self.probe), 1e-9)

    def test_energies_scale_quadratically(self):
        # Act
        doubled = solver.evolve(bump_state(self.grid, 2.0), None, 8, 3.0, probes=[0.0, 1.0])

        # Assert
        np.testing.assert_allclose(doubled.energies, 4.0 * self.probe.energies, rtol=1e-10, atol=1e-300)

    def test_zero_data_stays_at_rest(self):
        # Act
        probe = solver.evolve(bump_state(self.grid, 0.0), None, 8, 3.0)

        # Assert
        self.assertEqual(float(np.max(np.abs(probe.energies))), 0.0)
        self.assertEqual(solver.conserved_drift(probe), 0.0)

    def test_exterior_energy_decreases_with_radius(self):
        # Assert
        inner, outer = self.probe.energy_series(0.0), self.probe.energy_series(1.0)
        self.assertTrue(np.all(inner >= outer - 1e-12 * float(np.max(inner))))

    def test_records_final_time(self):
        # Assert
        self.assertAlmostEqual(float(self.probe.times[-1]), 3.0, places=12)
        self.assertEqual(len(self.probe.snapshot_times), len(self.probe.times))

    def test_backward_run(self):
        # Act
        probe = solver.evolve(bump_state(self.grid, t=1.0), None, 8, 3.0, direction=-1)

        # Assert
        self.assertAlmostEqual(float(probe.times[-1]), -2.0, places=12)
        self.assertEqual(probe.t_center, 1.0)

    def test_causal_margin(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            solver.evolve(bump_state(self.grid), None, 8, 20.0)

        # Assert
        self.assertEqual(context.exception.code, "causal-margin")

    def test_outer_energy_without_backward_run(self):
        # Act
        outer = solver.estimate_outer_energy(self.probe, 1.0)

        # Assert
        self.assertEqual(outer.E_minus, outer.E_plus)
        self.assertGreater(outer.total, 0.0)

    def test_unprobed_radius(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            self.probe.energy_series(5.0)

        # Assert
        self.assertEqual(context.exception.code, "probe")

    def test_exterior_energy_needs_dimension(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            solver.exterior_energy_at(bump_state(self.grid), 1.0)

        # Assert
        self.assertEqual(context.exception.code, "dimension")

    def test_spacetime_norm(self):
        # Act
        value = solver.spacetime_cone_norm(self.probe, 2.0, 2.0, 1.0, 8)

        # Assert
        self.assertTrue(np.isfinite(value))
        self.assertGreater(value, 0.0)

    def test_spacetime_norm_needs_snapshots(self):
        # Arrange
        probe = solver.evolve(bump_state(self.grid), None, 8, 1.0)

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            solver.spacetime_cone_norm(probe, 2.0, 2.0, 1.0, 8)

        # Assert
        self.assertEqual(context.exception.code, "undersampled")

    def test_sup_exterior_energy(self):
        # Act
        value = solver.sup_exterior_energy(self.probe, 1.0)

        # Assert
        self.assertEqual(value, float(np.max(self.probe.energy_series(1.0))))

    def test_strichartz_exponents(self):
        # Act
        pairs = solver.strichartz_pairs(8)

        # Assert
        self.assertEqual(pairs["energy"], (1.0, 2.0))
        self.assertEqual(pairs["exterior"], (2.0, 3.2))
        self.assertEqual(pairs["multisoliton"], (3.0, 3.0))

    def test_snapshot_dump(self):
        # Arrange
        with tempfile.TemporaryDirectory() as directory:
            # Act
            paths = solver.write_snapshots(self.probe, directory)

            # Assert
            self.assertEqual(len(paths), len(self.probe.snapshot_times))
            with open(paths[0], newline="", encoding="utf-8") as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ["r", "u", "v"])
            self.assertEqual(len(rows), 1 + self.grid.count)

    def test_probe_csv(self):
        # Arrange
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "probe.csv"

            # Act
            solver.write_probe_csv(self.probe, path)

            # Assert
            with open(path, newline="", encoding="utf-8") as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ["t", "R", "E_ext", "E_conserved"])
            self.assertEqual(len(rows), 1 + 2 * len(self.probe.times))


class TestOuterEnergyLimits(unittest.TestCase):
    def test_static_kernel_radiates_nothing(self):
        # Arrange
        grid = radial.make_grid(0.0, 104.0, 1041)
        lw = ground_state.lambda_w_field(8, grid)
        state = WaveState(t=0.0, u=lw, v=RadialField.zeros(grid))
        edge = float(lw.values[-1])

        # Act
        probe = solver.evolve(
            state, ground_state.potential_field(8, grid), 8, 100.0, probes=[0.0], boundary=lambda t: edge
        )
        outer = solver.estimate_outer_energy(probe, 0.0)

        # Assert
        initial = float(probe.energy_series(0.0)[0])
        self.assertGreater(initial, 0.0)
        self.assertLess(outer.E_plus, 1e-3 * initial)

    def test_free_outer_energy_is_stable_in_run_length(self):
        # Arrange
        grid = radial.make_grid(0.0, 24.0, 481)
        state = bump_state(grid)

        # Act
        short = solver.estimate_outer_energy(solver.evolve(state, None, 8, 10.0, probes=[0.0]), 0.0)
        long = solver.estimate_outer_energy(solver.evolve(state, None, 8, 20.0, probes=[0.0]), 0.0)

        # Assert
        self.assertGreater(short.E_plus, 0.0)
        self.assertAlmostEqual(long.E_plus / short.E_plus, 1.0, delta=0.02)


if __name__ == "__main__":
    unittest.main()
