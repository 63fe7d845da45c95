import unittest

import numpy as np

from channellab import exceptions, radial
from channellab.models import GridPolicy, RadialField, TailEnd


class TestMakeGrid(unittest.TestCase):
    def test_uniform_grid_from_origin(self):
        # Act
        grid = radial.make_grid(0.0, 1.0, 17)

        # Assert
        self.assertTrue(grid.has_origin)
        self.assertEqual(grid.count, 17)
        self.assertAlmostEqual(grid.spacing, 1.0 / 16, places=15)
        self.assertEqual(grid.r_max, 1.0)

    def test_graded_grid_has_exact_anchor(self):
        # Act
        grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

        # Assert
        index = grid.anchor_index(1.0)
        self.assertEqual(grid.nodes[index], 1.0)
        self.assertEqual(grid.r_max, 1e3)
        self.assertLessEqual(grid.r_min, 1e-3 * (1 + 1e-9))
        ratios = grid.nodes[1:] / grid.nodes[:-1]
        self.assertLess(np.max(ratios) - np.min(ratios), 1e-9)

    def test_too_few_nodes(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            radial.make_grid(0.0, 1.0, 8)

        # Assert
        self.assertEqual(context.exception.code, "grid")

    def test_bad_bounds(self):
        # Act / Assert
        with self.assertRaises(exceptions.ChannelLabError):
            radial.make_grid(2.0, 1.0, 32)


class TestIntegration(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.graded = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

    def test_power_law_integral_with_tail(self):
        # Arrange
        f = radial.power_field(self.graded, -12.0)

        # Act
        value = radial.integrate_radial(f, 8, lo=1.0)

        # Assert
        self.assertAlmostEqual(value, 0.25, places=7)

    def test_divergent_tail_raises(self):
        # Arrange
        f = radial.power_field(self.graded, -2.0)

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            radial.integrate_radial(f, 8)

        # Assert
        self.assertEqual(context.exception.code, "divergent-tail")

    def test_uniform_grid_integral(self):
        # Arrange
        grid = radial.make_grid(0.0, 1.0, 129)
        f = radial.field_from_samples(grid, np.ones(grid.count))

        # Act
        value = radial.integrate_radial(f, 8, lo=0.0, hi=1.0)

        # Assert
        self.assertAlmostEqual(value, 1.0 / 8, places=6)

    def test_shells_add_up(self):
        # Arrange
        grid = radial.make_grid(0.0, 1.0, 129)
        f = radial.field_from_samples(grid, np.ones(grid.count))

        # Act
        shells = radial.shell_integrals(f, 8, [0.0, 0.25, 0.5, 1.0])

        # Assert
        self.assertAlmostEqual(float(np.sum(shells)), 1.0 / 8, places=6)
        self.assertAlmostEqual(shells[0], 0.25 ** 8 / 8, places=8)

    def test_reverse_cumulative_matches_closed_form(self):
        # Arrange
        f = radial.power_field(self.graded, -12.0)
        index = self.graded.anchor_index(1.0)

        # Act
        cumulative = radial.cumulative_radial(f, 8, "reverse")

        # Assert
        self.assertAlmostEqual(cumulative[index], 0.25, places=7)

    def test_unknown_direction(self):
        # Arrange
        f = radial.power_field(self.graded, -12.0)

        # Act / Assert
        with self.assertRaises(exceptions.ChannelLabError):
            radial.cumulative_radial(f, 8, "sideways")


class TestDerivativesAndFits(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.graded = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

    def test_fit_recovers_exponent(self):
        # Arrange
        f = radial.field_from_samples(self.graded, 3.0 * self.graded.nodes ** -6)

        # Act
        fit = radial.fit_power_law(f, TailEnd.INFINITY, 1.0)

        # Assert
        self.assertAlmostEqual(fit.exponent, -6.0, places=8)
        self.assertAlmostEqual(fit.coefficient, 3.0, places=6)

    def test_fit_rejects_sign_change(self):
        # Arrange
        f = radial.field_from_samples(self.graded, np.cos(self.graded.nodes))

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            radial.fit_power_law(f, TailEnd.INFINITY, 1.0)

        # Assert
        self.assertEqual(context.exception.code, "fit-window")

    def test_differentiate_uses_exact_derivative(self):
        # Arrange
        f = radial.power_field(self.graded, -6.0)

        # Act
        derivative = radial.differentiate(f)

        # Assert
        np.testing.assert_allclose(derivative.values, -6.0 * self.graded.nodes ** -7, rtol=1e-12)
        self.assertEqual(derivative.inf_tail.exponent, -7.0)

    def test_laplacian_of_fundamental_solution_vanishes(self):
        # Arrange
        f = radial.field_from_samples(self.graded, self.graded.nodes ** -6.0)

        # Act
        lap = radial.radial_laplacian(f, 8)

        # Assert
        interior = slice(10, -10)
        scale = 42.0 * self.graded.nodes[interior] ** -8.0
        self.assertLess(np.max(np.abs(lap.values[interior]) / scale), 1e-3)

    def test_power_field_singular_on_origin_grid(self):
        # Arrange
        grid = radial.make_grid(0.0, 1.0, 17)

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            radial.power_field(grid, -2.0)

        # Assert
        self.assertEqual(context.exception.code, "singular-origin")


class TestResampling(unittest.TestCase):
    def test_regularized_core_moves_to_uniform_grid(self):
        # Arrange
        graded = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)
        uniform = radial.make_grid(0.0, 10.0, 201)
        f = radial.power_field(graded, -6.0)

        # Act
        regular = radial.regularize_core(f, 0.25)
        moved = radial.resample(regular, uniform)

        # Assert
        self.assertEqual(regular.zero_tail.exponent, 0.0)
        outside = uniform.nodes >= 0.5
        np.testing.assert_allclose(moved.values[outside], uniform.nodes[outside] ** -6.0, rtol=1e-6)
        self.assertTrue(np.all(np.isfinite(moved.values)))

    def test_evaluate_beyond_grid_uses_tail(self):
        # Arrange
        graded = radial.make_grid(1e-2, 1e2, 401, GridPolicy.GRADED_LOG)
        f = radial.power_field(graded, -4.0)

        # Act
        value = radial.evaluate(f, [1e4])

        # Assert
        self.assertAlmostEqual(float(value[0]) / 1e-16, 1.0, places=10)

    def test_evaluate_beyond_grid_without_tail(self):
        # Arrange
        grid = radial.make_grid(0.0, 1.0, 17)
        f = RadialField(grid=grid, values=np.ones(17))

        # Act / Assert
        with self.assertRaises(exceptions.ChannelLabError):
            radial.evaluate(f, [2.0])

    def test_singular_field_cannot_move_to_origin_grid(self):
        # Arrange
        graded = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)
        uniform = radial.make_grid(0.0, 10.0, 201)

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            radial.resample(radial.power_field(graded, -6.0), uniform)

        # Assert
        self.assertEqual(context.exception.code, "singular-origin")


if __name__ == "__main__":
    unittest.main()
