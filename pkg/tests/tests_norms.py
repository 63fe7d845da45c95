import math
import unittest

import numpy as np

from channellab import exceptions, ground_state, norms, radial, solver
from channellab.models import GridPolicy, RadialField, Space, SpanBasis, WaveState, ZVariant


class TestExteriorNorms(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)
        cls.f = radial.power_field(cls.grid, -6.0)

    def test_l2_norm_of_power(self):
        # Act
        value = norms.l2_norm(self.f, 8, R=1.0)

        # Assert
        self.assertAlmostEqual(value, 0.5, places=7)

    def test_h1_norm_of_power(self):
        # Act
        value = norms.h1_norm(self.f, 8, R=1.0)

        # Assert
        self.assertAlmostEqual(value, math.sqrt(6.0), places=6)

    def test_energy_norm_combines_slots(self):
        # Act
        value = norms.energy_norm(self.f, self.f, 8, R=1.0)

        # Assert
        self.assertAlmostEqual(value, math.hypot(math.sqrt(6.0), 0.5), places=6)

    def test_z_norm_of_power(self):
        # Arrange
        f = radial.power_field(self.grid, -3.0)

        # Act
        profile = norms.z_norm_profile(f, -3.0, 10, ZVariant.PLAIN)

        # Assert
        self.assertAlmostEqual(profile.sup, math.sqrt(3.75), places=6)
        self.assertEqual(profile.argmax, 1.0)

    def test_based_shells_start_at_a_power_of_two(self):
        # Arrange
        grid = radial.make_grid(0.0, 6.0, 601)
        r = grid.nodes
        f = radial.field_from_samples(grid, np.where((r >= 1.5) & (r <= 1.9), 1.0, 0.0))

        # Act
        profile = norms.z_norm_profile(f, -3.0, 8, ZVariant.BASED, R=1.5)

        # Assert
        self.assertEqual(profile.k_min, 1)
        self.assertEqual(profile.radii[0], 2.0)
        reference = norms.z_norm(f, -3.0, 8, ZVariant.BASED, R=1.0)
        self.assertGreater(reference, 0.0)
        self.assertLess(profile.sup, 1e-4 * reference)


class TestProjections(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)
        cls.W = ground_state.w_field(8, cls.grid)
        cls.basis = norms.ground_state_basis(8, cls.grid)

    def test_remainder_is_orthogonal(self):
        # Act
        projection = norms.project_onto_span(self.W, self.basis)

        # Assert
        lw = self.basis.fields[0]
        overlap = norms.inner_product(projection.remainder, lw, Space.H1_R, 8)
        self.assertLess(abs(overlap) / norms.h1_norm(lw, 8) ** 2, 1e-8)

    def test_projection_is_idempotent(self):
        # Arrange
        first = norms.project_onto_span(self.W, self.basis)

        # Act
        second = norms.project_onto_span(first.remainder, self.basis)

        # Assert
        self.assertLess(abs(second.coefficients[0]), 1e-8)

    def test_pythagoras(self):
        # Act
        projection = norms.project_onto_span(self.W, self.basis)

        # Assert
        lw = self.basis.fields[0]
        parallel = projection.coefficients[0] * norms.h1_norm(lw, 8)
        remainder = norms.h1_norm(projection.remainder, 8)
        total = norms.h1_norm(self.W, 8)
        self.assertAlmostEqual((parallel ** 2 + remainder ** 2) / total ** 2, 1.0, places=8)

    def test_pair_input_keeps_other_slot(self):
        # Arrange
        velocity = RadialField.zeros(self.grid)

        # Act
        projection = norms.project_onto_span((self.W, velocity), self.basis)

        # Assert
        np.testing.assert_array_equal(projection.remainder[1].values, velocity.values)

    def test_duplicate_members_are_ill_conditioned(self):
        # Arrange
        lw = self.basis.fields[0]
        basis = SpanBasis(fields=[lw, lw], space=Space.H1_R, N=8, labels=["a", "b"])

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            norms.project_onto_span(self.W, basis)

        # Assert
        self.assertEqual(context.exception.code, "gram-condition")

    def test_empty_basis_returns_input(self):
        # Arrange
        basis = SpanBasis(fields=[], space=Space.H1_R, N=8)

        # Act
        projection = norms.project_onto_span(self.W, basis)

        # Assert
        np.testing.assert_array_equal(projection.remainder.values, self.W.values)
        self.assertEqual(projection.coefficients.size, 0)


class TestMultisolitonSpans(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

    def test_one_member_per_scale(self):
        # Act
        basis = norms.multisoliton_basis(8, self.grid, [1.0, 0.1], Space.L2_R)

        # Assert
        self.assertEqual(basis.labels, ["LW(1)", "LW(0.1)"])
        self.assertEqual(basis.space, Space.L2_R)

    def test_scales_must_decrease(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            norms.multisoliton_basis(8, self.grid, [0.1, 1.0])

        # Assert
        self.assertEqual(context.exception.code, "non-monotone")

    def test_separated_solitons_project_cleanly(self):
        # Arrange
        basis = norms.multisoliton_basis(8, self.grid, [1.0, 0.1])
        target = basis.fields[0] + basis.fields[1].scale(3.0)

        # Act
        projection = norms.project_onto_span(target, basis)

        # Assert
        np.testing.assert_allclose(projection.coefficients, [1.0, 3.0], rtol=1e-8)


class TestPowerSpans(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

    def test_sizes(self):
        # Act
        eight = norms.power_basis(8, self.grid, 1.0)
        ten = norms.power_basis(10, self.grid, 1.0)
        twelve = norms.power_basis(12, self.grid, 1.0)

        # Assert
        self.assertEqual(len(eight.fields), 2)
        self.assertEqual(eight.space, Space.H1_R)
        self.assertEqual(len(ten.fields), 2)
        self.assertEqual(ten.space, Space.L2_R)
        self.assertEqual(len(twelve.fields), 3)

    def test_cut_radius_must_be_positive(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            norms.power_basis(8, self.grid, 0.0)

        # Assert
        self.assertEqual(context.exception.code, "basis")

    def test_alternating_norm_ignores_the_span(self):
        # Arrange
        u0 = radial.power_field(self.grid, -6.0)
        u1 = RadialField.zeros(self.grid)

        # Act
        value = norms.alternating_norm((u0, u1), 8, 1.0)

        # Assert
        self.assertLess(value, 1e-6 * norms.h1_norm(u0, 8, 1.0))


class TestAveraging(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

    def test_average_of_power(self):
        # Act
        averaged = norms.averaging_transform(radial.power_field(self.grid, -6.0))

        # Assert
        r = self.grid.nodes
        inside = (r > 1e-2) & (r < 1e2)
        np.testing.assert_allclose(averaged.values[inside], r[inside] ** -4 / 4.0, rtol=1e-6)
        self.assertEqual(averaged.inf_tail.exponent, -4.0)
        self.assertAlmostEqual(averaged.inf_tail.coefficient, 0.25, places=14)

    def test_inverse_undoes_average(self):
        # Arrange
        f = radial.power_field(self.grid, -6.0)

        # Act
        restored = norms.averaging_transform(norms.averaging_transform(f), "inverse")

        # Assert
        np.testing.assert_allclose(restored.values, f.values, rtol=1e-12)

    def test_average_conjugates_laplacians(self):
        # Arrange
        grid = radial.make_grid(0.0, 6.0, 1201)
        r = grid.nodes
        with np.errstate(divide="ignore", over="ignore"):
            bump = np.where(r < 4.0, np.exp(-1.0 / np.maximum(1.0 - (r / 4.0) ** 2, 1e-300)), 0.0)
        f = radial.field_from_samples(grid, bump)

        # Act
        left = norms.averaging_transform(radial.radial_laplacian(f, 12))
        right = radial.radial_laplacian(norms.averaging_transform(f), 10)

        # Assert
        inside = (r > 0.5) & (r < 3.0)
        scale = float(np.max(np.abs(right.values[inside])))
        error = float(np.max(np.abs(left.values[inside] - right.values[inside])))
        self.assertLess(error, 1e-3 * scale)

    def test_slow_decay_rejected(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            norms.averaging_transform(radial.power_field(self.grid, -2.0))

        # Assert
        self.assertEqual(context.exception.code, "divergent-tail")


class TestDistances(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)

    def test_distance_to_own_span_vanishes(self):
        # Arrange
        lw = ground_state.lambda_w_field(8, self.grid)
        u = lw.scale(2.0)

        # Act
        distance = norms.span_distance_Z(u, [lw], -4.0, 1.0, 8)

        # Assert
        reference = norms.z_norm(u, -4.0, 8, ZVariant.BASED, R=1.0)
        self.assertLess(distance, 1e-4 * reference)

    def test_distance_never_exceeds_norm(self):
        # Arrange
        W = ground_state.w_field(8, self.grid)
        lw = ground_state.lambda_w_field(8, self.grid)

        # Act
        distance = norms.span_distance_Z(W, [lw], -4.0, 1.0, 8)

        # Assert
        self.assertLessEqual(distance, norms.z_norm(W, -4.0, 8, ZVariant.BASED, R=1.0) * (1 + 1e-12))

    def test_tilde_y_sup_grows_with_the_lattice(self):
        # Arrange
        uniform = radial.make_grid(0.0, 10.0, 401)
        r = uniform.nodes
        state = WaveState(
            u=radial.field_from_samples(uniform, np.exp(-8.0 * (r - 2.0) ** 2) * r ** 2),
            v=RadialField.zeros(uniform),
        )
        probe = solver.evolve(state, None, 8, 1.0, keep_snapshots=True)

        def factory(rho):
            return norms.ground_state_basis(8, self.grid, (1.0,), Space.H1_R, R=rho)

        # Act
        coarse = norms.tilde_y_norm(probe, factory, [4.0])
        fine = norms.tilde_y_norm(probe, factory, [0.5, 2.0, 4.0])

        # Assert
        self.assertTrue(math.isfinite(fine))
        self.assertGreater(fine, 0.0)
        self.assertGreaterEqual(fine, coarse)

    def test_hardy_bound_for_ground_state(self):
        # Act
        report = norms.hardy_check(ground_state.w_field(8, self.grid), [1.0], 8)

        # Assert
        self.assertTrue(report["bound_holds"])
        self.assertGreater(report["pointwise_constant"], 0.0)


if __name__ == "__main__":
    unittest.main()
