import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from channellab import exceptions, ladder, norms, radial
from channellab.models import GreensMode, GridPolicy, Space


class TestNonradiativeFamily(unittest.TestCase):
    def test_members_for_eight(self):
        # Act
        members = ladder.nonradiative_family(8)

        # Assert
        self.assertEqual([m.label for m in members], ["S0_sigma0", "S1_sigma0", "S0_sigma1"])
        self.assertTrue(all(m.finite_energy for m in members))

    def test_top_member_for_twelve_has_infinite_energy(self):
        # Act
        members = {(m.k, m.sigma): m for m in ladder.nonradiative_family(12)}

        # Assert
        self.assertFalse(members[(3, 0)].finite_energy)
        self.assertTrue(members[(2, 0)].finite_energy)
        self.assertFalse(members[(2, 1)].finite_energy)

    def test_expected_exponents(self):
        # Act
        first = ladder.expected_exponents(8, 1)
        base = ladder.expected_exponents(8, 0)

        # Assert
        self.assertEqual(first["zero"], (-4.0, 2.0))
        self.assertEqual(first["inf"], (-6.0, -4.0))
        self.assertEqual(base["inf"], (0.0, -6.0))


class TestLadder(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = radial.make_grid(1e-3, 1e3, 2001, GridPolicy.GRADED_LOG)
        cls.family = ladder.regularize_T0(ladder.build_ladder(8, cls.grid))

    def test_levels(self):
        # Assert
        self.assertEqual(len(self.family.T_inf), 2)
        self.assertEqual(len(self.family.T_zero), 2)
        self.assertIsNotNone(self.family.T_aux)
        self.assertEqual(len(self.family.T_zero_reg), 2)

    def test_recursion_residuals_are_small(self):
        # Assert
        for name in ("inf", "zero", "regularized"):
            for value in self.family.residuals[name]:
                self.assertLess(value, ladder.LADDER_TOLERANCE)

    def test_base_coefficient_is_inverse_mass(self):
        # Arrange
        lw = self.family.T_inf[0]
        mass = radial.integrate_radial(lw.multiply(lw), 8)

        # Assert
        self.assertAlmostEqual(self.family.e_coeffs[0][1] * mass, 1.0, places=12)
        self.assertGreater(self.family.e_coeffs[0][1], 0.0)

    def test_profile_at_time_zero_is_the_ladder_member(self):
        # Act
        profile = ladder.eval_nonradiative_profile(self.family, 1, 0, 0.0)

        # Assert
        np.testing.assert_array_equal(profile.values, self.family.T_inf[1].values)

    def test_odd_member_velocity_at_time_zero(self):
        # Act
        velocity = ladder.eval_nonradiative_velocity(self.family, 0, 1, 0.0)

        # Assert
        np.testing.assert_allclose(velocity.values, self.family.T_inf[0].values)

    def test_even_base_member_is_static(self):
        # Act
        velocity = ladder.eval_nonradiative_velocity(self.family, 0, 0, 1.0)

        # Assert
        self.assertEqual(velocity.sup_norm(), 0.0)

    def test_member_solves_the_linear_equation(self):
        # Act
        residual = ladder.nonradiative_residual(self.family, 1, 0, 0.5)

        # Assert
        self.assertLess(residual, 1e-2)

    def test_out_of_range_member(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            ladder.eval_nonradiative_profile(self.family, 2, 0, 0.0)

        # Assert
        self.assertEqual(context.exception.code, "level-range")

    def test_slow_source_rejected_at_infinity(self):
        # Arrange
        source = radial.power_field(self.grid, -1.0)
        base = (self.family.T_zero[0], self.family.T_inf[0])

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            ladder.apply_greens(source, GreensMode.AT_INFINITY, 8, base)

        # Assert
        self.assertEqual(context.exception.code, "integrability")

    def test_exterior_basis_members(self):
        # Act
        outside = norms.exterior_basis(self.family, 2.0)
        straddling = norms.exterior_basis(self.family, 0.5)
        whole = norms.exterior_basis(self.family, 0.0)

        # Assert
        self.assertEqual(outside.labels, ["T0_inf", "T1_inf"])
        self.assertEqual(straddling.labels, ["T0_inf", "T1_inf", "chiT0_0", "chiT1_0"])
        self.assertEqual(whole.labels, ["LW(1)"])
        self.assertEqual(outside.space, Space.H1_R)

    def test_member_lies_in_its_exterior_span(self):
        # Arrange
        basis = norms.exterior_basis(self.family, 2.0)
        member = self.family.T_inf[1]

        # Act
        distance = norms.projected_norm(member, basis)

        # Assert
        self.assertLess(distance, 1e-6 * norms.h1_norm(member, 8, 2.0))

    def test_rescaled_exterior_basis(self):
        # Act
        basis = norms.rescaled_exterior_basis(self.family, 2.0, 1.5)

        # Assert
        self.assertEqual(basis.R, 3.0)
        self.assertEqual(basis.labels, ["T0_inf(2)", "T1_inf(2)"])

    def test_export_writes_table_and_sidecar(self):
        # Arrange
        with tempfile.TemporaryDirectory() as directory:
            # Act
            paths = ladder.export_ladder(self.family, directory)

            # Assert
            self.assertEqual(Path(paths["table"]).name, "ladder_N8.txt")
            table = np.loadtxt(paths["table"])
            self.assertEqual(table.shape, (self.grid.count, 7))
            with open(paths["sidecar"], encoding="utf-8") as handle:
                sidecar = json.load(handle)
            self.assertEqual(sidecar["N"], 8)
            self.assertEqual(sidecar["columns"][0], "r")
            self.assertEqual(len(sidecar["e_coeffs"]), 2)


if __name__ == "__main__":
    unittest.main()
