import json
import os
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from channellab import exceptions, models
from channellab.radial import make_grid


def load_asset(filename):
    assets_dir = os.path.join(os.path.dirname(__file__), 'assets')
    file_path = os.path.join(assets_dir, f'{filename}.json')
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


class TestDimensionProfile(unittest.TestCase):
    def test_counts_for_eight(self):
        # Act
        profile = models.DimensionProfile.build_profile(8)

        # Assert
        self.assertEqual(profile.sigma, 0)
        self.assertEqual(profile.ladder_top_even, 1)
        self.assertEqual(profile.ladder_top_odd, 0)
        self.assertEqual(profile.power_span_count, 2)

    def test_counts_for_ten_and_twelve(self):
        # Act
        ten = models.DimensionProfile.build_profile(10)
        twelve = models.DimensionProfile.build_profile(12)

        # Assert
        self.assertEqual((ten.sigma, ten.ladder_top_even, ten.ladder_top_odd, ten.power_span_count), (1, 2, 1, 2))
        self.assertEqual(
            (twelve.sigma, twelve.ladder_top_even, twelve.ladder_top_odd, twelve.power_span_count), (0, 3, 2, 3)
        )

    def test_odd_dimension_rejected(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            models.DimensionProfile.build_profile(9)

        # Assert
        self.assertEqual(context.exception.code, "dimension")


class TestPowerTail(unittest.TestCase):
    def test_terms_ordered_by_dominance(self):
        # Act
        at_infinity = models.PowerTail.from_terms(models.TailEnd.INFINITY, [(-6.0, 1.0), (-4.0, 2.0)])
        at_origin = models.PowerTail.from_terms(models.TailEnd.ORIGIN, [(2.0, 1.0), (-4.0, 2.0)])

        # Assert
        self.assertEqual(at_infinity.exponent, -4.0)
        self.assertEqual(at_infinity.coefficient, 2.0)
        self.assertEqual(at_origin.exponent, -4.0)

    def test_exact_cancellation_leaves_no_tail(self):
        # Act
        tail = models.PowerTail.from_terms(models.TailEnd.INFINITY, [(-4.0, 1.0), (-4.0, -1.0)])

        # Assert
        self.assertIsNone(tail)

    def test_partial_cancellation_drops_the_cancelled_term(self):
        # Act
        tail = models.PowerTail.from_terms(
            models.TailEnd.INFINITY, [(-4.0, 1.0), (-4.0, -1.0 + 1e-15), (-6.0, 3.0)]
        )

        # Assert
        self.assertEqual(tail.terms, ((-6.0, 3.0),))

    def test_rounding_residue_kept_when_everything_cancels(self):
        # Act
        tail = models.PowerTail.from_terms(models.TailEnd.INFINITY, [(-4.0, 1.0), (-4.0, -1.0 + 1e-15)])

        # Assert
        self.assertIsNotNone(tail)
        self.assertLess(abs(tail.coefficient), 1e-14)

    @settings(max_examples=50, deadline=None)
    @given(
        exponent=st.floats(min_value=-12, max_value=4, allow_nan=False),
        coefficient=st.floats(min_value=-10, max_value=10, allow_nan=False).filter(lambda c: abs(c) > 1e-3),
        factor=st.floats(min_value=-5, max_value=5, allow_nan=False).filter(lambda c: abs(c) > 1e-3),
    )
    def test_scaled_tail_evaluates_to_scaled_values(self, exponent, coefficient, factor):
        # Arrange
        tail = models.PowerTail.monomial(models.TailEnd.INFINITY, exponent, coefficient)
        r = np.array([2.0, 5.0, 11.0])

        # Act
        scaled = tail.scaled(factor)

        # Assert
        np.testing.assert_allclose(scaled.evaluate(r), factor * tail.evaluate(r), rtol=1e-9)


class TestRadialField(unittest.TestCase):
    def setUp(self):
        self.grid = make_grid(0.0, 4.0, 33)
        self.field = models.RadialField(
            grid=self.grid, values=np.exp(-self.grid.nodes ** 2), derivative=-2 * self.grid.nodes * np.exp(-self.grid.nodes ** 2)
        )

    def test_values_are_read_only(self):
        # Act / Assert
        with self.assertRaises(ValueError):
            self.field.values[0] = 3.0

    def test_wrong_length_rejected(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            models.RadialField(grid=self.grid, values=np.zeros(5))

        # Assert
        self.assertEqual(context.exception.code, "grid")

    @settings(max_examples=30, deadline=None)
    @given(
        a=st.floats(min_value=-4, max_value=4, allow_nan=False),
        b=st.floats(min_value=-4, max_value=4, allow_nan=False),
    )
    def test_scaling_is_linear(self, a, b):
        # Act
        combined = self.field.scale(a) + self.field.scale(b)

        # Assert
        np.testing.assert_allclose(combined.values, self.field.scale(a + b).values, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(
            combined.derivative_values(), self.field.scale(a + b).derivative_values(), rtol=1e-12, atol=1e-12
        )

    def test_zeros_are_compact(self):
        # Act
        zero = models.RadialField.zeros(self.grid)

        # Assert
        self.assertTrue(zero.is_compact)
        self.assertEqual(zero.sup_norm(), 0.0)


class TestChannelRecord(unittest.TestCase):
    def test_csv_row_follows_header(self):
        # Arrange
        record = models.ChannelRecord(
            index=3, seed=11, E_out_minus=0.5, E_out_plus=0.5, proj_norm=0.2, z_norm=0.1,
            ratio=None, plateau_quality=0.01, flags=["degenerate", "plateau"],
        )

        # Act
        row = record.csv_row()

        # Assert
        self.assertEqual(len(row), len(models.ChannelRecord.CSV_HEADER))
        self.assertEqual(row[6], "")
        self.assertEqual(row[-1], "degenerate;plateau")
        self.assertTrue(record.excluded)

    def test_header_is_fixed(self):
        # Assert
        self.assertEqual(
            models.ChannelRecord.CSV_HEADER,
            ["index", "seed", "E_out_minus", "E_out_plus", "proj_norm", "z_norm", "ratio", "plateau_quality", "flags"],
        )


class TestExperimentConfig(unittest.TestCase):
    def test_asset_config_loads(self):
        # Arrange
        payload = load_asset('channel_config')

        # Act
        config = models.ExperimentConfig.from_payload(payload)

        # Assert
        self.assertEqual(config.dimension, 8)
        self.assertEqual(config.potential.scales, [1.0])
        self.assertEqual(config.ensemble.support, (0.5, 2.0))
        self.assertEqual(config.profile.sigma, 0)

    def test_invalid_config_lists_every_field(self):
        # Arrange
        payload = load_asset('invalid_config')

        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            models.ExperimentConfig.from_payload(payload)

        # Assert
        self.assertEqual(context.exception.code, "config")
        fields = [problem["field"] for problem in context.exception.data]
        self.assertIn("potential", fields)
        self.assertIn("grid.spacing", fields)

    def test_unknown_experiment_names_the_field(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            models.ExperimentConfig.from_payload({"experiment": "sweep"})

        # Assert
        self.assertIn("experiment", str(context.exception))

    def test_causal_margin_enforced(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            models.ExperimentConfig.from_payload(
                {"experiment": "channel", "grid": {"r_max": 5.0}, "time": {"t_max": 10.0}}
            )

        # Assert
        self.assertEqual(context.exception.code, "config")

    def test_parity_slot_must_match_dimension(self):
        # Act
        with self.assertRaises(exceptions.ChannelLabError) as context:
            models.ExperimentConfig.from_payload({"experiment": "channel", "ensemble": {"slot": 1}})

        # Assert
        self.assertIn("parity", str(context.exception))

    def test_overrides_are_revalidated(self):
        # Arrange
        config = models.ExperimentConfig.from_payload(load_asset('channel_config'))

        # Act
        updated = config.with_overrides(seed=99, experiment="resonant")

        # Assert
        self.assertEqual(updated.ensemble.seed, 99)
        self.assertEqual(updated.experiment, "resonant")
        self.assertEqual(config.ensemble.seed, 7)

    def test_wavemap_parameters_accept_lambda_alias(self):
        # Act
        config = models.ExperimentConfig.from_payload(
            {"experiment": "wavemap", "potential": {"kind": "wavemap", "wavemap": {"k": 3, "lambda": 2.0}}}
        )

        # Assert
        self.assertEqual(config.potential.scales, [2.0])
        self.assertEqual(config.potential.wavemap.dimension, 8)


class TestMultisolitonGeometry(unittest.TestCase):
    def test_ratio_must_be_below_one(self):
        # Act / Assert
        with self.assertRaises(exceptions.ChannelLabError):
            models.MultisolitonGeometry(ratio=1.5, gamma=1.5)
