import io
import json
import os
import tempfile
import unittest
from pathlib import Path

from channellab import cli


def asset_path(filename):
    return os.path.join(os.path.dirname(__file__), 'assets', f'{filename}.json')


class TestCli(unittest.TestCase):
    def test_channel_run_writes_report(self):
        # Arrange
        with tempfile.TemporaryDirectory() as directory:
            # Act
            status = cli.main(["channel", "--config", asset_path('empty_config'), "--out", directory])

            # Assert
            self.assertEqual(status, 0)
            with open(Path(directory) / "report.json", encoding="utf-8") as handle:
                report = json.load(handle)
            self.assertEqual(report["experiment"], "channel")
            self.assertEqual(report["records"], [])

    def test_seed_flag_overrides_config(self):
        # Arrange
        args = cli.build_parser().parse_args(["channel", "--config", asset_path('empty_config'), "--seed", "42"])

        # Act
        config = cli.load_config(args)

        # Assert
        self.assertEqual(config.ensemble.seed, 42)

    def test_subcommand_selects_experiment(self):
        # Arrange
        args = cli.build_parser().parse_args(
            ["nonradiative", "--config", asset_path('empty_config'), "--level", "1", "--sigma", "0"]
        )

        # Act
        config = cli.load_config(args)

        # Assert
        self.assertEqual(config.experiment, "nonradiative")
        self.assertEqual((config.level, config.sigma), (1, 0))

    def test_invalid_config_exits_with_two(self):
        # Arrange
        f_err = io.StringIO()

        # Act
        with tempfile.TemporaryDirectory() as directory:
            status = cli.main(
                ["channel", "--config", asset_path('invalid_config'), "--out", directory], f_err=f_err
            )

        # Assert
        self.assertEqual(status, 2)
        message = f_err.getvalue()
        self.assertTrue(message.startswith("channellab: (config)"))
        self.assertIn("grid.spacing", message)

    def test_missing_config_file(self):
        # Arrange
        f_err = io.StringIO()

        # Act
        with tempfile.TemporaryDirectory() as directory:
            status = cli.main(
                ["ladder", "--config", str(Path(directory) / "absent.json"), "--out", directory], f_err=f_err
            )

        # Assert
        self.assertEqual(status, 2)
        self.assertIn("Could not read config", f_err.getvalue())

    def test_unknown_subcommand(self):
        # Act
        with self.assertRaises(SystemExit):
            cli.main(["spectrum"])


if __name__ == "__main__":
    unittest.main()
