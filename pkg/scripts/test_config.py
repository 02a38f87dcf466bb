#!/usr/bin/env python3
"""
Unit tests for run configuration parsing, validation and serialization.

Run with:
    python3 test_config.py
"""

import sys
import tempfile
import unittest
from pathlib import Path

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from mooss.config import (
    CONFIG_SCHEMA,
    DERIVED_FIELDS,
    TrainConfig,
    config_hash,
    format_train_config,
    load_train_config,
    parse_config_text,
    save_train_config,
    tiny_gradcheck_config,
    to_flat_dict,
    with_overrides,
)
from utils import constants as C
from utils.validation import ConfigError, UsageError

CONFIG_DIR = Path(__file__).parent.parent / 'config'


class TestParsing(unittest.TestCase):

    def test_defaults_with_comments_and_blank_lines(self):
        config = parse_config_text("# a run\n\nrun.steps = 10   # short\n")
        self.assertEqual(config.run.steps, 10)
        self.assertEqual(config.run.F, TrainConfig().run.F)

    def test_typed_values(self):
        config = parse_config_text(
            "encoder.channels = 4, 8\n"
            "encoder.kernels = 3,3\n"
            "encoder.strides = 2, 1\n"
            "encoder.layer_norm = false\n"
            "contrastive.tau0 = 0.1\n"
            "mask.mode = uniform_cube\n"
        )
        self.assertEqual(config.encoder.channels, (4, 8))
        self.assertEqual(config.encoder.kernels, (3, 3))
        self.assertFalse(config.encoder.layer_norm)
        self.assertEqual(config.contrastive.tau0, 0.1)
        self.assertEqual(config.mask.mode, 'uniform_cube')

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("run.F = 8\nrun.frames = 8\n", source='x.cfg')
        self.assertIn("x.cfg:2", str(ctx.exception))
        self.assertIn("unknown config key 'run.frames'", str(ctx.exception))

    def test_duplicate_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("run.F = 8\nrun.F = 16\n")
        self.assertIn("set more than once", str(ctx.exception))

    def test_derived_key_rejected(self):
        for key in sorted(DERIVED_FIELDS):
            with self.assertRaises(ConfigError) as ctx:
                parse_config_text(f"{key} = 3\n")
            self.assertIn("is derived", str(ctx.exception))

    def test_malformed_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("run.F 8\n")
        self.assertIn("expected 'key = value'", str(ctx.exception))

    def test_bad_value_type(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("run.F = 8.0\n")
        self.assertIn("Invalid value for run.F: expected int", str(ctx.exception))
        with self.assertRaises(ConfigError):
            parse_config_text("encoder.layer_norm = maybe\n")

    def test_missing_file(self):
        with self.assertRaises(UsageError):
            load_train_config(CONFIG_DIR / 'does_not_exist.cfg')


class TestValidation(unittest.TestCase):

    def test_non_divisible_axis_named(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("run.F = 6\ncube.f = 4\n")
        self.assertEqual(str(ctx.exception), "axis F: F=6 is not divisible by cube f=4")

        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("env.W = 30\n")
        self.assertIn("axis W", str(ctx.exception))

    def test_mask_ratio_out_of_range(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("mask.p_m = 1.5\n")
        self.assertEqual(str(ctx.exception), "mask.p_m must be <= 1.0, got 1.5")

    def test_episode_shorter_than_sequence(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("env.T = 4\n")
        self.assertIn("env.T=4 must be >= run.F=8", str(ctx.exception))

    def test_heads_must_divide_d(self):
        with self.assertRaises(ConfigError):
            parse_config_text("decoder.heads = 5\n")

    def test_probe_needs_two_episodes(self):
        with self.assertRaises(ConfigError):
            parse_config_text("run.eval_episodes = 1\n")

    def test_derived_fields_follow_sources(self):
        config = parse_config_text("env.c = 3\nencoder.d = 16\ndecoder.heads = 2\n")
        self.assertEqual(config.encoder.in_channels, 3)
        self.assertEqual((config.encoder.height, config.encoder.width), (28, 28))
        self.assertEqual(config.decoder.d, 16)


class TestSerialization(unittest.TestCase):

    def test_save_load_round_trip(self):
        config = with_overrides(tiny_gradcheck_config(), {'adam.lr': 3e-4, 'mask.mode': 'uniform_cube'})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'nested' / 'run.cfg'
            save_train_config(config, path)
            loaded = load_train_config(path)
        self.assertEqual(to_flat_dict(loaded), to_flat_dict(config))
        self.assertEqual(config_hash(loaded), config_hash(config))

    def test_format_parses_back(self):
        config = TrainConfig()
        self.assertEqual(config_hash(parse_config_text(format_train_config(config))), config_hash(config))

    def test_hash_tracks_values(self):
        base = TrainConfig()
        self.assertEqual(config_hash(base), config_hash(TrainConfig()))
        self.assertNotEqual(config_hash(base), config_hash(with_overrides(base, {'run.seed': 1})))
        self.assertEqual(len(config_hash(base)), 16)

    def test_overrides_leave_original(self):
        base = TrainConfig()
        changed = with_overrides(base, {'run.steps': 5})
        self.assertEqual(changed.run.steps, 5)
        self.assertEqual(base.run.steps, TrainConfig().run.steps)

    def test_overrides_reject_unknown_key(self):
        with self.assertRaises(ConfigError):
            with_overrides(TrainConfig(), {'run.frames': 8})

    def test_schema_covers_settable_fields(self):
        self.assertFalse(DERIVED_FIELDS & set(CONFIG_SCHEMA))
        for key, spec in CONFIG_SCHEMA.items():
            self.assertTrue(spec.description, f"{key} has no description")


class TestShippedConfigs(unittest.TestCase):

    def test_desk_default(self):
        config = load_train_config(CONFIG_DIR / 'desk_default.cfg')
        self.assertEqual(config.graph_dims, (4, 4, 4))
        self.assertEqual(config.contrastive.L, 4)
        self.assertEqual(config.encoder.d, 32)

    def test_full_scale(self):
        config = load_train_config(CONFIG_DIR / 'full_scale.cfg')
        self.assertEqual(config.graph_dims, (4, 12, 12))
        self.assertEqual(config.run.F, 16)
        self.assertEqual((config.env.H, config.env.W), (84, 84))
        self.assertEqual((config.cube.f, config.cube.h, config.cube.w), (4, 7, 7))
        self.assertEqual(config.mask.p_m, C.FULL_SCALE_MASK_RATIO)
        self.assertEqual(config.encoder.d, 64)
        self.assertEqual(config.encoder.ema_momentum, C.FULL_SCALE_EMA_MOMENTUM)
        self.assertEqual(config.contrastive.L, 6)
        self.assertEqual(config.adam.warmup_steps, 6000)

    def test_gradcheck_tiny_matches_builtin(self):
        loaded = load_train_config(CONFIG_DIR / 'gradcheck_tiny.cfg')
        self.assertEqual(config_hash(loaded), config_hash(tiny_gradcheck_config()))

    def test_ablation_smoke(self):
        config = load_train_config(CONFIG_DIR / 'ablation_smoke.cfg')
        self.assertEqual(config.run.B, 8)


def run_tests():
    """Run all tests and print results."""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    for case in (TestParsing, TestValidation, TestSerialization, TestShippedConfigs):
        suite.addTests(loader.loadTestsFromTestCase(case))

    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)

    print("\n" + "=" * 70)
    print("Run Configuration Tests - Summary")
    print("=" * 70)
    print(f"Tests run: {result.testsRun}")
    print(f"Failures: {len(result.failures)}")
    print(f"Errors: {len(result.errors)}")

    if result.wasSuccessful():
        print("\n✓ ALL TESTS PASSED")
        return 0
    else:
        print("\n✗ SOME TESTS FAILED")
        return 1


if __name__ == "__main__":
    sys.exit(run_tests())
