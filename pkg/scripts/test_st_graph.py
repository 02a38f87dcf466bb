#!/usr/bin/env python3
"""
Unit tests for the spatial-temporal cube graph and random-walk masking.

Run with:
    python3 test_st_graph.py
"""

import sys
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from mooss.core.st_graph import (
    CubeShape,
    MaskSet,
    ObservationSequence,
    apply_mask,
    build_graph,
    induced_subgraph_connected,
    mask_frames_batch,
    mask_target_size,
    random_walk_mask,
    sample_mask,
    uniform_cube_mask,
)
from utils.validation import ConfigError, UsageError


def ones_sequence(F, c, H, W):
    return ObservationSequence(np.ones((F, c, H, W)), np.zeros(F, dtype=np.int64))


class TestBuildGraph(unittest.TestCase):

    def test_full_scale_node_count(self):
        graph = build_graph(16, 84, 84, CubeShape(4, 7, 7))
        self.assertEqual(graph.dims, (4, 12, 12))
        self.assertEqual(graph.num_nodes, 576)

    def test_full_scale_edge_count(self):
        graph = build_graph(16, 84, 84, CubeShape(4, 7, 7))
        self.assertEqual(graph.num_edges, 1488)

        # Brute force: every pair at Manhattan distance 1
        T, R, C = graph.dims
        brute = 0
        for t in range(T):
            for r in range(R):
                for c in range(C):
                    brute += (t + 1 < T) + (r + 1 < R) + (c + 1 < C)
        self.assertEqual(brute, 1488)

    def test_whole_sequence_cube(self):
        graph = build_graph(8, 28, 28, CubeShape(8, 28, 28))
        self.assertEqual(graph.num_nodes, 1)
        self.assertEqual(graph.num_edges, 0)

    def test_node_id_round_trip(self):
        graph = build_graph(8, 28, 28, CubeShape(2, 7, 7))
        for node in range(graph.num_nodes):
            self.assertEqual(graph.node_id(*graph.coords(node)), node)

    def test_adjacency_is_symmetric_six_connected(self):
        graph = build_graph(8, 28, 28, CubeShape(2, 7, 7))
        for node, neighbours in enumerate(graph.adjacency):
            self.assertLessEqual(len(neighbours), 6)
            t, r, c = graph.coords(node)
            for n in neighbours:
                self.assertIn(node, graph.adjacency[n])
                nt, nr, nc = graph.coords(n)
                self.assertEqual(abs(nt - t) + abs(nr - r) + abs(nc - c), 1)

    def test_non_divisible_axis_named(self):
        for args, axis in (((6, 28, 28), 'F'), ((8, 30, 28), 'H'), ((8, 28, 27), 'W')):
            with self.assertRaises(ConfigError) as ctx:
                build_graph(*args, CubeShape(4, 7, 7))
            self.assertIn(f"axis {axis}", str(ctx.exception))


class TestRandomWalkMask(unittest.TestCase):

    def setUp(self):
        self.graph = build_graph(16, 84, 84, CubeShape(4, 7, 7))

    def test_zero_ratio_is_empty(self):
        mask = random_walk_mask(self.graph, 0.0, np.random.default_rng(0))
        self.assertEqual(len(mask), 0)

    def test_full_ratio_masks_everything(self):
        mask = random_walk_mask(self.graph, 1.0, np.random.default_rng(0))
        self.assertEqual(mask.nodes, frozenset(range(576)))

    def test_half_ratio(self):
        mask = random_walk_mask(self.graph, 0.5, np.random.default_rng(0))
        self.assertEqual(len(mask), 288)
        self.assertTrue(induced_subgraph_connected(self.graph, mask.nodes))
        self.assertIn(mask.root, mask.nodes)

    def test_size_and_connectivity_sweep(self):
        """1000 draws across four ratios: exact size and a connected walk set every time."""
        rng = np.random.default_rng(2024)
        ratios = (0.1, 0.25, 0.5, 0.9)
        for draw in range(1000):
            p_m = ratios[draw % len(ratios)]
            mask = random_walk_mask(self.graph, p_m, rng)
            self.assertEqual(len(mask), mask_target_size(576, p_m))
            self.assertTrue(induced_subgraph_connected(self.graph, mask.nodes))

    def test_target_rounding(self):
        self.assertEqual(mask_target_size(576, 0.1), 58)
        self.assertEqual(mask_target_size(576, 0.25), 144)
        self.assertEqual(mask_target_size(576, 0.9), 518)
        self.assertEqual(mask_target_size(5, 0.5), 3)

    def test_deterministic_given_seed(self):
        first = random_walk_mask(self.graph, 0.25, np.random.default_rng(7))
        second = random_walk_mask(self.graph, 0.25, np.random.default_rng(7))
        self.assertEqual(first, second)

    def test_invalid_ratio(self):
        for p_m in (-0.1, 1.5):
            with self.assertRaises(ConfigError):
                random_walk_mask(self.graph, p_m, np.random.default_rng(0))

    def test_uniform_cube_mask_size(self):
        mask = uniform_cube_mask(self.graph, 0.5, np.random.default_rng(0))
        self.assertEqual(len(mask), 288)
        self.assertIsNone(mask.root)

    def test_unknown_mode(self):
        with self.assertRaises(ConfigError):
            sample_mask(self.graph, 0.5, np.random.default_rng(0), mode='tube')


class TestApplyMask(unittest.TestCase):

    def test_one_node_zeroes_one_cube(self):
        cube = CubeShape(4, 7, 7)
        graph = build_graph(8, 14, 14, cube)
        mask = MaskSet(frozenset({3}), 3, 0.125, graph.dims)
        for channels, expected in ((1, 196), (4, 784)):
            seq = ones_sequence(8, channels, 14, 14)
            masked = apply_mask(seq, mask, cube)
            self.assertEqual(seq.frames.sum() - masked.frames.sum(), expected)

    def test_masked_region_location(self):
        cube = CubeShape(2, 7, 7)
        graph = build_graph(4, 14, 14, cube)
        node = graph.node_id(1, 0, 1)
        masked = apply_mask(ones_sequence(4, 2, 14, 14), MaskSet(frozenset({node}), node, 0.1, graph.dims), cube)
        assert_array_equal(masked.frames[2:4, :, 0:7, 7:14], 0.0)
        self.assertEqual(masked.frames.sum(), 4 * 2 * 14 * 14 - 2 * 2 * 49)

    def test_empty_mask_is_identity(self):
        cube = CubeShape(2, 7, 7)
        graph = build_graph(4, 14, 14, cube)
        seq = ObservationSequence(np.random.default_rng(0).random((4, 1, 14, 14)), np.arange(4) % 5)
        masked = apply_mask(seq, MaskSet(frozenset(), None, 0.0, graph.dims), cube)
        assert_array_equal(masked.frames, seq.frames)
        assert_array_equal(masked.actions, seq.actions)

    def test_full_mask_annihilates(self):
        cube = CubeShape(2, 7, 7)
        graph = build_graph(4, 14, 14, cube)
        mask = random_walk_mask(graph, 1.0, np.random.default_rng(0))
        masked = apply_mask(ones_sequence(4, 3, 14, 14), mask, cube)
        assert_array_equal(masked.frames, 0.0)

    def test_unmasked_pixels_preserved_and_input_untouched(self):
        cube = CubeShape(2, 7, 7)
        graph = build_graph(8, 28, 28, cube)
        frames = np.random.default_rng(1).random((8, 2, 28, 28))
        seq = ObservationSequence(frames.copy(), np.zeros(8, dtype=np.int64))
        mask = random_walk_mask(graph, 0.5, np.random.default_rng(1))
        masked = apply_mask(seq, mask, cube)
        assert_array_equal(seq.frames, frames)
        changed = masked.frames != frames
        self.assertTrue(np.all(masked.frames[changed] == 0.0))
        kept = masked.frames != 0.0
        assert_array_equal(masked.frames[kept], frames[kept])

    def test_dimension_mismatch(self):
        cube = CubeShape(2, 7, 7)
        graph = build_graph(8, 28, 28, cube)
        mask = random_walk_mask(graph, 0.5, np.random.default_rng(0))
        with self.assertRaises(UsageError):
            apply_mask(ones_sequence(4, 1, 28, 28), mask, cube)

    def test_batch_masks_are_independent(self):
        cube = CubeShape(2, 7, 7)
        graph = build_graph(8, 28, 28, cube)
        frames = np.ones((6, 8, 1, 28, 28))
        masked, masks = mask_frames_batch(frames, graph, cube, 0.5, np.random.default_rng(0))
        self.assertEqual(len(masks), 6)
        self.assertGreater(len({m.nodes for m in masks}), 1)
        assert_array_equal(frames, 1.0)
        for b, mask in enumerate(masks):
            self.assertEqual(masked[b].sum(), frames[b].sum() - len(mask) * cube.volume)


class TestObservationSequence(unittest.TestCase):

    def test_pixels_outside_unit_range(self):
        frames = np.full((2, 1, 14, 14), 0.5)
        frames[1, 0, 3, 4] = 1.0 + 1e-6
        with self.assertRaises(UsageError) as ctx:
            ObservationSequence(frames, np.zeros(2, dtype=np.int64))
        self.assertIn("[0, 1]", str(ctx.exception))
        with self.assertRaises(UsageError):
            ObservationSequence(-frames, np.zeros(2, dtype=np.int64))

    def test_shapes(self):
        with self.assertRaises(UsageError):
            ObservationSequence(np.zeros((2, 14, 14)), np.zeros(2, dtype=np.int64))
        with self.assertRaises(UsageError) as ctx:
            ObservationSequence(np.zeros((2, 1, 14, 14)), np.zeros(3, dtype=np.int64))
        self.assertIn("actions", str(ctx.exception))
        seq = ObservationSequence(np.ones((2, 1, 14, 14)), np.zeros(2, dtype=np.int64))
        assert_array_equal(seq.rewards, 0.0)


def run_tests():
    """Run all tests and print results."""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    suite.addTests(loader.loadTestsFromTestCase(TestBuildGraph))
    suite.addTests(loader.loadTestsFromTestCase(TestRandomWalkMask))
    suite.addTests(loader.loadTestsFromTestCase(TestApplyMask))
    suite.addTests(loader.loadTestsFromTestCase(TestObservationSequence))

    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)

    print("\n" + "=" * 70)
    print("Cube Graph and Masking Tests - Summary")
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
