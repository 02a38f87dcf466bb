#!/usr/bin/env python3
"""
Unit tests for the autodiff tensor substrate, the Adam optimizer and the
finite-difference gradient checker.

Run with:
    python3 test_tensor.py
"""

import sys
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from mooss.core import tensor as T
from mooss.core.gradcheck import check_operators, grad_check, relative_error
from mooss.core.optim import Adam, ParamGroup, adam_step, grad_global_norm
from mooss.core.tensor import Parameter, Tensor, no_grad
from utils.validation import ConfigError, NumericalError, UsageError


class TestForwardOps(unittest.TestCase):
    """Operator outputs on hand-checkable inputs."""

    def test_relu(self):
        assert_array_equal(T.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_softmax_symmetric(self):
        assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_softmax_shift_invariant(self):
        x = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 7.0]])
        assert_allclose(T.softmax(Tensor(x)).data, T.softmax(Tensor(x + 1000.0)).data, atol=1e-15)

    def test_identity_conv(self):
        """A 1x1 identity kernel with stride 1 returns the image unchanged."""
        image = np.random.default_rng(0).random((2, 3, 5, 4))
        kernel = np.eye(3).reshape(3, 3, 1, 1)
        assert_array_equal(T.conv2d(Tensor(image), Tensor(kernel), stride=1).data, image)

    def test_strided_conv_matches_loop(self):
        rng = np.random.default_rng(1)
        image = rng.normal(size=(1, 2, 7, 7))
        kernel = rng.normal(size=(3, 2, 3, 3))
        out = T.conv2d(Tensor(image), Tensor(kernel), stride=2).data
        self.assertEqual(out.shape, (1, 3, 3, 3))
        for o in range(3):
            for r in range(3):
                for c in range(3):
                    patch = image[0, :, 2 * r:2 * r + 3, 2 * c:2 * c + 3]
                    self.assertAlmostEqual(out[0, o, r, c], float(np.sum(patch * kernel[o])), places=12)

    def test_layer_norm_statistics(self):
        x = np.random.default_rng(2).normal(size=(4, 6)) * 3.0 + 1.0
        out = T.layer_norm(Tensor(x)).data
        assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_masked_logsumexp_empty_row_is_zero(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        mask = np.array([[False, False], [True, False]])
        assert_allclose(T.logsumexp(x, axis=-1, mask=mask).data, [0.0, 3.0])

    def test_causal_attention_ignores_future(self):
        rng = np.random.default_rng(3)
        q, k, v = (rng.normal(size=(1, 4, 2)) for _ in range(3))
        base = T.scaled_dot_product_attention(q, k, v, T.causal_mask(4)).data
        v2 = v.copy()
        v2[0, 3] += 5.0
        changed = T.scaled_dot_product_attention(q, k, v2, T.causal_mask(4)).data
        assert_array_equal(base[0, :3], changed[0, :3])
        self.assertFalse(np.allclose(base[0, 3], changed[0, 3]))

    def test_sinusoidal_table_first_row(self):
        table = T.sinusoidal_table(5, 6)
        assert_allclose(table[0, 0::2], 0.0)
        assert_allclose(table[0, 1::2], 1.0)

    def test_shape_mismatch_is_config_error(self):
        with self.assertRaises(ConfigError) as ctx:
            T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
        self.assertIn("(2, 3)", str(ctx.exception))
        self.assertIn("(4,)", str(ctx.exception))
        with self.assertRaises(ConfigError):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_non_finite_output_names_operator(self):
        with self.assertRaises(NumericalError) as ctx:
            T.log(Tensor([0.0, 1.0]))
        self.assertIn("log", str(ctx.exception))

    def test_forward_is_pure(self):
        rng = np.random.default_rng(4)
        x, w = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(4, 3, 3, 3))
        first = T.conv2d(Tensor(x), Tensor(w), stride=2).data
        second = T.conv2d(Tensor(x), Tensor(w), stride=2).data
        assert_array_equal(first, second)


class TestBackward(unittest.TestCase):
    """Gradient accumulation rules."""

    def test_sum_gradient(self):
        p = Parameter(np.array([1.0, -2.0, 3.0]), 'p')
        T.tensor_sum(p).backward()
        assert_array_equal(p.grad, [1.0, 1.0, 1.0])

    def test_quadratic_gradient(self):
        p = Parameter(np.array([1.0, 2.0]), 'p')
        (p * p).sum().backward()
        assert_array_equal(p.grad, [2.0, 4.0])

    def test_backward_is_additive(self):
        """Two backward passes without zero_grad double every entry exactly."""
        rng = np.random.default_rng(5)
        w = Parameter(rng.normal(size=(3, 2)), 'w')
        x = rng.normal(size=(4, 3))

        def loss():
            return T.tensor_sum(T.relu(T.matmul(x, w)) * 1.5)

        loss().backward()
        once = w.grad.copy()
        loss().backward()
        assert_array_equal(w.grad, 2.0 * once)

    def test_zero_grad(self):
        p = Parameter(np.ones(3), 'p')
        T.tensor_sum(p * 3.0).backward()
        p.zero_grad()
        assert_array_equal(p.grad, np.zeros(3))

    def test_shared_subexpression(self):
        p = Parameter(np.array([3.0]), 'p')
        y = p * p
        (y + y).sum().backward()
        assert_array_equal(p.grad, [12.0])

    def test_non_scalar_loss_rejected(self):
        p = Parameter(np.ones(3), 'p')
        with self.assertRaises(UsageError):
            (p * 2.0).backward()

    def test_no_trace_rejected(self):
        with self.assertRaises(UsageError):
            Tensor(np.ones(3)).sum().backward()

    def test_no_grad_records_nothing(self):
        p = Parameter(np.ones(3), 'p')
        with no_grad():
            out = T.tensor_sum(p * 2.0)
        self.assertFalse(out.requires_grad)

    def test_frozen_parameter_gets_no_grad(self):
        frozen = Parameter(np.ones(2), 'frozen', requires_grad=False)
        live = Parameter(np.ones(2), 'live')
        T.tensor_sum(frozen * live).backward()
        self.assertIsNone(frozen.grad)
        assert_array_equal(live.grad, [1.0, 1.0])


class TestAdam(unittest.TestCase):

    def test_zero_gradient_leaves_value(self):
        p = Parameter(np.array([0.7]), 'p')
        adam_step([p], lr=0.1)
        assert_array_equal(p.data, [0.7])

    def test_first_step_moves_by_lr(self):
        """Bias-corrected first moment equals the gradient on step one."""
        p = Parameter(np.array([1.0]), 'p')
        p.grad[:] = 1.0
        optimizer = adam_step([p], lr=0.1)
        assert_allclose(p.data, [0.9], atol=1e-7)
        self.assertEqual(optimizer.step_count, 1)

    def test_identical_params_identical_trajectories(self):
        a, b = Parameter(np.array([0.3, -1.0]), 'a'), Parameter(np.array([0.3, -1.0]), 'b')
        optimizer = Adam([ParamGroup('all', [a, b], 0.05)])
        for step in range(5):
            for p in (a, b):
                p.grad[:] = np.sin(p.data + step)
            optimizer.step()
        assert_array_equal(a.data, b.data)

    def test_continue_with_returned_optimizer(self):
        p = Parameter(np.array([1.0]), 'p')
        p.grad[:] = 1.0
        optimizer = adam_step([p], lr=0.1)
        self.assertIs(adam_step([p], lr=0.1, optimizer=optimizer), optimizer)
        self.assertEqual(optimizer.step_count, 2)

    def test_conflicting_arguments_with_optimizer(self):
        p, q = Parameter(np.array([1.0]), 'p'), Parameter(np.array([2.0]), 'q')
        optimizer = adam_step([p], lr=0.1)
        with self.assertRaises(UsageError):
            adam_step([q], lr=0.1, optimizer=optimizer)
        with self.assertRaises(UsageError):
            adam_step([p], lr=0.5, optimizer=optimizer)
        self.assertEqual(optimizer.step_count, 1)

    def test_invalid_lr(self):
        with self.assertRaises(ConfigError):
            adam_step([Parameter(np.ones(1), 'p')], lr=0.0)

    def test_frozen_parameter_rejected(self):
        with self.assertRaises(ConfigError):
            Adam([ParamGroup('g', [Parameter(np.ones(1), 'p', requires_grad=False)], 0.1)])

    def test_duplicate_parameter_rejected(self):
        p = Parameter(np.ones(1), 'p')
        with self.assertRaises(ConfigError):
            Adam([ParamGroup('a', [p], 0.1), ParamGroup('b', [p], 0.1)])

    def test_warmup_ramp(self):
        group = ParamGroup('g', [], 1.0, warmup_steps=4)
        self.assertAlmostEqual(group.lr_at(1), 0.25)
        self.assertAlmostEqual(group.lr_at(4), 1.0)
        self.assertAlmostEqual(group.lr_at(10), 1.0)

    def test_grad_global_norm(self):
        a, b = Parameter(np.zeros(1), 'a'), Parameter(np.zeros(1), 'b')
        a.grad[:], b.grad[:] = 3.0, 4.0
        self.assertAlmostEqual(grad_global_norm([a, b]), 5.0)


class TestGradCheck(unittest.TestCase):

    def test_linear_layer(self):
        rng = np.random.default_rng(6)
        weight = Parameter(rng.normal(size=(4, 4)), 'weight')
        bias = Parameter(rng.normal(size=(4,)), 'bias')
        x = rng.normal(size=(3, 4))
        target = rng.normal(size=(3, 4))

        def closure():
            diff = T.linear(x, weight, bias) - target
            return T.tensor_sum(diff * diff)

        report = grad_check(closure, [weight, bias])
        self.assertTrue(report.passed)
        self.assertLessEqual(report.max_rel_err, 1e-6)

    def test_frozen_inputs_excluded(self):
        w = Parameter(np.ones(3), 'w')
        frozen = Parameter(np.ones(3), 'frozen', requires_grad=False)
        report = grad_check(lambda: T.tensor_sum(w * frozen * w), [w, frozen])
        self.assertEqual(list(report.by_name()), ['w'])

    def test_wrong_gradient_reported(self):
        """An operator with a broken adjoint shows up as a failure."""
        w = Parameter(np.array([0.5, 1.5]), 'w')

        def closure():
            out = T.mul(w, w)
            out._backward = lambda g: (g * w.data, g * w.data * 0.0)
            return T.tensor_sum(out)

        report = grad_check(closure, [w])
        self.assertFalse(report.passed)
        self.assertEqual(report.failures[0].name, 'w')

    def test_relu_kink_skipped(self):
        w = Parameter(np.array([0.0, 1.0]), 'w')
        report = grad_check(lambda: T.tensor_sum(T.relu(w)), [w])
        self.assertEqual(report.by_name()['w'].kinks_skipped, 1)
        self.assertTrue(report.passed)

    def test_relative_error_floor(self):
        self.assertAlmostEqual(relative_error(0.0, 1e-6), 1e-2)
        self.assertAlmostEqual(relative_error(2.0, 1.0), 0.5)

    def test_every_registered_operator(self):
        worst = check_operators(seeds=range(10))
        self.assertEqual(set(worst), set(T.REGISTERED_OPS))
        for name, err in worst.items():
            self.assertLessEqual(err, 1e-4, f"operator {name}")


def run_tests():
    """Run all tests and print results."""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    suite.addTests(loader.loadTestsFromTestCase(TestForwardOps))
    suite.addTests(loader.loadTestsFromTestCase(TestBackward))
    suite.addTests(loader.loadTestsFromTestCase(TestAdam))
    suite.addTests(loader.loadTestsFromTestCase(TestGradCheck))

    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)

    print("\n" + "=" * 70)
    print("Tensor / Optimizer / Gradient Check Tests - Summary")
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
