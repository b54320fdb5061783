from unittest import TestCase

import numpy as np

from core.exceptions import ConfigurationError, DimensionError
from learning.autograd import Tensor
from learning.losses import (blockwise_mse_loss, ce_loss, kl_distill_loss,
                             total_loss, volume_regularizer)
from learning.models import LossKind, TrainConfig
from learning.optim import AdamWState, learning_rate, optimizer_step


class DistillationLossTests(TestCase):

    def test_kl_examples(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((2, 5, 7))
        cases = {
            'identical': (logits, logits, 1.0, 0.0),
            'per-position shift': (
                logits, logits + rng.standard_normal((2, 5, 1)), 1.0, 0.0
            ),
            'two classes': (
                np.zeros((1, 2)),
                np.array([[np.log(3.0), -np.log(3.0)]]),
                1.0,
                0.5 * np.log(0.5 / 0.9) + 0.5 * np.log(0.5 / 0.1),
            ),
        }
        for name, (teacher, student, tau, expected) in cases.items():
            with self.subTest(case=name):
                value = float(kl_distill_loss(teacher, student, tau).data)
                self.assertAlmostEqual(value, expected, places=10)

    def test_kl_flattens_with_temperature(self):
        rng = np.random.default_rng(1)
        teacher, student = rng.standard_normal((2, 4, 9))
        values = [
            float(kl_distill_loss(teacher, student, tau).data)
            for tau in (1.0, 10.0, 1e4)
        ]
        self.assertGreater(values[0], values[1])
        self.assertLess(values[2], 1e-6)
        self.assertTrue(all(value >= 0 for value in values))

    def test_kl_gradient_is_probability_difference(self):
        teacher = np.array([[0.0, 1.0, 2.0]])
        leaf = Tensor(np.array([[1.0, 0.0, -1.0]]), requires_grad=True)
        kl_distill_loss(teacher, leaf).backward()
        p = np.exp(teacher) / np.exp(teacher).sum()
        q = np.exp(leaf.data) / np.exp(leaf.data).sum()
        np.testing.assert_allclose(leaf.grad, q - p, atol=1e-12)

    def test_ce_examples(self):
        targets = np.array([[3, 1]])
        confident = np.full((1, 2, 8), -50.0)
        confident[0, 0, 3] = confident[0, 1, 1] = 50.0
        self.assertLess(float(ce_loss(confident, targets).data), 1e-12)
        uniform = float(ce_loss(np.zeros((1, 4, 256)),
                                np.zeros((1, 4), dtype=int)).data)
        self.assertAlmostEqual(uniform, np.log(256), places=12)

    def test_ce_ignores_non_target_order(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((1, 1, 6))
        permuted = logits.copy()
        permuted[0, 0, 1:] = permuted[0, 0, 1:][::-1]
        targets = np.zeros((1, 1), dtype=int)
        self.assertAlmostEqual(
            float(ce_loss(logits, targets).data),
            float(ce_loss(permuted, targets).data),
            places=12,
        )

    def test_blockwise_mse(self):
        rng = np.random.default_rng(3)
        teacher = [rng.standard_normal((2, 3, 4)) for _ in range(4)]
        shifted = [block.copy() for block in teacher]
        shifted[2] = shifted[2] + 0.5
        self.assertEqual(float(blockwise_mse_loss(teacher, teacher).data), 0)
        self.assertAlmostEqual(
            float(blockwise_mse_loss(teacher, shifted).data), 0.25 / 4
        )

    def test_shape_errors(self):
        cases = {
            'kl': lambda: kl_distill_loss(np.zeros((2, 3)), np.zeros((3, 3))),
            'ce target': lambda: ce_loss(np.zeros((1, 2, 4)),
                                         np.array([[0, 4]])),
            'ce shape': lambda: ce_loss(np.zeros((1, 2, 4)),
                                        np.array([0, 1])),
            'block count': lambda: blockwise_mse_loss(
                [np.zeros(3)], [np.zeros(3)] * 2
            ),
        }
        for name, call in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(DimensionError):
                    call()


class RegularizedObjectiveTests(TestCase):

    def test_total_loss(self):
        cases = {
            'no regularization': (1.0, [4.0], 0.0, 1.0),
            'weighted': (1.0, [4.0], 0.5, 3.0),
            'volume preserving': (2.0, [0.0, 0.0], 10.0, 2.0),
        }
        for name, (dist, regs, lam, expected) in cases.items():
            with self.subTest(case=name):
                self.assertEqual(total_loss(dist, regs, lam), expected)

    def test_volume_gradient(self):
        log_s = Tensor(np.array([1.0, 1.0]), requires_grad=True)
        volume_regularizer(log_s).backward()
        np.testing.assert_allclose(log_s.grad, [4.0, 4.0])


class ScheduleTests(TestCase):

    def test_warmup_then_cosine(self):
        cfg = TrainConfig(steps=100, base_lr=1e-4)
        rates = np.array([learning_rate(step, cfg) for step in range(100)])
        self.assertAlmostEqual(rates[0], 1e-5, places=15)
        self.assertAlmostEqual(rates[10], 1e-4, places=15)
        self.assertLess(rates[-1], 1e-4 * 1e-3)
        self.assertTrue(np.all(np.diff(rates[:11]) >= 0))
        self.assertTrue(np.all(np.diff(rates[10:]) <= 0))

    def test_config_validation(self):
        cases = {
            'temperature': {'temperature': 0.0},
            'lambda': {'volume_lambda': -1.0},
            'steps': {'steps': -1},
            'loss': {'loss': 'hinge'},
        }
        for name, kwargs in cases.items():
            with self.subTest(field=name):
                with self.assertRaises(ConfigurationError):
                    TrainConfig(**kwargs)
        self.assertIs(TrainConfig(loss='BLOCK_MSE').loss, LossKind.BLOCK_MSE)

    def test_frozen_names(self):
        cfg = TrainConfig(freeze={'log_s', 't1.v'})
        self.assertTrue(cfg.is_frozen('t2.1.log_s'))
        self.assertTrue(cfg.is_frozen('t1.v'))
        self.assertFalse(cfg.is_frozen('t2.0.v'))


class AdamWTests(TestCase):

    def test_zero_gradient_without_decay(self):
        cfg = TrainConfig(steps=10, weight_decay=0.0)
        params = {'w': np.arange(3.0)}
        updated = optimizer_step(
            params, {'w': np.zeros(3)}, AdamWState(), 0, cfg
        )
        np.testing.assert_array_equal(updated['w'], params['w'])

    def test_descends_against_gradient(self):
        cfg = TrainConfig(steps=50, base_lr=1e-2, weight_decay=0.0)
        params, state = {'w': np.zeros(2)}, AdamWState()
        for step in range(50):
            params = optimizer_step(
                params, {'w': np.array([1.0, -2.0])}, state, step, cfg
            )
        self.assertLess(params['w'][0], 0)
        self.assertGreater(params['w'][1], 0)

    def test_decoupled_decay(self):
        cfg = TrainConfig(steps=10, base_lr=1e-2, weight_decay=0.5,
                          warmup_fraction=0.0)
        updated = optimizer_step(
            {'w': np.ones(2)}, {'w': np.zeros(2)}, AdamWState(), 0, cfg
        )
        np.testing.assert_allclose(updated['w'], 1.0 - 1e-2 * 0.5)
