from unittest import TestCase

import numpy as np

from core.exceptions import DimensionError, NonFiniteError
from mxaffine import settings
from mxquant.formats import element_format, mx_config, worst_element_error
from mxquant.metrics import transformation_mse
from mxquant.quantizer import (block_scale_exponent, mx_dequantize,
                               mx_quantize, quantize_dequantize,
                               quantize_element)

FORMATS = ('FP4_E2M1', 'INT4', 'FP8_E4M3')


class ScaleTests(TestCase):

    def test_block_scale_exponent_examples(self):
        fp4 = element_format('FP4_E2M1')
        cases = {
            'max six': ([6.0, -1.0], 0),
            'power of two': ([1.0, 0.25], -2),
            'zero block': ([0.0, 0.0], settings.E_MIN),
        }
        for name, (block, expected) in cases.items():
            with self.subTest(name=name):
                self.assertEqual(
                    int(block_scale_exponent(np.array(block), fp4)), expected
                )

    def test_scaled_maximum_range(self):
        rng = np.random.default_rng(0)
        for name in FORMATS:
            fmt = element_format(name)
            blocks = rng.standard_normal((200, 16)) * 10.0 ** rng.uniform(
                -3, 3, size=(200, 1)
            )
            exponents = block_scale_exponent(blocks, fmt)
            ratio = np.max(np.abs(blocks), axis=1) / 2.0 ** exponents
            with self.subTest(name=name):
                self.assertTrue(np.all(ratio >= 2.0 ** fmt.r_max))
                self.assertTrue(np.all(ratio < 2.0 ** (fmt.r_max + 1)))


class ElementTests(TestCase):

    def test_quantize_element_examples(self):
        fp4 = element_format('FP4_E2M1')
        cases = {
            4.5: 4.0,
            5.0: 4.0,
            100.0: 6.0,
            2.5: 2.0,
            0.25: 0.0,
            0.75: 1.0,
            -5.0: -4.0,
        }
        for z, expected in cases.items():
            with self.subTest(z=z):
                self.assertEqual(fp4.grid[quantize_element(z, fp4)], expected)

    def test_int4_ties_go_to_even(self):
        int4 = element_format('INT4')
        z = np.array([0.5, 1.5, 2.5, -3.5, 6.5])
        np.testing.assert_array_equal(
            int4.grid[quantize_element(z, int4)], [0, 2, 2, -4, 6]
        )

    def test_sign_symmetry(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 32)) * 3.0
        for name in FORMATS:
            config = mx_config(name, 8)
            with self.subTest(name=name):
                np.testing.assert_array_equal(
                    quantize_dequantize(-x, config),
                    -quantize_dequantize(x, config),
                )


class MxQuantizeTests(TestCase):

    def test_mx_quantize_examples(self):
        cases = {
            'fp4 rounding': (
                'FP4_E2M1', [6.0, 4.5, 5.0, 4.5], [6.0, 4.0, 4.0, 4.0]
            ),
            'int4 exact': (
                'INT4', [7.0, -3.0, 1.0, 0.0], [7.0, -3.0, 1.0, 0.0]
            ),
            'zero vector': ('FP4_E2M1', [0.0] * 4, [0.0] * 4),
        }
        for name, (kind, x, expected) in cases.items():
            with self.subTest(name=name):
                quantized = mx_quantize(np.array(x), mx_config(kind, 4))
                np.testing.assert_array_equal(
                    mx_dequantize(quantized), expected
                )

    def test_codes_index_the_grid(self):
        config = mx_config('FP4_E2M1', 4)
        quantized = mx_quantize(np.array([6.0, 4.5, 5.0, 4.5]), config)
        self.assertEqual(quantized.scale_exponents.tolist(), [0])
        self.assertTrue(np.all(quantized.codes >= 0))
        self.assertTrue(np.all(quantized.codes < config.format.grid.size))

    def test_length_not_divisible(self):
        with self.assertRaises(DimensionError):
            mx_quantize(np.ones(6), mx_config('FP4_E2M1', 4))

    def test_non_finite_input(self):
        with self.assertRaises(NonFiniteError):
            mx_quantize(np.array([1.0, np.nan]), mx_config('FP4_E2M1', 2))

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        for seed in range(3):
            x = rng.standard_normal((4, 64)) * (seed + 1)
            for name in FORMATS:
                config = mx_config(name, 32)
                once = quantize_dequantize(x, config)
                with self.subTest(seed=seed, name=name):
                    np.testing.assert_array_equal(
                        quantize_dequantize(once, config), once
                    )

    def test_per_element_error_bound(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((50, 64)) * 5.0
        x[:, 0] *= 40.0
        for name in FORMATS:
            config = mx_config(name, 16)
            quantized = mx_quantize(x, config)
            scales = np.repeat(
                2.0 ** quantized.scale_exponents, config.block_size, axis=-1
            )
            error = np.abs(x - mx_dequantize(quantized))
            with self.subTest(name=name):
                self.assertTrue(np.all(
                    error <= scales * worst_element_error(config.format)
                ))

    def test_saturation_mask(self):
        config = mx_config('FP4_E2M1', 4)
        restored, inside = quantize_dequantize(
            np.array([7.5, 1.0, -7.9, 6.0]), config, return_mask=True
        )
        np.testing.assert_array_equal(restored, [6.0, 1.0, -6.0, 6.0])
        np.testing.assert_array_equal(inside, [False, True, False, True])


class TransformationMseTests(TestCase):

    def test_identity_examples(self):
        config = mx_config('FP4_E2M1', 2)
        report = transformation_mse(None, config, np.array([[10, 1, .5, .5]]))
        self.assertEqual(report.mse, 1.0)
        np.testing.assert_array_equal(report.per_block_mse, [2.0, 0.0])
        self.assertEqual(report.sample_count, 1)

    def test_grid_aligned_samples(self):
        config = mx_config('INT4', 4)
        samples = np.array([[7.0, -3.0, 1.0, 0.0], [4.0, 2.0, 2.0, -1.0]])
        self.assertEqual(transformation_mse(None, config, samples).mse, 0.0)

    def test_mse_is_mean_of_block_mse(self):
        rng = np.random.default_rng(4)
        report = transformation_mse(
            None, mx_config('FP4_E2M1', 8), rng.standard_normal((30, 32))
        )
        self.assertGreater(report.mse, 0.0)
        self.assertAlmostEqual(report.mse, report.per_block_mse.mean())
        self.assertTrue(np.all(report.per_block_mse >= 0))
