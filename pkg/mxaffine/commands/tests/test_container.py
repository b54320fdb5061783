import shutil
import struct
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from commands.calibration import (calibration_tensors, generate_calibration,
                                  outlier_channels)
from commands.container import (decode_container, encode_container,
                                read_container, write_container)
from commands.models import CalibrationKind, SyntheticCalibSpec
from core.exceptions import ConfigurationError, ContainerFormatError
from toymodel.models import ModelConfig
from toymodel.weights import init_weights

HEADER = b'MXTD' + struct.pack('<HI', 1, 1)


class ContainerTests(TestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.directory = Path(tempfile.mkdtemp())

    @classmethod
    def tearDownClass(cls):
        super().tearDownClass()
        shutil.rmtree(cls.directory, ignore_errors=True)

    def test_empty_container(self):
        data = encode_container({})
        self.assertEqual(data, b'MXTD' + struct.pack('<HI', 1, 0))
        self.assertEqual(decode_container(data), {})

    def test_single_float32_layout(self):
        values = np.array([1, 2, 3], dtype=np.float32)
        data = encode_container({'x': values})
        expected = (
            HEADER + struct.pack('<H', 1) + b'x' + struct.pack('<BB', 1, 1)
            + struct.pack('<Q', 3) + values.tobytes()
        )
        self.assertEqual(data, expected)
        decoded = decode_container(data)['x']
        self.assertEqual(decoded.dtype, np.float32)
        self.assertEqual(decoded.tobytes(), values.tobytes())

    def test_bitwise_round_trip(self):
        tensors = {
            'weights': np.random.default_rng(0).standard_normal((3, 4)),
            'special': np.array([np.nan, -0.0, np.inf], dtype=np.float32),
            'tokens': np.arange(6, dtype=np.uint32).reshape(2, 3),
            'scalar': np.array(2.5),
            'empty': np.zeros((0, 3)),
            'ünïcode': np.ones(2),
        }
        path = self.directory / 'round_trip.mxtd'
        write_container(path, tensors)
        restored = read_container(path)
        self.assertEqual(list(restored), list(tensors))
        for name, array in tensors.items():
            with self.subTest(name=name):
                self.assertEqual(restored[name].dtype, array.dtype)
                self.assertEqual(restored[name].shape, array.shape)
                self.assertEqual(restored[name].tobytes(), array.tobytes())

    def test_malformed_files(self):
        good = encode_container({'x': np.array([1.0, 2.0])})
        dtype_offset = len(HEADER) + 2 + 1
        bad_dtype = bytearray(good)
        bad_dtype[dtype_offset] = 9
        cases = {
            'magic': b'MXTX' + good[4:],
            'version': b'MXTD' + struct.pack('<H', 2) + good[6:],
            'truncated payload': good[:-1],
            'truncated header': good[:5],
            'dtype code': bytes(bad_dtype),
            'trailing bytes': good + b'\x00',
            'duplicate name': (
                b'MXTD' + struct.pack('<HI', 1, 2) + good[len(HEADER):] * 2
            ),
            'shape product overflows': (
                HEADER + struct.pack('<H', 1) + b'w'
                + struct.pack('<BB', 1, 2) + struct.pack('<2Q', 2**32, 2**32)
            ),
            'shape beyond payload': (
                HEADER + struct.pack('<H', 1) + b'w'
                + struct.pack('<BB', 2, 1) + struct.pack('<Q', 2**40)
                + b'\x00' * 8
            ),
        }
        for name, data in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(ContainerFormatError):
                    decode_container(data)

    def test_unsupported_dtype(self):
        with self.assertRaises(ContainerFormatError):
            encode_container({'ids': np.arange(3, dtype=np.int64)})

    def test_missing_file(self):
        with self.assertRaises(ContainerFormatError):
            read_container(self.directory / 'absent.mxtd')


class CalibrationTests(TestCase):

    def test_same_seed_same_samples(self):
        specs = {
            'gaussian': SyntheticCalibSpec(kind='gaussian', d=8,
                                           n_samples=5, seed=3),
            'outliers': SyntheticCalibSpec(
                kind='gaussian_outlier_channels', d=8, n_samples=5,
                outlier_channel_count=2, outlier_scale=4.0, seed=3,
            ),
            'uniform tokens': SyntheticCalibSpec(
                vocab=16, seq_len=4, n_samples=5, sampled=False, seed=3,
            ),
        }
        for name, spec in specs.items():
            with self.subTest(spec=name):
                np.testing.assert_array_equal(
                    generate_calibration(spec), generate_calibration(spec)
                )

    def test_unit_outlier_scale_is_plain_gaussian(self):
        plain = SyntheticCalibSpec(kind='gaussian', d=16, n_samples=10,
                                   seed=5)
        scaled = SyntheticCalibSpec(kind='gaussian_outlier_channels', d=16,
                                    n_samples=10, outlier_channel_count=4,
                                    outlier_scale=1.0, seed=5)
        np.testing.assert_array_equal(generate_calibration(plain),
                                      generate_calibration(scaled))

    def test_outlier_channel_std_ratio(self):
        spec = SyntheticCalibSpec(
            kind='gaussian_outlier_channels', d=64, n_samples=4000,
            outlier_channel_count=4, outlier_scale=20.0, seed=0,
        )
        samples = generate_calibration(spec)
        channels = outlier_channels(spec)
        self.assertEqual(len(set(channels.tolist())), 4)
        others = np.setdiff1d(np.arange(64), channels)
        std = samples.std(axis=0)
        ratio = std[channels].mean() / std[others].mean()
        self.assertAlmostEqual(ratio, 20.0, delta=1.0)

    def test_sampled_tokens(self):
        config = ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32,
                             vocab_size=32, max_seq_len=8,
                             outlier_channels=(3,))
        weights = init_weights(config, seed=0)
        spec = SyntheticCalibSpec(vocab=32, seq_len=6, n_samples=7, seed=1)
        tokens = generate_calibration(spec, weights, config)
        self.assertEqual(tokens.shape, (7, 6))
        self.assertTrue(np.issubdtype(tokens.dtype, np.integer))
        self.assertTrue(np.all((tokens >= 0) & (tokens < 32)))
        np.testing.assert_array_equal(
            tokens, generate_calibration(spec, weights, config)
        )
        with self.assertRaises(ConfigurationError):
            generate_calibration(spec)

    def test_invalid_specs(self):
        cases = {
            'kind': {'kind': 'images'},
            'too many channels': {'d': 4, 'outlier_channel_count': 5},
            'scale': {'outlier_scale': 0.0},
            'samples': {'n_samples': 0},
        }
        for name, options in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(ConfigurationError):
                    SyntheticCalibSpec(**options)

    def test_calibration_tensors(self):
        tokens = SyntheticCalibSpec(vocab=16, seq_len=4, n_samples=3,
                                    sampled=False)
        stored = calibration_tensors(tokens, generate_calibration(tokens))
        self.assertEqual(stored['tokens'].dtype, np.uint32)
        outliers = SyntheticCalibSpec(
            kind=CalibrationKind.GAUSSIAN_OUTLIER_CHANNELS, d=8,
            n_samples=3, outlier_channel_count=2, outlier_scale=3.0,
        )
        stored = calibration_tensors(outliers,
                                     generate_calibration(outliers))
        self.assertEqual(set(stored), {'samples', 'outlier_channels'})
        np.testing.assert_array_equal(stored['outlier_channels'],
                                      outlier_channels(outliers))
