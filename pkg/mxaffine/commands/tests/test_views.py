import csv
import json
import shutil
import tempfile
from pathlib import Path
from unittest import TestCase, mock

import numpy as np

from bounds.models import ScenarioReport
from commands import views
from commands.container import read_container
from commands.forms import ExperimentForm
from commands.models import AblationMethod
from core.exceptions import (ConfigurationError, DimensionError,
                             VerificationError)
from learning.parameters import LearnableTransforms
from mxaffine import settings
from mxquant.metrics import transformation_mse
from toymodel.forward import capture_transformed
from toymodel.weights import weights_from_tensors

from .utils import small_config


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as handle:
        return list(csv.DictReader(handle))


class ViewTestCase(TestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.directory = Path(tempfile.mkdtemp())

    @classmethod
    def tearDownClass(cls):
        super().tearDownClass()
        shutil.rmtree(cls.directory, ignore_errors=True)

    def config(self, **sections):
        return ExperimentForm(small_config(**sections)).save()

    def out(self, name):
        return self.directory / name


class LearnViewTests(ViewTestCase):

    def test_zero_steps_writes_initialization(self):
        config = self.config(train={'steps': 0})
        result = views.cmd_learn(config, self.out('zero'))
        expected = LearnableTransforms.initialize(
            config.model, config.transform.scheme,
            config.transform.parameterization, seed=config.seed,
            t3_block=config.mx.block_size,
        ).to_tensors()
        stored = read_container(result['checkpoint'])
        self.assertEqual(set(stored), set(expected))
        for name, array in expected.items():
            with self.subTest(tensor=name):
                np.testing.assert_array_equal(stored[name], array)
        self.assertEqual(read_rows(result['trace']), [])
        self.assertIsNone(result['final_loss'])

    def test_identity_without_quantization(self):
        config = self.config(transform={'init_scheme': 'Identity'},
                             mx={'sites': []})
        result = views.cmd_learn(config, self.out('identity'))
        rows = read_rows(result['trace'])
        self.assertEqual(len(rows), 3)
        for row in rows:
            self.assertLessEqual(float(row['loss_total']), 1e-8)

    def test_trace_columns(self):
        result = views.cmd_learn(self.config(), self.out('trace'))
        with open(result['trace'], encoding='utf-8') as handle:
            header = handle.readline().strip()
        self.assertEqual(header, ','.join(settings.TRACE_COLUMNS))
        steps = [int(row['step']) for row in read_rows(result['trace'])]
        self.assertEqual(steps, [0, 1, 2])

    def test_deterministic(self):
        config = self.config()
        first = views.cmd_learn(config, self.out('first'))
        second = views.cmd_learn(config, self.out('second'))
        for key in ('checkpoint', 'trace'):
            with self.subTest(artifact=key):
                self.assertEqual(Path(first[key]).read_bytes(),
                                 Path(second[key]).read_bytes())


class QuantizeViewTests(ViewTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        config = ExperimentForm(small_config()).save()
        cls.checkpoint = views.cmd_learn(
            config, cls.directory / 'learned'
        )['checkpoint']

    def test_metrics_report(self):
        config = self.config()
        report = views.cmd_quantize(config, self.out('gptq'),
                                    checkpoint=self.checkpoint)
        stored = json.loads(
            (self.out('gptq') / views.METRICS_FILE).read_text('utf-8')
        )
        self.assertEqual(stored['schema_version'], 1)
        self.assertEqual(stored['notice'], settings.SYNTHETIC_DATA_NOTICE)
        self.assertEqual(stored['method'], 'GPTQ')
        self.assertEqual(len(stored['layers']),
                         len(views.LINEAR_INPUTS) * config.model.n_layers)
        self.assertLessEqual(stored['fold_deviation'],
                             settings.FOLD_EQUIVALENCE_TOL)
        self.assertEqual(set(stored['activation_mse']),
                         set(views.LINEAR_INPUTS.values()))
        self.assertGreaterEqual(stored['kl_to_teacher'], 0.0)
        self.assertAlmostEqual(stored['weight_mse'], report['weight_mse'])
        tensors = read_container(self.out('gptq') / views.MODEL_FILE)
        quantized = weights_from_tensors(tensors, config.model)
        self.assertEqual(quantized.online_hadamard_block, 0)

    def test_gptq_beats_rtn_on_outputs(self):
        reports = {
            method: views.cmd_quantize(
                self.config(quantize={'method': method}),
                self.out(method), checkpoint=self.checkpoint,
            )
            for method in ('rtn', 'gptq')
        }
        self.assertLessEqual(reports['gptq']['output_mse'],
                             reports['rtn']['output_mse'])

    def test_online_hadamard(self):
        config = self.config(transform={'t3_enabled': True})
        checkpoint = views.cmd_learn(
            self.config(transform={'t3_enabled': True},
                        train={'steps': 0}),
            self.out('t3'),
        )['checkpoint']
        views.cmd_quantize(config, self.out('t3_quantized'),
                           checkpoint=checkpoint)
        tensors = read_container(self.out('t3_quantized') / views.MODEL_FILE)
        self.assertEqual(tensors['online_hadamard_block'][0], 8)

    def test_missing_checkpoint(self):
        with self.assertRaises(ConfigurationError):
            views.cmd_quantize(self.config(), self.out('missing'),
                               checkpoint=str(self.out('absent.mxtd')))

    def test_checkpoint_for_another_model(self):
        config = self.config(model={'d_model': 32, 'outlier_channels': [3]},
                             transform={'init_block': 8})
        with self.assertRaises(DimensionError):
            views.cmd_quantize(config, self.out('mismatch'),
                               checkpoint=self.checkpoint)


class AblationViewTests(ViewTestCase):

    def test_one_row_per_method(self):
        methods = ['none', 'hadamard_full', 'hadamard_block',
                   'learned_orthogonal', 'learned_invertible', 'latmix_lu',
                   'latmix_qr']
        result = views.cmd_ablate(self.config(), self.out('ablate'),
                                  methods=methods)
        rows = read_rows(result['table'])
        self.assertEqual([row['method'] for row in rows], methods)
        for row in rows:
            with self.subTest(method=row['method']):
                self.assertGreaterEqual(float(row['activation_mse']), 0.0)
                self.assertGreaterEqual(float(row['kl_to_teacher']), 0.0)
                self.assertEqual(len(row['per_block_mse'].split()), 2)

    def test_activation_mse_on_transformed_inputs(self):
        config = self.config()
        weights, tokens = views._prepare(config)
        evaluation = views.Evaluation(weights, config, tokens)
        rotation = views.ablation_transforms(
            AblationMethod.HADAMARD_FULL, weights, config, tokens
        )
        captured = capture_transformed(
            weights, config.model, rotation, tokens, config.quant_points
        ).qkv_inputs
        inputs = np.concatenate([
            z.reshape(-1, config.model.d_model) for z in captured
        ])
        expected = transformation_mse(None, config.mx, inputs)
        self.assertAlmostEqual(
            evaluation.row(rotation)['activation_mse'], expected.mse,
            delta=1e-6 * expected.mse,
        )

    def test_unknown_method(self):
        with self.assertRaises(ConfigurationError):
            views.cmd_ablate(self.config(), self.out('unknown'),
                             methods=['svd'])

    def test_learned_orthogonal_stays_orthogonal(self):
        config = self.config(transform={'parameterization': 'QR'})
        weights, tokens = views._prepare(config)
        transforms = views.ablation_transforms(
            views.AblationMethod.LEARNED_ORTHOGONAL, weights, config, tokens
        )
        a = transforms.t1.a
        np.testing.assert_allclose(a @ a.T, np.eye(16), atol=1e-10)

    def test_learned_invertible_keeps_zero_shift(self):
        config = self.config(transform={'init_scheme': 'IdentityNoise',
                                        'noise_std': 0.01})
        weights, tokens = views._prepare(config)
        transforms = views.ablation_transforms(
            views.AblationMethod.LEARNED_INVERTIBLE, weights, config, tokens
        )
        np.testing.assert_array_equal(transforms.t1.v, np.zeros(16))

    def test_init_schemes(self):
        result = views.cmd_ablate(
            self.config(), self.out('init'), methods=['none'],
            init_schemes=['Identity', 'BDHadamard', 'FullOrthogonal'],
        )
        rows = read_rows(result['init']['table'])
        self.assertEqual([row['scheme'] for row in rows],
                         ['Identity', 'BDHadamard', 'FullOrthogonal'])


class SweepViewTests(ViewTestCase):

    def test_rows_and_determinism(self):
        config = self.config()
        first = views.cmd_sweep_blocksize(config, self.out('sweep_a'))
        second = views.cmd_sweep_blocksize(config, self.out('sweep_b'))
        self.assertEqual(len(first['rows']), 9)
        self.assertEqual(Path(first['table']).read_bytes(),
                         Path(second['table']).read_bytes())

    def test_single_size(self):
        result = views.cmd_sweep_blocksize(self.config(), self.out('single'),
                                           block_sizes=[8])
        self.assertEqual([row['method'] for row in result['rows']],
                         ['none', 'hadamard_full', 'hadamard_block'])
        self.assertTrue(all(row['monotone'] for row in result['rows']))

    def test_divisibility(self):
        with self.assertRaises(ConfigurationError):
            views.cmd_sweep_blocksize(self.config(), self.out('bad'),
                                      block_sizes=[6])


class BoundsViewTests(ViewTestCase):

    def test_report(self):
        document = views.cmd_verify_bounds(self.config(), self.out('bounds'))
        self.assertTrue(document['holds'])
        self.assertEqual(document['failures'], [])
        stored = json.loads(
            (self.out('bounds') / views.BOUNDS_FILE).read_text('utf-8')
        )
        self.assertEqual(stored['schema_version'], 1)
        self.assertEqual(stored['demo']['transformed'], [6, 4.5, 5, 4.5])
        self.assertEqual(len(stored['theorem']), 3 * 3 * 2)
        self.assertEqual(len(stored['lemma']), 2 * 1 * 2)
        self.assertEqual(stored['proposition']['count'], 50)
        for entry in stored['theorem']:
            self.assertEqual(entry['chain_violations'], 0)

    def test_failures_raise_after_writing(self):
        failing = ScenarioReport(delta=1.0, expected_kl=0.0, expected_tv=0.0,
                                 rhs=0.0, slack=-1.0, holds=False)
        with mock.patch.object(views, 'scenario_batch',
                               return_value=[failing]):
            with self.assertRaises(VerificationError) as raised:
                views.cmd_verify_bounds(self.config(), self.out('failing'))
        self.assertEqual(raised.exception.exit_code, 3)
        self.assertEqual(raised.exception.failures,
                         ['proposition: 1 scenarios'])
        stored = json.loads(
            (self.out('failing') / views.BOUNDS_FILE).read_text('utf-8')
        )
        self.assertFalse(stored['holds'])


class GenDataViewTests(ViewTestCase):

    def test_tokens(self):
        result = views.cmd_gen_data(self.config(), self.out('tokens'))
        tensors = read_container(result['data'])
        self.assertEqual(tensors['tokens'].dtype, np.uint32)
        self.assertEqual(tensors['tokens'].shape, (12, 8))

    def test_outlier_samples(self):
        config = self.config(calibration={
            'kind': 'gaussian_outlier_channels',
            'outlier_channel_count': 2, 'outlier_scale': 5.0,
        })
        result = views.cmd_gen_data(config, self.out('outliers'))
        tensors = read_container(result['data'])
        self.assertEqual(tensors['samples'].shape, (12, 16))
        self.assertEqual(tensors['outlier_channels'].shape, (2,))

    def test_file_calibration_feeds_learning(self):
        generated = views.cmd_gen_data(self.config(), self.out('file'))
        config = self.config(calibration={'path': generated['data']},
                             train={'steps': 1})
        result = views.cmd_learn(config, self.out('file_learn'))
        self.assertEqual(len(read_rows(result['trace'])), 1)
