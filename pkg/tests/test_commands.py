import numpy as np
import pytest

import manage
from commands import views

from tests.utils import read_json, read_rows


def column(rows, name):
    return np.array([float(row[name]) for row in rows])


class TestPipeline:

    def test_gen_data_learn_quantize(self, acceptance_config, out_dir):
        config = acceptance_config(train={'steps': 5})
        assert manage.main(['gen-data', '--config', config,
                            '--out', str(out_dir)]) == 0
        assert manage.main(['learn', '--config', config,
                            '--out', str(out_dir)]) == 0
        checkpoint = out_dir / views.CHECKPOINT_FILE
        assert checkpoint.is_file(), 'learn must write the checkpoint'
        assert manage.main(['quantize', '--config', config,
                            '--checkpoint', str(checkpoint),
                            '--out', str(out_dir)]) == 0
        metrics = read_json(out_dir / views.METRICS_FILE)
        assert metrics['fold_deviation'] <= 1e-5
        assert len(metrics['layers']) == 7 * 2
        assert (out_dir / views.MODEL_FILE).is_file()

    def test_verify_bounds(self, acceptance_config, out_dir):
        code = manage.main(['verify-bounds', '--config', acceptance_config(),
                            '--out', str(out_dir)])
        report = read_json(out_dir / views.BOUNDS_FILE)
        assert code == 0, f'bound verification failed: {report["failures"]}'
        assert report['demo']['transformed'] == [6.0, 4.5, 5.0, 4.5]


@pytest.mark.slow
class TestLearningEfficacy:

    def test_distillation_kl_halves(self, learned_trace):
        kl = column(read_rows(learned_trace), 'loss_dist')
        assert len(kl) == 300
        assert kl[-1] <= 0.5 * kl[0], (
            f'KL to the teacher went from {kl[0]:.4g} to {kl[-1]:.4g}, '
            f'expected at most half'
        )

    def test_moves_away_from_orthogonal_init(self, learned_trace):
        rows = read_rows(learned_trace)
        orth, offblock = column(rows, 'orth_dev'), column(rows,
                                                          'offblock_norm')
        assert orth[0] <= 1e-6, 'block-Hadamard init must start orthogonal'
        assert offblock[0] <= 1e-12
        assert orth[-1] >= 1e-2, (
            f'A1 stayed near orthogonal: deviation {orth[-1]:.3g}'
        )
        assert offblock[-1] > offblock[0]

    def test_learned_affine_beats_baselines(self, acceptance_config,
                                            out_dir):
        assert manage.main(['ablate', '--config', acceptance_config(),
                            '--out', str(out_dir)]) == 0
        mse = {row['method']: float(row['activation_mse'])
               for row in read_rows(out_dir / views.ABLATION_FILE)}
        learned = mse['latmix_lu']
        assert learned <= 0.9 * mse['none'], (
            f'learned transform MSE {learned:.4g} against identity '
            f'{mse["none"]:.4g}'
        )
        assert learned <= mse['hadamard_block'], (
            f'learned transform MSE {learned:.4g} against block Hadamard '
            f'{mse["hadamard_block"]:.4g}'
        )


class TestBlockSizeSweep:

    def test_identity_error_grows_with_block_size(self, acceptance_config,
                                                  out_dir):
        assert manage.main(['sweep-blocksize', '--config',
                            acceptance_config(), '--out', str(out_dir)]) == 0
        rows = read_rows(out_dir / views.SWEEP_FILE)
        assert [int(row['block_size']) for row in rows] == [8, 16, 32, 64]
        errors = column(rows, 'mse')
        assert np.all(np.diff(errors) >= 0), (
            f'MSE is not nondecreasing in the block size: {errors}'
        )
