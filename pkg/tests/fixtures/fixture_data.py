import json

import pytest

import manage
from commands import views

ACCEPTANCE_CONFIG = {
    'schema': 1,
    'seed': 0,
    'mx': {'format': 'FP4_E2M1', 'block_size': 32},
    'transform': {'parameterization': 'LU', 'init_scheme': 'BDHadamard',
                  'init_block': 32},
    'train': {'steps': 300, 'base_lr': 2e-3, 'batch_size': 16,
              'log_every': 1, 'progress': False},
    'calibration': {'n_samples': 16, 'seq_len': 32},
    'ablate': {'methods': ['none', 'hadamard_block', 'latmix_lu']},
    'sweep': {'block_sizes': [8, 16, 32, 64], 'methods': ['none']},
    'bounds': {
        'samples': 1000, 'lemma_trials': 2000, 'lemma_blocks': [2, 32],
        'lemma_sigmas': [1.0], 'scenarios': 200,
    },
}


def write_config(directory, **sections):
    """Acceptance config file; keyword sections are merged over it."""
    data = {**ACCEPTANCE_CONFIG}
    for name, values in sections.items():
        data[name] = {**data.get(name, {}), **values}
    path = directory / 'config.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


@pytest.fixture
def acceptance_config(tmp_path):
    def write(**sections):
        return write_config(tmp_path, **sections)
    return write


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / 'out'


@pytest.fixture(scope='module')
def learned_trace(tmp_path_factory):
    """Trace CSV of one full-length `learn` run on the acceptance config."""
    directory = tmp_path_factory.mktemp('learn')
    code = manage.main(['learn', '--config', write_config(directory),
                        '--out', str(directory / 'out')])
    assert code == 0, f'learn exited with {code}'
    return directory / 'out' / views.TRACE_FILE
