import copy
import json
from pathlib import Path

SMALL_CONFIG = {
    'schema': 1,
    'seed': 0,
    'model': {
        'd_model': 16, 'n_layers': 1, 'n_heads': 2, 'd_ff': 32,
        'vocab_size': 32, 'max_seq_len': 8, 'outlier_channels': [3],
        'outlier_scale': 8.0,
    },
    'mx': {'format': 'FP4_E2M1', 'block_size': 8},
    'transform': {'parameterization': 'LU', 'init_scheme': 'BDHadamard',
                  'init_block': 8},
    'train': {'steps': 3, 'base_lr': 1e-3, 'batch_size': 4, 'log_every': 1,
              'progress': False},
    'calibration': {'n_samples': 12, 'seq_len': 8},
    'sweep': {'block_sizes': [4, 8, 16]},
    'bounds': {
        'd': 32, 'samples': 200, 'lemma_trials': 500,
        'lemma_blocks': [2, 8], 'lemma_sigmas': [1.0], 'scenarios': 50,
        'outlier_channels': [3, 20],
    },
}


def small_config(**sections):
    """SMALL_CONFIG with whole sections merged over the defaults."""
    config = copy.deepcopy(SMALL_CONFIG)
    for name, values in sections.items():
        if isinstance(values, dict):
            config.setdefault(name, {}).update(values)
        else:
            config[name] = values
    return config


def write_config(directory, name='config.json', **sections):
    path = Path(directory) / name
    path.write_text(json.dumps(small_config(**sections)), encoding='utf-8')
    return str(path)
