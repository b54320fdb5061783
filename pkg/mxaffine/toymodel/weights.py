import numpy as np

from core.exceptions import ContainerFormatError
from core.utils import check_finite, make_rng
from mxaffine import settings

from .models import LayerWeights, ModelWeights

BIAS_STD = 0.02
GAIN_JITTER = 0.1


def init_weights(config, seed=0, weight_std=settings.MODEL_WEIGHT_STD):
    """Seeded random toy model with outlier channels in the embedding."""
    rng = make_rng(seed)
    d, d_ff = config.d_model, config.d_ff

    def matrix(rows, cols):
        return rng.standard_normal((rows, cols)) * weight_std

    def bias(size):
        if not config.has_bias:
            return np.zeros(size)
        return rng.standard_normal(size) * BIAS_STD

    def gain():
        return 1.0 + GAIN_JITTER * rng.standard_normal(d)

    embedding = rng.standard_normal((config.vocab_size, d))
    embedding[:, list(config.outlier_channels)] *= config.outlier_scale
    layers = [
        LayerWeights(
            attn_norm=gain(), ffn_norm=gain(),
            wq=matrix(d, d), wk=matrix(d, d), wv=matrix(d, d),
            wo=matrix(d, d),
            bq=bias(d), bk=bias(d), bv=bias(d), bo=bias(d),
            w_gate=matrix(d_ff, d), w_up=matrix(d_ff, d),
            w_down=matrix(d, d_ff),
            b_gate=bias(d_ff), b_up=bias(d_ff), b_down=bias(d),
        )
        for _ in range(config.n_layers)
    ]
    return ModelWeights(
        embedding=embedding,
        layers=layers,
        final_norm=gain(),
        head=matrix(config.vocab_size, d),
        head_bias=bias(config.vocab_size),
    )


def weights_to_tensors(weights):
    tensors = {
        'embedding': weights.embedding,
        'final_norm': weights.final_norm,
        'head': weights.head,
        'head_bias': weights.head_bias,
        'online_hadamard_block': np.array(
            [weights.online_hadamard_block], dtype=np.float64
        ),
    }
    for index, layer in enumerate(weights.layers):
        for name in LayerWeights.names():
            tensors[f'layers.{index}.{name}'] = getattr(layer, name)
    return tensors


def _take(tensors, name):
    try:
        return check_finite(np.asarray(tensors[name], dtype=np.float64), name)
    except KeyError:
        raise ContainerFormatError(f'missing tensor {name}')


def weights_from_tensors(tensors, config):
    layers = [
        LayerWeights(**{
            name: _take(tensors, f'layers.{index}.{name}')
            for name in LayerWeights.names()
        })
        for index in range(config.n_layers)
    ]
    block = tensors.get('online_hadamard_block', np.zeros(1))
    weights = ModelWeights(
        embedding=_take(tensors, 'embedding'),
        layers=layers,
        final_norm=_take(tensors, 'final_norm'),
        head=_take(tensors, 'head'),
        head_bias=_take(tensors, 'head_bias'),
        online_hadamard_block=int(np.asarray(block).ravel()[0]),
    )
    weights.check(config)
    return weights
