"""Absorbing normalization gains and transforms into the weights.

All folds return a new ModelWeights; the input is never mutated.
"""
import logging

import numpy as np

from core.exceptions import ConfigurationError, DimensionError
from linalg.constructions import block_hadamard

logger = logging.getLogger(__name__)

CONSUMERS = (('wq', 'bq'), ('wk', 'bk'), ('wv', 'bv'),
             ('w_gate', 'b_gate'), ('w_up', 'b_up'))
PRODUCERS = (('wo', 'bo'), ('w_down', 'b_down'))


def fold_rmsnorm(weights):
    """W <- W diag(gain) for every linear layer after a norm; gains -> 1."""
    folded = weights.copy()
    for layer in folded.layers:
        for name in ('wq', 'wk', 'wv'):
            setattr(layer, name, getattr(layer, name) * layer.attn_norm)
        for name in ('w_gate', 'w_up'):
            setattr(layer, name, getattr(layer, name) * layer.ffn_norm)
        layer.attn_norm = np.ones_like(layer.attn_norm)
        layer.ffn_norm = np.ones_like(layer.ffn_norm)
    folded.head = folded.head * folded.final_norm
    folded.final_norm = np.ones_like(folded.final_norm)
    return folded


def norms_folded(weights):
    gains = [weights.final_norm] + [
        gain for layer in weights.layers
        for gain in (layer.attn_norm, layer.ffn_norm)
    ]
    return all(np.all(gain == 1.0) for gain in gains)


def _fold_consumer(w, b, a_inv, v):
    w_new = w @ a_inv
    return w_new, b - w_new @ v


def fold_t1(weights, t1):
    """Move the residual stream into T1 coordinates."""
    if not norms_folded(weights):
        raise ConfigurationError('fold_rmsnorm must run before fold_t1')
    if t1.dim != weights.embedding.shape[1]:
        raise DimensionError(
            f'T1 of dimension {t1.dim} for d_model '
            f'{weights.embedding.shape[1]}'
        )
    folded = weights.copy()
    folded.embedding = t1.apply(folded.embedding)
    for layer in folded.layers:
        for w_name, b_name in CONSUMERS:
            w, b = _fold_consumer(
                getattr(layer, w_name), getattr(layer, b_name),
                t1.a_inv, t1.v,
            )
            setattr(layer, w_name, w)
            setattr(layer, b_name, b)
        for w_name, b_name in PRODUCERS:
            setattr(layer, w_name, t1.a @ getattr(layer, w_name))
            setattr(layer, b_name, t1.a @ getattr(layer, b_name))
    folded.head, folded.head_bias = _fold_consumer(
        folded.head, folded.head_bias, t1.a_inv, t1.v
    )
    return folded


def fold_t2(weights, layer_index, t2):
    """T2 into the value projection, T2^-1 into the output projection."""
    folded = weights.copy()
    layer = folded.layers[layer_index]
    if t2.dim != layer.wv.shape[0]:
        raise DimensionError(
            f'T2 of dimension {t2.dim} for value width {layer.wv.shape[0]}'
        )
    layer.wv = t2.a @ layer.wv
    layer.bv = t2.a @ layer.bv + t2.v
    layer.wo = layer.wo @ t2.a_inv
    layer.bo = layer.bo - layer.wo @ t2.v
    return folded


def fold_t3(weights, block):
    """W_down <- W_down H^T; the forward pass then applies H online."""
    if weights.online_hadamard_block:
        raise ConfigurationError('online Hadamard is already folded')
    folded = weights.copy()
    d_ff = folded.layers[0].w_down.shape[1] if folded.layers else block
    h = block_hadamard(d_ff, block)
    for layer in folded.layers:
        layer.w_down = layer.w_down @ h.T
    folded.online_hadamard_block = block
    return folded


def fold_all(weights, transforms):
    folded = fold_t1(fold_rmsnorm(weights), transforms.t1)
    for index, t2 in enumerate(transforms.t2):
        folded = fold_t2(folded, index, t2)
    if transforms.t3_enabled:
        folded = fold_t3(folded, transforms.t3_block)
    logger.debug(
        'folded transforms into %d layers (online Hadamard: %s)',
        len(folded.layers), transforms.t3_enabled,
    )
    return folded
