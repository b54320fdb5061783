"""The causal forward pass, shared by the plain and transformed models.

The pass runs on `learning.autograd.Tensor` so the same code produces
gradients with respect to transform parameters during learning.
"""
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from core.exceptions import ConfigurationError, DimensionError
from learning.autograd import Tensor
from learning.ste import ActivationQuantizer
from linalg.constructions import block_hadamard

from .folding import fold_rmsnorm
from .models import Activations


@dataclass
class AffineTensors:
    a: Tensor
    a_inv: Tensor
    v: Tensor

    @classmethod
    def constant(cls, transform):
        return cls(Tensor(transform.a), Tensor(transform.a_inv),
                   Tensor(transform.v))

    def to_stream(self, delta):
        """Linear part only: residual increments."""
        return delta @ self.a.T

    def forward(self, x):
        return x @ self.a.T + self.v

    def inverse(self, y):
        return (y - self.v) @ self.a_inv.T


@dataclass
class InjectedTransforms:
    t1: Optional[AffineTensors]
    t2: List[Optional[AffineTensors]]
    t3_block: int = 0

    @classmethod
    def constant(cls, transforms):
        return cls(
            t1=AffineTensors.constant(transforms.t1),
            t2=[AffineTensors.constant(t2) for t2 in transforms.t2],
            t3_block=transforms.t3_block if transforms.t3_enabled else 0,
        )


def check_tokens(tokens, config):
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[np.newaxis]
    if tokens.ndim != 2 or not np.issubdtype(tokens.dtype, np.integer):
        raise DimensionError(
            f'tokens must be an integer (batch, seq) array, got '
            f'{tokens.dtype} {tokens.shape}'
        )
    if tokens.size and (tokens.min() < 0
                        or tokens.max() >= config.vocab_size):
        raise DimensionError(
            f'token ids must lie in [0, {config.vocab_size})'
        )
    if tokens.shape[1] > config.max_seq_len:
        raise DimensionError(
            f'sequence length {tokens.shape[1]} exceeds max_seq_len '
            f'{config.max_seq_len}'
        )
    return tokens


def rmsnorm(x, gain, eps):
    scale = ((x * x).mean(axis=-1, keepdims=True) + eps).sqrt()
    return x / scale * gain


def attention(q, k, v, config):
    batch, seq, d = q.shape
    heads, head_dim = config.n_heads, config.head_dim

    def split(t):
        return t.reshape(batch, seq, heads, head_dim).transpose(0, 2, 1, 3)

    scores = split(q) @ split(k).swap_last() * (1.0 / np.sqrt(head_dim))
    causal = np.tril(np.ones((seq, seq), dtype=bool))
    probs = scores.softmax(axis=-1, mask=causal)
    mixed = probs @ split(v)
    return mixed.transpose(0, 2, 1, 3).reshape(batch, seq, d)


class _Sites:
    """Applies activation quantization at the enabled sites."""

    def __init__(self, qpoints, quantizer):
        self.qpoints = qpoints
        self.quantizer = quantizer
        if qpoints is not None and qpoints.enabled and quantizer is None:
            self.quantizer = ActivationQuantizer(qpoints.mx)

    def __call__(self, x, site):
        if (self.qpoints is None or not self.qpoints.enabled
                or not getattr(self.qpoints, site)):
            return x
        return self.quantizer(x)


def _from_stream(z, t1):
    return z if t1 is None else t1.inverse(z)


def _to_stream(delta, t1):
    return delta if t1 is None else t1.to_stream(delta)


def _attention_block(h, layer, config, t1, t2, quantize, capture):
    z = quantize(rmsnorm(h, layer.attn_norm, config.rmsnorm_eps),
                 'qkv_input')
    if capture is not None:
        capture.qkv_inputs.append(z.data)
    u = _from_stream(z, t1)
    q = u @ layer.wq.T + layer.bq
    k = u @ layer.wk.T + layer.bk
    v = u @ layer.wv.T + layer.bv
    if t2 is not None:
        v = t2.forward(v)
    mixed = quantize(attention(q, k, quantize(v, 'values'), config),
                     'out_proj_input')
    if t2 is not None:
        mixed = t2.inverse(mixed)
    if capture is not None:
        capture.out_proj_inputs.append(mixed.data)
    return h + _to_stream(mixed @ layer.wo.T + layer.bo, t1)


def _ffn_block(h, layer, config, t1, hadamard, fold_down, quantize,
               capture):
    z = quantize(rmsnorm(h, layer.ffn_norm, config.rmsnorm_eps),
                 'ffn_input')
    if capture is not None:
        capture.ffn_inputs.append(z.data)
    u = _from_stream(z, t1)
    hidden = (u @ layer.w_gate.T + layer.b_gate).silu() * (
        u @ layer.w_up.T + layer.b_up
    )
    w_down = layer.w_down
    if hadamard is not None:
        hidden = hidden @ hadamard.T
        if fold_down:
            w_down = w_down @ hadamard.T
    hidden = quantize(hidden, 'down_proj_input')
    if capture is not None:
        capture.down_proj_inputs.append(hidden.data)
    return h + _to_stream(hidden @ w_down.T + layer.b_down, t1)


def _hadamard(weights, config, injected):
    if injected is not None and injected.t3_block:
        if weights.online_hadamard_block:
            raise ConfigurationError(
                'weights already carry the online Hadamard'
            )
        return block_hadamard(config.d_ff, injected.t3_block), True
    if weights.online_hadamard_block:
        block = weights.online_hadamard_block
        return block_hadamard(config.d_ff, block), False
    return None, False


def run(weights, config, tokens, injected=None, qpoints=None,
        quantizer=None, capture=None):
    """Logits as a Tensor of shape (batch, seq, vocab).

    `capture.blocks` receives the residual stream after every block, mapped
    back out of T1 coordinates.
    """
    tokens = check_tokens(tokens, config)
    if qpoints is not None:
        qpoints.check(config)
    quantize = _Sites(qpoints, quantizer)
    t1 = injected.t1 if injected is not None else None
    hadamard, fold_down = _hadamard(weights, config, injected)
    h = Tensor(weights.embedding[tokens])
    if t1 is not None:
        h = t1.forward(h)
    for index, layer in enumerate(weights.layers):
        t2 = injected.t2[index] if injected is not None else None
        h = _attention_block(h, layer, config, t1, t2, quantize, capture)
        h = _ffn_block(h, layer, config, t1, hadamard, fold_down, quantize,
                       capture)
        if capture is not None:
            capture.blocks.append(_from_stream(h, t1))
    z = quantize(rmsnorm(h, weights.final_norm, config.rmsnorm_eps),
                 'head_input')
    return _from_stream(z, t1) @ weights.head.T + weights.head_bias


def _output(logits, tokens):
    data = logits.data if isinstance(logits, Tensor) else logits
    return data[0] if np.asarray(tokens).ndim == 1 else data


def forward_fp(weights, config, tokens, qpoints=None):
    """Double-precision logits; (seq, vocab) for a 1-D token sequence."""
    return _output(run(weights, config, tokens, qpoints=qpoints), tokens)


def forward_transformed(weights, config, transforms, qpoints, tokens):
    """Logits of the network with T1, T2, T3 injected and activations
    quantized at the selected points."""
    transforms.check(config)
    injected = InjectedTransforms.constant(transforms)
    logits = run(fold_rmsnorm(weights), config, tokens, injected, qpoints)
    return _output(logits, tokens)


def block_outputs(weights, config, tokens, transforms=None, qpoints=None):
    """Residual stream after every block, in original coordinates."""
    capture = Activations()
    injected = None
    if transforms is not None:
        injected = InjectedTransforms.constant(transforms)
        weights = fold_rmsnorm(weights)
    run(weights, config, tokens, injected, qpoints, capture=capture)
    return [block.data for block in capture.blocks]


def capture_activations(weights, config, tokens, qpoints=None):
    """Inputs of every linear layer of the plain forward pass, as arrays."""
    capture = Activations()
    run(weights, config, tokens, qpoints=qpoints, capture=capture)
    capture.blocks = [block.data for block in capture.blocks]
    return capture


def capture_transformed(weights, config, transforms, tokens, qpoints=None):
    """Linear-layer inputs of the network with `transforms` injected.

    Every enabled site but the QKV input is quantized, so `qkv_inputs`
    holds exactly what the QKV quantizer sees, in T1 coordinates.
    """
    transforms.check(config)
    if qpoints is not None:
        qpoints = replace(qpoints, qkv_input=False)
    capture = Activations()
    run(fold_rmsnorm(weights), config, tokens,
        InjectedTransforms.constant(transforms), qpoints, capture=capture)
    capture.blocks = [block.data for block in capture.blocks]
    return capture
