import copy
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from core.exceptions import ConfigurationError, DimensionError
from mxaffine import settings
from mxquant.models import MxConfig
from transforms.models import AffineTransform


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = settings.MODEL_D_MODEL
    n_layers: int = settings.MODEL_N_LAYERS
    n_heads: int = settings.MODEL_N_HEADS
    d_ff: int = settings.MODEL_D_FF
    vocab_size: int = settings.MODEL_VOCAB_SIZE
    max_seq_len: int = settings.MODEL_MAX_SEQ_LEN
    has_bias: bool = settings.MODEL_HAS_BIAS
    rmsnorm_eps: float = settings.RMSNORM_EPS
    outlier_channels: tuple = settings.MODEL_OUTLIER_CHANNELS
    outlier_scale: float = settings.MODEL_OUTLIER_SCALE

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigurationError(
                f'd_model {self.d_model} is not divisible by n_heads '
                f'{self.n_heads}'
            )
        object.__setattr__(
            self, 'outlier_channels', tuple(self.outlier_channels)
        )
        if any(not 0 <= c < self.d_model for c in self.outlier_channels):
            raise ConfigurationError(
                f'outlier channels {self.outlier_channels} outside '
                f'd_model {self.d_model}'
            )

    @property
    def head_dim(self):
        return self.d_model // self.n_heads

    def check_block_size(self, block_size):
        for name in ('d_model', 'd_ff'):
            if getattr(self, name) % block_size:
                raise DimensionError(
                    f'{name} {getattr(self, name)} is not a multiple of the '
                    f'MX block size {block_size}'
                )


@dataclass
class LayerWeights:
    """One transformer block; matrices are (out, in)."""

    attn_norm: np.ndarray
    ffn_norm: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    w_gate: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray
    b_gate: np.ndarray
    b_up: np.ndarray
    b_down: np.ndarray

    @classmethod
    def names(cls):
        return tuple(item.name for item in fields(cls))


@dataclass
class ModelWeights:
    """Full model; `online_hadamard_block` > 0 makes the forward pass apply
    an orthonormal block Hadamard before every down projection."""

    embedding: np.ndarray
    layers: List[LayerWeights]
    final_norm: np.ndarray
    head: np.ndarray
    head_bias: np.ndarray
    online_hadamard_block: int = 0

    def copy(self):
        return copy.deepcopy(self)

    def check(self, config):
        expected = {
            'embedding': (config.vocab_size, config.d_model),
            'final_norm': (config.d_model,),
            'head': (config.vocab_size, config.d_model),
            'head_bias': (config.vocab_size,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f'{name} has shape {getattr(self, name).shape}, '
                    f'expected {shape}'
                )
        if len(self.layers) != config.n_layers:
            raise DimensionError(
                f'{len(self.layers)} layers, expected {config.n_layers}'
            )


@dataclass
class TransformSet:
    t1: AffineTransform
    t2: List[AffineTransform]
    t3_enabled: bool = False
    t3_block: int = settings.MX_BLOCK_SIZE

    @classmethod
    def identity(cls, config, t3_enabled=False,
                 t3_block=settings.MX_BLOCK_SIZE):
        return cls(
            t1=AffineTransform.identity(config.d_model),
            t2=[AffineTransform.identity(config.d_model)
                for _ in range(config.n_layers)],
            t3_enabled=t3_enabled,
            t3_block=t3_block,
        )

    def check(self, config):
        dims = [self.t1.dim] + [t2.dim for t2 in self.t2]
        if any(dim != config.d_model for dim in dims):
            raise DimensionError(
                f'transform dimensions {dims} do not match d_model '
                f'{config.d_model}'
            )
        if len(self.t2) != config.n_layers:
            raise DimensionError(
                f'{len(self.t2)} value transforms for {config.n_layers} '
                f'layers'
            )


@dataclass(frozen=True)
class QuantPoints:
    """Which linear-layer inputs are MX-quantized.

    `values` quantizes the value vectors entering attention mixing.
    """

    mx: Optional[MxConfig] = None
    qkv_input: bool = True
    out_proj_input: bool = True
    ffn_input: bool = True
    down_proj_input: bool = True
    head_input: bool = False
    values: bool = False

    SITES = (
        'qkv_input', 'out_proj_input', 'ffn_input', 'down_proj_input',
        'head_input', 'values',
    )

    @classmethod
    def disabled(cls):
        return cls(None, **{site: False for site in cls.SITES})

    @property
    def enabled(self):
        return self.mx is not None and any(
            getattr(self, site) for site in self.SITES
        )

    def check(self, config):
        if self.enabled:
            config.check_block_size(self.mx.block_size)


@dataclass
class Activations:
    """Captured forward intermediates, keyed by site name."""

    blocks: list = field(default_factory=list)
    qkv_inputs: list = field(default_factory=list)
    out_proj_inputs: list = field(default_factory=list)
    ffn_inputs: list = field(default_factory=list)
    down_proj_inputs: list = field(default_factory=list)
