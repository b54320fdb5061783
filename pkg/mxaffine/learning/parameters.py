"""Learnable T1/T2 parameters and their differentiable assembly."""
import dataclasses
from dataclasses import dataclass
from typing import List, Union

import numpy as np

from core.exceptions import ContainerFormatError
from core.utils import make_rng
from mxaffine import settings
from toymodel.forward import AffineTensors, InjectedTransforms
from toymodel.models import TransformSet
from transforms.models import LuParams, Parameterization, QrParams
from transforms.parameterizations import assemble, init_transform
from transforms.serialization import (transform_from_tensors,
                                      transform_to_tensors)

from .autograd import Tensor, diag, tril, triu
from .losses import diagonal_regularizer, volume_regularizer

TRAINABLE = {
    Parameterization.LU: ('l_strict', 'u_strict', 'log_s', 'v'),
    Parameterization.QR: ('g', 'r_strict', 'log_s', 'v'),
}


def parameter_mask(field_name, shape):
    """Entries of a parameter tensor that reach the assembled matrix."""
    if field_name == 'l_strict':
        return np.tril(np.ones(shape, dtype=bool), -1)
    if field_name in ('u_strict', 'r_strict'):
        return np.triu(np.ones(shape, dtype=bool), 1)
    return np.ones(shape, dtype=bool)


def assemble_tensors(params, leaf):
    """AffineTensors of `params`, reading trainable fields through `leaf`."""
    d = params.dim
    s = leaf('log_s').exp() * params.sign_s
    if params.parameterization is Parameterization.LU:
        lower = tril(leaf('l_strict'), -1) + np.eye(d)
        upper = triu(leaf('u_strict'), 1) + diag(s)
        a = params.permutation.as_matrix() @ lower @ upper
    else:
        g = leaf('g')
        rotation = ((g - g.T) * 0.5).expm()
        a = rotation @ (triu(leaf('r_strict'), 1) + diag(s))
    return AffineTensors(a, a.inverse(), leaf('v'))


@dataclass
class LearnableTransforms:
    t1: Union[LuParams, QrParams]
    t2: List[Union[LuParams, QrParams]]
    t3_enabled: bool = False
    t3_block: int = settings.MX_BLOCK_SIZE

    @classmethod
    def initialize(cls, config, scheme, parameterization=Parameterization.LU,
                   seed=0, t3_enabled=False,
                   t3_block=settings.MX_BLOCK_SIZE):
        rng = make_rng(seed)
        d = config.d_model
        return cls(
            t1=init_transform(scheme, d, rng, parameterization),
            t2=[init_transform(scheme, d, rng, parameterization)
                for _ in range(config.n_layers)],
            t3_enabled=t3_enabled,
            t3_block=t3_block,
        )

    def named(self):
        yield 't1', self.t1
        for index, params in enumerate(self.t2):
            yield f't2.{index}', params

    def arrays(self):
        return {
            f'{prefix}.{name}': getattr(params, name)
            for prefix, params in self.named()
            for name in TRAINABLE[params.parameterization]
        }

    def with_arrays(self, arrays):
        def replaced(prefix, params):
            return dataclasses.replace(params, **{
                name: arrays[f'{prefix}.{name}']
                for name in TRAINABLE[params.parameterization]
                if f'{prefix}.{name}' in arrays
            })

        named = dict(self.named())
        return dataclasses.replace(
            self,
            t1=replaced('t1', named['t1']),
            t2=[replaced(f't2.{i}', named[f't2.{i}'])
                for i in range(len(self.t2))],
        )

    def leaves(self, cfg=None):
        """Fresh Tensor leaves; frozen names do not require gradients."""
        return {
            name: Tensor(
                value, name=name,
                requires_grad=cfg is None or not cfg.is_frozen(name),
            )
            for name, value in self.arrays().items()
        }

    def injected(self, leaves):
        def assembled(prefix, params):
            return assemble_tensors(
                params, lambda name: leaves[f'{prefix}.{name}']
            )

        named = dict(self.named())
        return InjectedTransforms(
            t1=assembled('t1', named['t1']),
            t2=[assembled(f't2.{i}', named[f't2.{i}'])
                for i in range(len(self.t2))],
            t3_block=self.t3_block if self.t3_enabled else 0,
        )

    def regularizers(self, leaves):
        """Volume and diagonal penalties summed over every transform."""
        volume, diagonal = 0.0, 0.0
        for prefix, _ in self.named():
            log_s = leaves[f'{prefix}.log_s']
            volume = volume_regularizer(log_s) + volume
            diagonal = diagonal_regularizer(log_s) + diagonal
        return volume, diagonal

    def transform_set(self):
        return TransformSet(
            t1=assemble(self.t1),
            t2=[assemble(params) for params in self.t2],
            t3_enabled=self.t3_enabled,
            t3_block=self.t3_block,
        )

    def to_tensors(self):
        tensors = {
            't3_block': np.array(
                [self.t3_block if self.t3_enabled else 0], dtype=np.float64
            ),
            'layers': np.array([len(self.t2)], dtype=np.float64),
        }
        for prefix, params in self.named():
            tensors.update(transform_to_tensors(params, prefix))
        return tensors

    @classmethod
    def from_tensors(cls, tensors):
        try:
            layers = int(tensors['layers'][0])
            t3_block = int(tensors['t3_block'][0])
        except KeyError as error:
            raise ContainerFormatError(f'missing tensor {error.args[0]}')
        return cls(
            t1=transform_from_tensors(tensors, 't1'),
            t2=[transform_from_tensors(tensors, f't2.{index}')
                for index in range(layers)],
            t3_enabled=t3_block > 0,
            t3_block=t3_block or settings.MX_BLOCK_SIZE,
        )
