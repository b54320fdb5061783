"""Straight-through MX quantization of activations."""
import enum

import numpy as np

from core.exceptions import MxAffineError
from mxquant.quantizer import quantize_dequantize

from .autograd import Tensor, as_tensor


class QuantizerMode(enum.Enum):
    LIVE = 'live'
    RECORD = 'record'
    REPLAY = 'replay'


def ste_quantize(x, config):
    """Q(x) forward; gradient passes where the element does not saturate."""
    x = as_tensor(x)
    values, inside = quantize_dequantize(x.data, config, return_mask=True)
    return Tensor._result(
        values, (x,), lambda g: (np.where(inside, g, 0.0),)
    )


class ActivationQuantizer:
    """Callable quantization site used by the transformed forward pass.

    In RECORD mode every call stores its rounding offset, saturation mask
    and output. REPLAY then evaluates the surrogate x + offset (or the
    frozen output where saturated) in the same call order, which is the
    function whose gradient the straight-through estimator returns.
    """

    def __init__(self, config, mode=QuantizerMode.LIVE):
        self.config = config
        self.mode = mode
        self._tape = []
        self._cursor = 0

    def record(self):
        self.mode = QuantizerMode.RECORD
        self._tape = []
        return self

    def replay(self):
        self.mode = QuantizerMode.REPLAY
        self._cursor = 0
        return self

    def __call__(self, x):
        if self.mode is QuantizerMode.LIVE:
            return ste_quantize(x, self.config)
        x = as_tensor(x)
        if self.mode is QuantizerMode.RECORD:
            values, inside = quantize_dequantize(
                x.data, self.config, return_mask=True
            )
            self._tape.append((values - x.data, inside, values))
        else:
            if self._cursor >= len(self._tape):
                raise MxAffineError('quantizer replay ran past the recording')
            offset, inside, frozen = self._tape[self._cursor]
            self._cursor += 1
            values = np.where(inside, x.data + offset, frozen)
        return Tensor._result(
            values, (x,), lambda g: (np.where(inside, g, 0.0),)
        )
