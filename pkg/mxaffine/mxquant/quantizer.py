import numpy as np

from core.exceptions import DimensionError
from core.utils import check_finite
from mxaffine import settings

from .models import MxQuantized


def _blocks(x, block_size):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] % block_size:
        raise DimensionError(
            f'last axis {x.shape[-1:]} is not a multiple of the MX block '
            f'size {block_size}'
        )
    return x.reshape(x.shape[:-1] + (x.shape[-1] // block_size, block_size))


def scale_by_exponent(values, exponents):
    return np.ldexp(values, np.asarray(exponents).astype(np.int32))


def block_scale_exponent(block, fmt):
    """floor(log2(max |x|)) - r_max over the last axis; E_MIN for zeros."""
    amax = np.max(np.abs(block), axis=-1)
    _, exponent = np.frexp(amax)
    return np.where(
        amax > 0, exponent - 1 - fmt.r_max, settings.E_MIN
    ).astype(np.int64)


def quantize_magnitude_index(magnitude, fmt):
    """Index into `fmt.magnitudes` of the nearest value, saturating.

    Exact ties go to the even index, which is the even mantissa.
    """
    magnitudes = fmt.magnitudes
    upper = np.clip(
        np.searchsorted(magnitudes, magnitude, side='left'),
        0, magnitudes.size - 1,
    )
    lower = np.maximum(upper - 1, 0)
    to_upper = magnitudes[upper] - magnitude
    to_lower = magnitude - magnitudes[lower]
    pick_upper = (to_upper < to_lower) | (
        (to_upper == to_lower) & (upper % 2 == 0)
    )
    return np.where(pick_upper, upper, lower)


def quantize_element(z, fmt):
    """Nearest grid value of a scaled element, as a full-grid code."""
    z = np.asarray(z, dtype=np.float64)
    index = quantize_magnitude_index(np.abs(z), fmt)
    return (fmt.zero_code + np.where(z < 0, -index, index)).astype(np.int64)


def mx_quantize(x, config):
    """Quantize along the last axis in blocks of `config.block_size`."""
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, 'mx_quantize input')
    fmt = config.format
    blocks = _blocks(x, config.block_size)
    exponents = block_scale_exponent(blocks, fmt)
    scaled = scale_by_exponent(blocks, -exponents[..., np.newaxis])
    codes = quantize_element(scaled, fmt)
    return MxQuantized(
        shape=x.shape,
        scale_exponents=exponents,
        codes=codes.reshape(x.shape),
        config=config,
    )


def mx_dequantize(quantized):
    config = quantized.config
    values = config.format.grid[quantized.codes]
    blocks = _blocks(values, config.block_size)
    restored = scale_by_exponent(
        blocks, quantized.scale_exponents[..., np.newaxis]
    )
    return restored.reshape(quantized.shape)


def quantize_dequantize(x, config, return_mask=False):
    """Q(x) in one call.

    With `return_mask` also returns the elements whose scaled magnitude lies
    inside the grid range (the straight-through gradient passes there).
    """
    x = np.asarray(x, dtype=np.float64)
    quantized = mx_quantize(x, config)
    restored = mx_dequantize(quantized)
    if not return_mask:
        return restored
    scaled = scale_by_exponent(
        _blocks(x, config.block_size),
        -quantized.scale_exponents[..., np.newaxis],
    )
    inside = np.abs(scaled) <= config.format.grid_max
    return restored, inside.reshape(x.shape)
