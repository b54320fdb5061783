import numpy as np

from core.exceptions import DimensionError

from .models import ErrorReport
from .quantizer import quantize_dequantize


def transformation_mse(transform, config, samples):
    """Monte Carlo estimate of (1/d) E||x - T^-1(Q(T(x)))||^2.

    `transform` is anything with `apply`/`apply_inverse` on row batches, or
    None for the identity.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = samples.shape
    if transform is not None and transform.dim != d:
        raise DimensionError(
            f'transform of dimension {transform.dim} applied to samples of '
            f'dimension {d}'
        )
    if d % config.block_size:
        raise DimensionError(
            f'sample dimension {d} is not a multiple of the MX block size '
            f'{config.block_size}'
        )
    if transform is None:
        restored = quantize_dequantize(samples, config)
    else:
        transformed = transform.apply(samples)
        restored = transform.apply_inverse(
            quantize_dequantize(transformed, config)
        )
    squared = (samples - restored) ** 2
    per_block = squared.reshape(n, d // config.block_size, -1).mean(axis=2)
    per_block_mse = per_block.mean(axis=0)
    return ErrorReport(
        mse=float(per_block_mse.mean()),
        per_block_mse=per_block_mse,
        sample_count=n,
    )
