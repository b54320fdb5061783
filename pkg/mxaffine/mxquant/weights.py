"""Second-stage weight quantization along the input dimension."""
import logging

import numpy as np
from scipy import linalg

from core.exceptions import DimensionError, SingularMatrixError
from mxaffine import settings

from .quantizer import (block_scale_exponent, quantize_dequantize,
                        quantize_element, scale_by_exponent)

logger = logging.getLogger(__name__)

CHOLESKY_PIVOT_TOL = 1e-12


def rtn_quantize_weights(w, config):
    return quantize_dequantize(np.atleast_2d(w), config)


def _hessian(calib_activations, damping):
    x = np.asarray(calib_activations, dtype=np.float64)
    h = x.T @ x
    dead = np.diag(h) == 0
    h[dead, dead] = 1.0
    h += damping * np.mean(np.diag(h)) * np.eye(h.shape[0])
    return h, dead


def _upper_inverse_factor(h):
    """Upper Cholesky factor of H^-1."""
    try:
        factor = linalg.cho_factor(h, lower=False)
        pivots = np.abs(np.diag(factor[0])) ** 2
        if pivots.min() <= CHOLESKY_PIVOT_TOL * pivots.max():
            raise linalg.LinAlgError(
                f'pivot ratio {pivots.min() / pivots.max():.3e}'
            )
        h_inv = linalg.cho_solve(factor, np.eye(h.shape[0]))
        return linalg.cholesky(h_inv, lower=False)
    except linalg.LinAlgError as error:
        raise SingularMatrixError(
            f'Hessian is not positive definite after damping: {error}'
        )


def gptq_quantize_weights(w, calib_activations, config,
                          damping=settings.GPTQ_DAMPING):
    """Column-sequential quantization with error feedback.

    Block scales are taken from the partially compensated weights when a
    block is entered and stay fixed while its columns are quantized.
    """
    w = np.array(np.atleast_2d(w), dtype=np.float64)
    rows, cols = w.shape
    x = np.atleast_2d(calib_activations)
    if x.shape[1] != cols:
        raise DimensionError(
            f'calibration features {x.shape[1]} do not match weight input '
            f'dimension {cols}'
        )
    if cols % config.block_size:
        raise DimensionError(
            f'weight input dimension {cols} is not a multiple of the MX '
            f'block size {config.block_size}'
        )
    fmt = config.format
    h, dead = _hessian(x, damping)
    w[:, dead] = 0.0
    u = _upper_inverse_factor(h)
    quantized = np.zeros_like(w)
    for start in range(0, cols, config.block_size):
        stop = start + config.block_size
        exponents = block_scale_exponent(w[:, start:stop], fmt)
        for col in range(start, stop):
            scaled = scale_by_exponent(w[:, col], -exponents)
            quantized[:, col] = scale_by_exponent(
                fmt.grid[quantize_element(scaled, fmt)], exponents
            )
            error = (w[:, col] - quantized[:, col]) / u[col, col]
            w[:, col + 1:] -= np.outer(error, u[col, col + 1:])
    logger.debug('GPTQ quantized %dx%d weight', rows, cols)
    return quantized
