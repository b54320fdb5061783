import numpy as np

from core.exceptions import DimensionError
from linalg.kernels import invert, singular_values, spectral_norm

from .parameterizations import off_block_mask


def _check_block(a, block):
    a = np.asarray(a, dtype=np.float64)
    if block < 1 or a.shape[0] % block:
        raise DimensionError(f'block {block} does not divide {a.shape[0]}')
    return a


def orthogonality_deviation(a):
    """Spectral distance to the nearest orthogonal matrix."""
    return float(np.max(np.abs(singular_values(a) - 1.0)))


def off_block_diag_norm(a, block):
    a = _check_block(a, block)
    return spectral_norm(a * off_block_mask(a.shape[0], block))


def block_inverse_norms(a, block, a_inv=None):
    """Spectral norms of the diagonal blocks of A^-1."""
    a = _check_block(a, block)
    a_inv = invert(a) if a_inv is None else a_inv
    return np.array([
        spectral_norm(a_inv[start:start + block, start:start + block])
        for start in range(0, a.shape[0], block)
    ])
