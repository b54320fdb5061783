import numpy as np
from scipy import linalg as sla

from core.exceptions import DimensionError
from core.utils import make_rng

from .kernels import block_diagonal, matrix_exponential


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def hadamard(n, randomized=False, seed=0):
    """Orthonormal Sylvester Hadamard matrix, optionally with random signs."""
    if not is_power_of_two(n):
        raise DimensionError(f'Hadamard size must be a power of two, got {n}')
    h = sla.hadamard(n).astype(np.float64) / np.sqrt(n)
    if randomized:
        signs = make_rng(seed).choice((-1.0, 1.0), size=n)
        h = h * signs[None, :]
    return h


def block_hadamard(d, block, randomized=False, seed=0):
    if block < 1 or d % block:
        raise DimensionError(f'block {block} does not divide {d}')
    rng = make_rng(seed)
    return block_diagonal([
        hadamard(block, randomized=randomized, seed=rng)
        for _ in range(d // block)
    ])


def random_skew(d, seed=0, scale=1.0):
    g = make_rng(seed).standard_normal((d, d)) * scale
    return 0.5 * (g - g.T)


def random_orthogonal(d, seed=0):
    """exp of a seeded random skew-symmetric matrix (determinant +1)."""
    if d < 1:
        raise DimensionError(f'dimension must be positive, got {d}')
    return matrix_exponential(random_skew(d, seed))
