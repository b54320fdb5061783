"""Assembly and initialization of the LU and QR parameterizations."""
import logging

import numpy as np
from scipy import linalg as sla

from core.exceptions import ConfigurationError, SingularMatrixError
from core.utils import check_finite, make_rng
from linalg.constructions import (block_hadamard, hadamard, random_orthogonal,
                                  random_skew)
from linalg.kernels import block_diagonal, matrix_exponential
from linalg.models import Permutation
from mxaffine import settings

from .models import (AffineTransform, InitSchemeKind, LuParams,
                     Parameterization, PresetKind, QrParams)

logger = logging.getLogger(__name__)


def _diagonal(log_s, sign_s):
    return np.asarray(sign_s) * np.exp(np.asarray(log_s))


def assemble_lu(params):
    d = params.dim
    lower = np.tril(params.l_strict, -1) + np.eye(d)
    upper = np.triu(params.u_strict, 1) + np.diag(
        _diagonal(params.log_s, params.sign_s)
    )
    p = params.permutation.as_matrix()
    a = p @ lower @ upper
    # A^-1 = (U + diag(s))^-1 L^-1 P^T
    a_inv = sla.solve_triangular(
        upper,
        sla.solve_triangular(lower, p.T, lower=True, unit_diagonal=True),
        lower=False,
    )
    return AffineTransform(a, np.array(params.v, dtype=np.float64), a_inv)


def assemble_qr(params):
    q = matrix_exponential(0.5 * (params.g - params.g.T))
    upper = np.triu(params.r_strict, 1) + np.diag(
        _diagonal(params.log_s, params.sign_s)
    )
    a_inv = sla.solve_triangular(upper, q.T, lower=False)
    return AffineTransform(
        q @ upper, np.array(params.v, dtype=np.float64), a_inv
    )


def assemble(params):
    if params.parameterization is Parameterization.LU:
        return assemble_lu(params)
    return assemble_qr(params)


def volume_regularizer(log_s):
    """(sum log|s|)^2, zero exactly on volume-preserving transforms."""
    log_s = check_finite(np.asarray(log_s, dtype=np.float64), 'log_s')
    return float(np.sum(log_s) ** 2)


def diagonal_regularizer(log_s):
    log_s = check_finite(np.asarray(log_s, dtype=np.float64), 'log_s')
    return float(np.mean(log_s ** 2))


def off_block_mask(d, block):
    return block_diagonal([np.ones((block, block))] * (d // block)) == 0


def init_target(scheme, d, seed=0):
    """The matrix A_0 an LU initialization factors."""
    scheme.check(d)
    rng = make_rng(seed)
    kind = scheme.kind
    if kind in (InitSchemeKind.IDENTITY, InitSchemeKind.IDENTITY_NOISE):
        target, block = np.eye(d), 1
    elif kind is InitSchemeKind.FULL_ORTHOGONAL:
        target, block = random_orthogonal(d, rng), d
    elif kind is InitSchemeKind.FULL_HADAMARD:
        target, block = hadamard(d, randomized=True, seed=rng), d
    elif kind.hadamard:
        block = scheme.block
        target = block_hadamard(d, block, randomized=True, seed=rng)
    else:
        block = scheme.block
        target = block_diagonal([
            random_orthogonal(block, rng) for _ in range(d // block)
        ])
    if kind.noisy:
        noise = rng.standard_normal((d, d)) * scheme.noise_std
        target = target + noise * off_block_mask(d, block)
    return target


def factor_lu(target, v=None):
    """Pivoted LU of `target` as LuParams (signs of the diagonal frozen)."""
    d = target.shape[0]
    p, lower, upper = sla.lu(target)
    diagonal = np.diag(upper)
    if np.any(diagonal == 0):
        raise SingularMatrixError('initial transform target is singular')
    return LuParams(
        permutation=Permutation.from_matrix(p),
        l_strict=np.tril(lower, -1),
        u_strict=np.triu(upper, 1),
        log_s=np.log(np.abs(diagonal)),
        sign_s=np.sign(diagonal),
        v=np.zeros(d) if v is None else np.array(v, dtype=np.float64),
    )


def _init_qr(scheme, d, rng):
    scheme.check(d)
    kind = scheme.kind
    if kind in (InitSchemeKind.IDENTITY, InitSchemeKind.IDENTITY_NOISE):
        g, block = np.zeros((d, d)), 1
    else:
        block = scheme.block if kind.block_diagonal else d
        g = block_diagonal([
            random_skew(block, rng) for _ in range(d // block)
        ])
    if kind.noisy:
        noise = rng.standard_normal((d, d)) * scheme.noise_std
        g = g + noise * off_block_mask(d, block)
    return QrParams(
        g=g,
        r_strict=np.zeros((d, d)),
        log_s=np.zeros(d),
        sign_s=np.ones(d),
        v=np.zeros(d),
    )


def init_transform(scheme, d, seed=0, parameterization=Parameterization.LU):
    if isinstance(parameterization, str):
        try:
            parameterization = Parameterization(parameterization.upper())
        except ValueError:
            raise ConfigurationError(
                f'unknown parameterization {parameterization!r}'
            )
    rng = make_rng(seed)
    logger.debug(
        'initializing %s transform, d=%d, scheme %s',
        parameterization.value, d, scheme.kind.value,
    )
    if parameterization is Parameterization.QR:
        return _init_qr(scheme, d, rng)
    return factor_lu(init_target(scheme, d, rng))


def preset_transform(kind, d, block=settings.MX_BLOCK_SIZE, seed=0):
    """Non-learned baseline transforms with v = 0."""
    kind = PresetKind(kind) if isinstance(kind, str) else kind
    if kind is PresetKind.NONE:
        return AffineTransform.identity(d)
    if kind is PresetKind.FULL_HADAMARD:
        a = hadamard(d, randomized=True, seed=seed)
    elif kind is PresetKind.BLOCK_HADAMARD:
        a = block_hadamard(d, block, randomized=True, seed=seed)
    else:
        a = random_orthogonal(d, seed)
    return AffineTransform(a, np.zeros(d), a.T.copy())
