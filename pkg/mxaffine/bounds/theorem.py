"""Monte Carlo checks of the transformation-error bound."""
import logging

import numpy as np
from scipy import stats

from core.exceptions import DimensionError
from core.utils import make_rng
from linalg.constructions import hadamard, random_orthogonal
from linalg.kernels import singular_values
from mxaffine import settings
from mxquant.formats import bound_constant, mx_config
from mxquant.metrics import transformation_mse
from mxquant.quantizer import quantize_dequantize
from transforms.analysis import block_inverse_norms
from transforms.models import AffineTransform

from .models import BoundReport, DemoReport

logger = logging.getLogger(__name__)

# relative round-off allowance of the per-sample comparison
CHAIN_RTOL = 1e-9


def _transformed(transform, block, samples):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    d = samples.shape[1]
    if block < 1 or d % block:
        raise DimensionError(f'block {block} does not divide dimension {d}')
    if transform is None:
        return samples
    if transform.dim != d:
        raise DimensionError(
            f'transform of dimension {transform.dim} for samples of '
            f'dimension {d}'
        )
    return transform.apply(samples)


def block_maxima_sq(transform, block, samples):
    """Squared block-wise max of |T(x)|, one row per sample."""
    y = _transformed(transform, block, samples)
    n, d = y.shape
    return np.abs(y).reshape(n, d // block, block).max(axis=2) ** 2


def estimate_mi(transform, block, samples):
    """Monte Carlo M_i = E[(max_{j in block i} |T(x)_j|)^2]."""
    return block_maxima_sq(transform, block, samples).mean(axis=0)


def blockwise_bound_terms(transform, block, samples):
    """||(A^-1)_i||^2 M_i per block."""
    if transform is None:
        transform = AffineTransform.identity(np.shape(samples)[-1])
    norms = block_inverse_norms(transform.a, block, transform.a_inv)
    return norms ** 2 * estimate_mi(transform, block, samples)


def random_affine(d, seed=0):
    """Rotation times a diagonal scaling in [0.5, 2], with a Gaussian shift."""
    rng = make_rng(seed)
    a = random_orthogonal(d, rng) @ np.diag(rng.uniform(0.5, 2.0, d))
    return AffineTransform(a, rng.standard_normal(d))


def inverse_norm_sq(transform):
    if transform is None:
        return 1.0
    return float(singular_values(transform.a_inv)[0] ** 2)


def theorem1_check(transform, config, source,
                   n_samples=settings.BOUND_SAMPLES, seed=0,
                   slack=settings.MC_SLACK_STD_ERRORS):
    """Empirical transformation MSE against ||A^-1||^2 kappa mean(M_i).

    The per-sample inequality is checked for every draw; the report holds
    only if no sample violates it and the averaged comparison passes
    within `slack` standard errors.
    """
    samples = source.draw(n_samples, make_rng(seed))
    block = config.block_size
    maxima = block_maxima_sq(transform, block, samples)
    if transform is None:
        restored = quantize_dequantize(samples, config)
    else:
        restored = transform.apply_inverse(
            quantize_dequantize(transform.apply(samples), config)
        )
    per_sample = np.mean((samples - restored) ** 2, axis=1)
    spec_norm_sq = inverse_norm_sq(transform)
    kappa = bound_constant(config.format)
    per_sample_bound = spec_norm_sq * kappa * maxima.mean(axis=1)
    violations = int(np.sum(
        per_sample > per_sample_bound * (1.0 + CHAIN_RTOL) + 1e-300
    ))
    m_i = maxima.mean(axis=0)
    bound_value = spec_norm_sq * kappa * float(m_i.mean())
    empirical = transformation_mse(transform, config, samples).mse
    std_error = 0.0
    if n_samples > 1:
        std_error = float(stats.sem(per_sample_bound - per_sample))
    holds = violations == 0 and empirical <= bound_value + slack * std_error
    logger.debug(
        'bound check %s: mse %.4g <= %.4g (%d violations)',
        config.format, empirical, bound_value, violations,
    )
    return BoundReport(
        empirical_mse=empirical,
        spec_norm_sq=spec_norm_sq,
        m_i=m_i,
        kappa=kappa,
        bound_value=bound_value,
        holds=bool(holds),
        sample_count=n_samples,
        chain_violations=violations,
        std_error=std_error,
    )


def dirac_hadamard_demo(element_format='FP4_E2M1'):
    """A spike in one channel: the Hadamard evens out the blocks."""
    x = np.array([10.0, 1.0, 0.5, 0.5])
    block = 2
    config = mx_config(element_format, block)
    h = hadamard(4)
    rotation = AffineTransform(h, np.zeros(4), h.T)
    return DemoReport(
        x=x,
        block=block,
        transformed=rotation.apply(x),
        identity_block_error=transformation_mse(
            None, config, x
        ).per_block_mse,
        hadamard_block_error=transformation_mse(
            rotation, config, x
        ).per_block_mse,
        identity_m_i=estimate_mi(None, block, x),
        hadamard_m_i=estimate_mi(rotation, block, x),
    )
