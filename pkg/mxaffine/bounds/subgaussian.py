import logging
import math

import numpy as np
from scipy import optimize, special, stats

from core.exceptions import ConfigurationError
from core.utils import make_rng
from mxaffine import settings

from .models import LemmaReport

logger = logging.getLogger(__name__)

CHUNK_TRIALS = 10_000
FAMILIES = ('gaussian', 'uniform')


def psi2_gaussian(sigma):
    """psi_2 norm of N(0, sigma^2): E exp(X^2 / t^2) = 2 at t^2 = 8/3 s^2."""
    if sigma < 0:
        raise ConfigurationError(f'sigma must be nonnegative, got {sigma}')
    return sigma * math.sqrt(8.0 / 3.0)


def _uniform_moment(u):
    # E exp(X^2 / t^2) for X ~ U[-a, a] with u = a / t
    return math.sqrt(math.pi) * special.erfi(u) / (2.0 * u)


def psi2_uniform(half_width):
    """psi_2 norm of U[-a, a] by root finding."""
    if half_width < 0:
        raise ConfigurationError(
            f'half width must be nonnegative, got {half_width}'
        )
    if half_width == 0:
        return 0.0
    u = optimize.brentq(lambda u: _uniform_moment(u) - 2.0, 1e-6, 3.0,
                        xtol=1e-14)
    return half_width / u


def subgaussian_mi_bound(mu_block, k, block):
    """(max |mu| + K sqrt(log 2B + 2B Gamma(1, log 2B)))^2 with c = 1."""
    if k < 0 or block < 1:
        raise ConfigurationError(
            f'need K >= 0 and a positive block, got K={k}, B={block}'
        )
    log_2b = math.log(2.0 * block)
    tail = 2.0 * block * float(special.gammaincc(1.0, log_2b))
    mu_max = float(np.max(np.abs(mu_block), initial=0.0))
    return (mu_max + k * math.sqrt(log_2b + tail)) ** 2


def _draw(family, scale, shape, rng):
    if family == 'gaussian':
        return rng.standard_normal(shape) * scale
    half_width = scale * math.sqrt(3.0)
    return rng.uniform(-half_width, half_width, size=shape)


def _psi2(family, sigma):
    if family == 'gaussian':
        return psi2_gaussian(sigma)
    return psi2_uniform(sigma * math.sqrt(3.0))


def lemma_max_check(sigma, block, trials=settings.LEMMA_TRIALS, seed=0,
                    mu=None, family='gaussian',
                    slack=settings.MC_SLACK_STD_ERRORS):
    """Monte Carlo E[max_j y_j^2] against the sub-Gaussian bound.

    Entries are independent with means `mu` (zeros by default) and
    standard deviation `sigma`; the uniform family matches the variance.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f'unknown family {family!r}')
    if block < 1:
        raise ConfigurationError(f'block must be positive, got {block}')
    mu = np.zeros(block) if mu is None else np.asarray(mu, dtype=np.float64)
    rng = make_rng(seed)
    maxima = []
    for start in range(0, trials, CHUNK_TRIALS):
        size = min(CHUNK_TRIALS, trials - start)
        y = mu + _draw(family, sigma, (size, block), rng)
        maxima.append(np.max(y * y, axis=1))
    maxima = np.concatenate(maxima)
    empirical = float(maxima.mean())
    std_error = float(stats.sem(maxima)) if trials > 1 else 0.0
    bound = subgaussian_mi_bound(mu, _psi2(family, sigma), block)
    logger.debug('lemma %s sigma=%g B=%d: %.4g <= %.4g',
                 family, sigma, block, empirical, bound)
    return LemmaReport(
        family=family,
        sigma=float(sigma),
        block=int(block),
        empirical=empirical,
        std_error=std_error,
        bound=bound,
        margin=bound - empirical,
        holds=bool(empirical <= bound + slack * std_error),
    )
