import logging

import numpy as np

from core.exceptions import VerificationError
from mxaffine import settings

from .forward import forward_fp, forward_transformed

logger = logging.getLogger(__name__)


def relative_deviation(logits_a, logits_b):
    return float(
        np.max(np.abs(logits_a - logits_b)) / (1.0 + np.max(np.abs(logits_a)))
    )


def _enforce(deviation, tol):
    logger.debug('fold equivalence deviation %.3e', deviation)
    if tol is not None and deviation > tol:
        raise VerificationError(
            f'folded model deviates by {deviation:.3e} (tolerance {tol:g})',
            failures=[('fold_equivalence', deviation)],
        )
    return deviation


def check_equivalence(weights_a, weights_b, config, token_batches,
                      tol=None):
    """Max over batches of ||a - b||_inf / (1 + ||a||_inf).

    With `tol` set, a deviation above it raises VerificationError.
    """
    return _enforce(max((
        relative_deviation(forward_fp(weights_a, config, tokens),
                           forward_fp(weights_b, config, tokens))
        for tokens in token_batches
    ), default=0.0), tol)


def check_folding(weights, folded, config, transforms, token_batches,
                  tol=settings.FOLD_EQUIVALENCE_TOL):
    """Folded weights against the network with the transforms injected."""
    return _enforce(max((
        relative_deviation(
            forward_transformed(weights, config, transforms, None, tokens),
            forward_fp(folded, config, tokens),
        )
        for tokens in token_batches
    ), default=0.0), tol)
