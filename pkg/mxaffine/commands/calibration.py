import logging

import numpy as np

from core.exceptions import ConfigurationError
from core.utils import make_rng
from toymodel.forward import forward_fp

from .container import read_container
from .models import CalibrationKind

logger = logging.getLogger(__name__)

# Generator stream reserved for picking outlier channels, so the channels
# do not move when the sample count changes.
CHANNEL_STREAM = 1


def outlier_channels(spec):
    """The `outlier_channel_count` channels scaled by the generator."""
    rng = make_rng([spec.seed, CHANNEL_STREAM])
    chosen = rng.choice(spec.d, size=spec.outlier_channel_count,
                        replace=False)
    return np.sort(chosen)


def _sample_tokens(spec, weights, config, rng):
    tokens = np.empty((spec.n_samples, spec.seq_len), dtype=np.int64)
    tokens[:, 0] = rng.integers(0, spec.vocab, size=spec.n_samples)
    for position in range(1, spec.seq_len):
        logits = forward_fp(weights, config, tokens[:, :position])[:, -1]
        logits = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        cumulative = np.cumsum(probs, axis=1)
        draws = rng.random((spec.n_samples, 1)) * cumulative[:, -1:]
        tokens[:, position] = np.argmax(cumulative > draws, axis=1)
    return tokens


def generate_calibration(spec, weights=None, config=None):
    """Seeded synthetic calibration data.

    Gaussian kinds give (n_samples, d) float arrays; token sequences give
    (n_samples, seq_len) integer ids, sampled from the full-precision
    model when `spec.sampled` is set (which needs `weights` and `config`).
    """
    rng = make_rng(spec.seed)
    if spec.kind is CalibrationKind.GAUSSIAN:
        return rng.standard_normal((spec.n_samples, spec.d))
    if spec.kind is CalibrationKind.GAUSSIAN_OUTLIER_CHANNELS:
        samples = rng.standard_normal((spec.n_samples, spec.d))
        samples[:, outlier_channels(spec)] *= spec.outlier_scale
        return samples
    if not spec.sampled:
        return rng.integers(0, spec.vocab, size=(spec.n_samples,
                                                 spec.seq_len))
    if weights is None or config is None:
        raise ConfigurationError(
            'sampled token sequences need the model weights'
        )
    if spec.vocab != config.vocab_size:
        raise ConfigurationError(
            f'calibration vocab {spec.vocab} differs from the model vocab '
            f'{config.vocab_size}'
        )
    logger.info('sampling %d calibration sequences of length %d',
                spec.n_samples, spec.seq_len)
    return _sample_tokens(spec, weights, config, rng)


def calibration_tokens(config, weights):
    """Token sequences for the toy model: from file or generated."""
    if config.calibration_path is not None:
        tensors = read_container(config.calibration_path)
        if 'tokens' not in tensors:
            raise ConfigurationError(
                f'{config.calibration_path} holds no tokens tensor'
            )
        return tensors['tokens'].astype(np.int64)
    if not config.calibration.tokens:
        raise ConfigurationError(
            f'the toy model calibrates on token sequences, not '
            f'{config.calibration.kind.value} samples'
        )
    return generate_calibration(config.calibration, weights, config.model)


def calibration_tensors(spec, samples):
    """Container tensors for generated calibration data."""
    if spec.tokens:
        return {'tokens': samples.astype(np.uint32)}
    tensors = {'samples': samples}
    if spec.kind is CalibrationKind.GAUSSIAN_OUTLIER_CHANNELS:
        tensors['outlier_channels'] = outlier_channels(spec).astype(
            np.uint32
        )
    return tensors
