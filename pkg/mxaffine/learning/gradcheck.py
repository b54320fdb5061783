"""Central finite differences against the reverse-mode gradients."""
import logging

import numpy as np

from core.utils import make_rng
from mxaffine import settings
from toymodel.folding import fold_rmsnorm
from toymodel.forward import check_tokens

from .models import GradCheckReport
from .parameters import parameter_mask
from .ste import ActivationQuantizer
from .trainer import gradients, objective, teacher_outputs

logger = logging.getLogger(__name__)

ABSOLUTE_FLOOR = 1e-6


def relative_deviation(analytic, numeric, floor=ABSOLUTE_FLOOR):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale, initial=0.0))


def gradient_check(weights, config, learnable, qpoints, tokens, cfg,
                   entries=4, step=settings.GRADCHECK_STEP, seed=0):
    """Compare analytic and numeric gradients on sampled entries.

    With quantization enabled, the base point is evaluated in record mode
    and every perturbed evaluation in replay mode, so both sides see the
    same surrogate.
    """
    tokens = check_tokens(tokens, config)
    teacher = teacher_outputs(weights, config, tokens)
    student_weights = fold_rmsnorm(weights)
    quantizer = None
    if qpoints is not None and qpoints.enabled:
        quantizer = ActivationQuantizer(qpoints.mx).record()
    _, grads = gradients(weights, config, learnable, qpoints, tokens, cfg,
                         teacher, quantizer)
    arrays = learnable.arrays()
    rng = make_rng(seed)

    def loss_at(name, index, delta):
        value = arrays[name].copy()
        value[index] += delta
        moved = learnable.with_arrays({name: value})
        if quantizer is not None:
            quantizer.replay()
        _, terms, _ = objective(student_weights, config, moved, qpoints,
                                tokens, cfg, teacher, quantizer)
        return terms.total

    reports = []
    for name, grad in grads.items():
        candidates = np.argwhere(
            parameter_mask(name.rsplit('.', 1)[-1], grad.shape)
        )
        picked = candidates[rng.choice(
            len(candidates), size=min(entries, len(candidates)),
            replace=False,
        )]
        analytic, numeric = [], []
        for index in map(tuple, picked):
            analytic.append(grad[index])
            numeric.append(
                (loss_at(name, index, step) - loss_at(name, index, -step))
                / (2.0 * step)
            )
        analytic, numeric = np.array(analytic), np.array(numeric)
        reports.append(GradCheckReport(
            name=name, analytic=analytic, numeric=numeric,
            max_rel_deviation=relative_deviation(analytic, numeric),
        ))
        logger.debug('gradcheck %s: %.2e', name,
                     reports[-1].max_rel_deviation)
    return reports
