import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from core.exceptions import (DimensionError, DivergenceError, NonFiniteError,
                             NumericalError)
from core.utils import make_rng
from toymodel.folding import fold_rmsnorm
from toymodel.forward import check_tokens, run
from toymodel.models import Activations
from transforms.analysis import off_block_diag_norm, orthogonality_deviation
from transforms.models import Parameterization
from transforms.parameterizations import assemble

from .losses import blockwise_mse_loss, ce_loss, kl_distill_loss
from .models import LossKind, LossTerms, TraceRecord, TrainTrace
from .optim import AdamWState, learning_rate, optimizer_step
from .parameters import LearnableTransforms

logger = logging.getLogger(__name__)


@dataclass
class TeacherOutputs:
    logits: np.ndarray
    blocks: list = field(default_factory=list)

    def rows(self, index):
        return TeacherOutputs(
            self.logits[index], [block[index] for block in self.blocks]
        )


def teacher_outputs(weights, config, tokens):
    """Full-precision logits and block outputs, computed once and cached."""
    capture = Activations()
    logits = run(weights, config, tokens, capture=capture)
    return TeacherOutputs(
        logits.data, [block.data for block in capture.blocks]
    )


def _distillation(cfg, teacher, logits, capture, tokens):
    if cfg.loss is LossKind.KL:
        return kl_distill_loss(teacher.logits, logits, cfg.temperature)
    if cfg.loss is LossKind.CE:
        return ce_loss(logits[:, :-1], tokens[:, 1:])
    return blockwise_mse_loss(teacher.blocks, capture.blocks)


def objective(student_weights, config, learnable, qpoints, tokens, cfg,
              teacher, quantizer=None):
    """Total loss as a Tensor, its terms, and the parameter leaves.

    `student_weights` must have the RMSNorm gains folded.
    """
    leaves = learnable.leaves(cfg)
    capture = Activations() if cfg.loss is LossKind.BLOCK_MSE else None
    logits = run(
        student_weights, config, tokens, learnable.injected(leaves),
        qpoints, quantizer, capture,
    )
    dist = _distillation(cfg, teacher, logits, capture, tokens)
    volume, diagonal = learnable.regularizers(leaves)
    total = dist + volume * cfg.volume_lambda + diagonal * cfg.diag_lambda
    terms = LossTerms(
        total=float(total.data), dist=float(dist.data),
        vol=float(volume.data),
    )
    return total, terms, leaves


def gradients(weights, config, learnable, qpoints, tokens, cfg,
              teacher=None, quantizer=None):
    """Loss terms and d(total loss)/d(parameter) for every trainable name.

    Frozen parameters are absent from the returned gradients.
    """
    tokens = check_tokens(tokens, config)
    if teacher is None:
        teacher = teacher_outputs(weights, config, tokens)
    total, terms, leaves = objective(
        fold_rmsnorm(weights), config, learnable, qpoints, tokens, cfg,
        teacher, quantizer,
    )
    if total.requires_grad:
        total.backward()
    grads = {}
    for name, leaf in leaves.items():
        if not leaf.requires_grad:
            continue
        grad = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError('non-finite gradient', path=name)
        grads[name] = grad
    return terms, grads


def _record(step, cfg, learnable, terms, block):
    a1 = assemble(learnable.t1).a
    return TraceRecord(
        step=step,
        lr=learning_rate(step, cfg),
        loss_total=terms.total,
        loss_dist=terms.dist,
        loss_vol=terms.vol,
        orth_dev=orthogonality_deviation(a1),
        offblock_norm=off_block_diag_norm(a1, block),
    )


def _backward(total, leaves, step, trace):
    if total.requires_grad:
        total.backward()
    grads = {
        name: leaf.grad for name, leaf in leaves.items()
        if leaf.requires_grad and leaf.grad is not None
    }
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(
                f'non-finite gradient for {name} at step {step}',
                trace=trace,
            )
    return grads


def _calibration(calibration, config):
    calibration = check_tokens(calibration, config)
    if not len(calibration):
        raise DimensionError('calibration set is empty')
    return calibration


def calibration_loss(student_weights, config, learnable, qpoints,
                     calibration, cfg, teacher):
    """Total loss of `learnable` over the whole calibration set."""
    _, terms, _ = objective(
        student_weights, config, learnable, qpoints, calibration,
        dataclasses.replace(cfg, freeze=frozenset(learnable.arrays())),
        teacher,
    )
    return terms.total


def fit_transforms(weights, config, learnable, qpoints, calibration, cfg,
                   trace_block):
    """Optimize the arrays of `learnable`; returns new params and the trace.

    The teacher is the full-precision model; the student is the same
    model with the transforms injected and activations quantized through
    the straight-through estimator. When training ends with a higher loss
    over the calibration set than it started with, the initialization is
    returned and `trace.restored` is set.
    """
    calibration = _calibration(calibration, config)
    teacher = teacher_outputs(weights, config, calibration)
    student_weights = fold_rmsnorm(weights)
    rng = make_rng(cfg.seed)
    batch = min(cfg.batch_size, len(calibration))
    state, trace = AdamWState(), TrainTrace()
    initial = learnable
    logger.info(
        'learning transforms: %d steps, batch %d, loss %s',
        cfg.steps, batch, cfg.loss.value,
    )
    steps = tqdm(range(cfg.steps), disable=not cfg.progress,
                 desc='learn', leave=False)
    for step in steps:
        rows = np.sort(rng.choice(len(calibration), size=batch,
                                  replace=False))
        tokens = calibration[rows]
        try:
            total, terms, leaves = objective(
                student_weights, config, learnable, qpoints, tokens, cfg,
                teacher.rows(rows),
            )
        except NumericalError as error:
            raise DivergenceError(
                f'step {step}: {error}', trace=trace
            ) from error
        if not np.isfinite(terms.total):
            raise DivergenceError(
                f'non-finite loss at step {step}', trace=trace
            )
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            trace.append(_record(step, cfg, learnable, terms, trace_block))
            steps.set_postfix(loss=f'{terms.total:.4g}')
        grads = _backward(total, leaves, step, trace)
        learnable = learnable.with_arrays(
            optimizer_step(learnable.arrays(), grads, state, step, cfg)
        )
    if trace.records:
        logger.info(
            'final loss %.4g (first %.4g)',
            trace.records[-1].loss_total, trace.records[0].loss_total,
        )
    if not cfg.steps:
        return learnable, trace
    try:
        trace.initial_loss, trace.final_loss = (
            calibration_loss(student_weights, config, params, qpoints,
                             calibration, cfg, teacher)
            for params in (initial, learnable)
        )
    except NumericalError as error:
        raise DivergenceError(
            f'after training: {error}', trace=trace
        ) from error
    if not trace.final_loss <= trace.initial_loss:
        logger.warning(
            'training raised the calibration loss from %.4g to %.4g, '
            'keeping the initialization',
            trace.initial_loss, trace.final_loss,
        )
        trace.restored = True
        return initial, trace
    return learnable, trace


def train_transforms(weights, config, scheme, qpoints, calibration, cfg,
                     parameterization=Parameterization.LU, t3_enabled=False,
                     t3_block=None):
    """Learn T1 and the per-layer T2; returns (TransformSet, TrainTrace)."""
    learnable = LearnableTransforms.initialize(
        config, scheme, parameterization, seed=cfg.seed,
        t3_enabled=t3_enabled, t3_block=t3_block or scheme.block,
    )
    learnable, trace = fit_transforms(
        weights, config, learnable, qpoints, calibration, cfg, scheme.block
    )
    return learnable.transform_set(), trace
