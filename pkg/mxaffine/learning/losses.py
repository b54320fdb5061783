"""Distillation objectives on autograd tensors.

Teacher quantities are constants; student quantities may be Tensors that
carry gradients back to the transform parameters.
"""
import numpy as np

from core.exceptions import DimensionError

from .autograd import Tensor, as_tensor


def _check_shapes(teacher, student, what):
    if teacher.shape != student.shape:
        raise DimensionError(
            f'{what}: teacher shape {teacher.shape} does not match student '
            f'shape {student.shape}'
        )


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kl_distill_loss(teacher_logits, student_logits, temperature=1.0):
    """Mean over positions of KL(softmax(t / tau) || softmax(s / tau))."""
    teacher = np.asarray(
        teacher_logits.data if isinstance(teacher_logits, Tensor)
        else teacher_logits, dtype=np.float64,
    )
    student = as_tensor(student_logits)
    _check_shapes(teacher, student, 'kl_distill_loss')
    log_p = _log_softmax(teacher / temperature)
    log_q = (student * (1.0 / temperature)).log_softmax(axis=-1)
    per_position = (np.exp(log_p) * (log_p - log_q)).sum(axis=-1)
    return per_position.mean()


def ce_loss(student_logits, next_tokens):
    """Mean negative log-likelihood of the target ids."""
    student = as_tensor(student_logits)
    targets = np.asarray(next_tokens)
    vocab = student.shape[-1]
    if targets.shape != student.shape[:-1]:
        raise DimensionError(
            f'targets of shape {targets.shape} for logits {student.shape}'
        )
    if (not np.issubdtype(targets.dtype, np.integer)
            or targets.min(initial=0) < 0
            or targets.max(initial=0) >= vocab):
        raise DimensionError(f'target ids must lie in [0, {vocab})')
    one_hot = np.eye(vocab)[targets]
    return -(student.log_softmax(axis=-1) * one_hot).sum(axis=-1).mean()


def blockwise_mse_loss(teacher_blocks, student_blocks):
    """Mean over blocks of the mean squared deviation of their outputs."""
    if len(teacher_blocks) != len(student_blocks):
        raise DimensionError(
            f'{len(teacher_blocks)} teacher blocks for '
            f'{len(student_blocks)} student blocks'
        )
    if not teacher_blocks:
        raise DimensionError('no block outputs to compare')
    total = 0.0
    for teacher, student in zip(teacher_blocks, student_blocks):
        teacher = np.asarray(teacher, dtype=np.float64)
        student = as_tensor(student)
        _check_shapes(teacher, student, 'blockwise_mse_loss')
        diff = student - teacher
        total = (diff * diff).mean() + total
    return total * (1.0 / len(teacher_blocks))


def volume_regularizer(log_s):
    return as_tensor(log_s).sum() ** 2


def diagonal_regularizer(log_s):
    log_s = as_tensor(log_s)
    return (log_s * log_s).mean()


def total_loss(dist_loss, volume_regs, lam):
    """dist + lam * sum(volume_regs); works for floats and Tensors."""
    total = dist_loss
    for reg in volume_regs:
        total = total + reg * lam
    return total
