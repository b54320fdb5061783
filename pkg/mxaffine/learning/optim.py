import math
from dataclasses import dataclass, field

import numpy as np


def warmup_steps(cfg):
    return int(round(cfg.warmup_fraction * cfg.steps))


def learning_rate(step, cfg):
    """Linear warmup from `warmup_start_factor` to 1, then cosine to 0."""
    warmup = warmup_steps(cfg)
    if step < warmup:
        start = cfg.warmup_start_factor
        factor = start + (1.0 - start) * step / warmup
    else:
        progress = (step - warmup) / max(1, cfg.steps - warmup)
        factor = 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))
    return cfg.base_lr * factor


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def optimizer_step(params, grads, state, step_index, cfg):
    """One AdamW update with decoupled weight decay.

    Returns a new dict; names missing from `grads` are left untouched.
    """
    lr = learning_rate(step_index, cfg)
    beta1, beta2 = cfg.betas
    state.t += 1
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t
    updated = dict(params)
    for name, grad in grads.items():
        m = state.m.get(name, np.zeros_like(grad))
        v = state.v.get(name, np.zeros_like(grad))
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        value = params[name] * (1.0 - lr * cfg.weight_decay)
        updated[name] = value - lr * (m / bias1) / (
            np.sqrt(v / bias2) + cfg.eps
        )
    return updated
