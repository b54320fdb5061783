import csv
import enum
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from core.exceptions import ConfigurationError
from mxaffine import settings
from transforms.models import Parameterization

DEFAULT_STEPS = {
    Parameterization.LU: settings.LU_STEPS,
    Parameterization.QR: settings.QR_STEPS,
}


def default_steps(parameterization):
    return DEFAULT_STEPS[Parameterization(parameterization)]


class LossKind(enum.Enum):
    KL = 'kl'
    CE = 'ce'
    BLOCK_MSE = 'block_mse'


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of transformation learning.

    `freeze` holds parameter names kept at their initial value; a bare
    field name such as 'log_s' freezes that field in every transform,
    a full path such as 't1.v' freezes a single tensor.
    """

    steps: int = settings.LU_STEPS
    base_lr: float = settings.LEARNING_RATE
    weight_decay: float = settings.WEIGHT_DECAY
    warmup_fraction: float = settings.WARMUP_FRACTION
    warmup_start_factor: float = settings.WARMUP_START_FACTOR
    betas: tuple = settings.ADAM_BETAS
    eps: float = settings.ADAM_EPS
    volume_lambda: float = settings.VOLUME_LAMBDA
    diag_lambda: float = settings.DIAGONAL_LAMBDA
    temperature: float = settings.TEMPERATURE
    batch_size: int = settings.BATCH_SIZE
    loss: LossKind = LossKind.KL
    seed: int = 0
    log_every: int = settings.LOG_EVERY
    freeze: frozenset = frozenset()
    progress: bool = True

    def __post_init__(self):
        if isinstance(self.loss, str):
            try:
                object.__setattr__(self, 'loss', LossKind(self.loss.lower()))
            except ValueError:
                raise ConfigurationError(f'unknown loss {self.loss!r}')
        object.__setattr__(self, 'freeze', frozenset(self.freeze))
        object.__setattr__(self, 'betas', tuple(self.betas))
        checks = {
            'steps': self.steps >= 0,
            'temperature': self.temperature > 0,
            'volume_lambda': self.volume_lambda >= 0,
            'diag_lambda': self.diag_lambda >= 0,
            'batch_size': self.batch_size >= 1,
            'log_every': self.log_every >= 1,
            'warmup_fraction': 0 <= self.warmup_fraction <= 1,
            'base_lr': self.base_lr >= 0,
        }
        for name, valid in checks.items():
            if not valid:
                raise ConfigurationError(
                    f'invalid {name}: {getattr(self, name)!r}'
                )

    def is_frozen(self, name):
        return name in self.freeze or name.rsplit('.', 1)[-1] in self.freeze


@dataclass
class LossTerms:
    total: float
    dist: float
    vol: float


@dataclass
class TraceRecord:
    step: int
    lr: float
    loss_total: float
    loss_dist: float
    loss_vol: float
    orth_dev: float
    offblock_norm: float


@dataclass
class TrainTrace:
    records: List[TraceRecord] = field(default_factory=list)
    # loss over the whole calibration set before and after training
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    # training raised the loss and the initialization was returned
    restored: bool = False

    def __len__(self):
        return len(self.records)

    def append(self, record):
        self.records.append(record)

    def column(self, name):
        return np.array([getattr(record, name) for record in self.records])

    def to_csv(self, path):
        with open(path, 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=settings.TRACE_COLUMNS)
            writer.writeheader()
            for record in self.records:
                writer.writerow(asdict(record))


@dataclass
class GradCheckReport:
    name: str
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_deviation: float
