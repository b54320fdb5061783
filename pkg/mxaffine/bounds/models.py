from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.exceptions import ConfigurationError, DimensionError

PROBABILITY_TOL = 1e-12


@dataclass
class GaussianSource:
    """Independent Gaussian rows, optionally with scaled outlier channels."""

    d: int
    sigma: float = 1.0
    mean: Optional[np.ndarray] = None
    outlier_channels: tuple = ()
    outlier_scale: float = 1.0

    def __post_init__(self):
        if self.sigma < 0 or self.outlier_scale <= 0:
            raise ConfigurationError(
                'sigma must be nonnegative and outlier_scale positive'
            )
        if any(not 0 <= c < self.d for c in self.outlier_channels):
            raise ConfigurationError(
                f'outlier channels {self.outlier_channels} outside d={self.d}'
            )

    def draw(self, n, rng):
        samples = rng.standard_normal((n, self.d)) * self.sigma
        samples[:, list(self.outlier_channels)] *= self.outlier_scale
        if self.mean is not None:
            samples = samples + self.mean
        return samples


@dataclass
class BoundReport:
    empirical_mse: float
    spec_norm_sq: float
    m_i: np.ndarray
    kappa: float
    bound_value: float
    holds: bool
    sample_count: int
    chain_violations: int = 0
    std_error: float = 0.0


@dataclass
class LemmaReport:
    family: str
    sigma: float
    block: int
    empirical: float
    std_error: float
    bound: float
    margin: float
    holds: bool


@dataclass
class CategoricalScenario:
    """Context-conditional tables over `outcomes` values for `contexts`
    equally likely contexts."""

    p_theta: np.ndarray
    p_tilde: np.ndarray
    q: np.ndarray
    epsilon: float

    def __post_init__(self):
        tables = {'p_theta': self.p_theta, 'p_tilde': self.p_tilde,
                  'q': self.q}
        shapes = {np.shape(table) for table in tables.values()}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise DimensionError(f'tables must share one 2-D shape: {shapes}')
        for name, table in tables.items():
            table = np.asarray(table, dtype=np.float64)
            setattr(self, name, table)
            if np.any(np.abs(table.sum(axis=1) - 1.0) > PROBABILITY_TOL):
                raise ConfigurationError(f'rows of {name} do not sum to 1')
            if np.any(table < self.epsilon):
                raise ConfigurationError(
                    f'{name} has entries below epsilon {self.epsilon}'
                )

    @property
    def contexts(self):
        return self.p_theta.shape[0]

    @property
    def outcomes(self):
        return self.p_theta.shape[1]


@dataclass
class ScenarioReport:
    delta: float
    expected_kl: float
    expected_tv: float
    rhs: float
    slack: float
    holds: bool


@dataclass
class DemoReport:
    x: np.ndarray
    block: int
    transformed: np.ndarray
    identity_block_error: np.ndarray
    hadamard_block_error: np.ndarray
    identity_m_i: np.ndarray = field(default=None)
    hadamard_m_i: np.ndarray = field(default=None)
