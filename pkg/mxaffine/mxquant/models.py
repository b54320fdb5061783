import enum
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ConfigurationError
from mxaffine import settings


class FormatKind(enum.Enum):
    FP4_E2M1 = 'FP4_E2M1'
    INT4 = 'INT4'
    FP8_E4M3 = 'FP8_E4M3'


@dataclass(frozen=True)
class ElementFormat:
    """Element grid of an MX format.

    `grid` is the sorted list of representable values (symmetric, one zero);
    `r_max` is the largest exponent the format represents.
    """

    kind: FormatKind
    grid: np.ndarray = field(repr=False, compare=False)
    r_max: int

    @property
    def magnitudes(self):
        """Non-negative half of the grid, ascending; index = code parity."""
        return self.grid[self.grid.size // 2:]

    @property
    def grid_max(self):
        return float(self.grid[-1])

    @property
    def zero_code(self):
        return self.grid.size // 2

    def __str__(self):
        return self.kind.value


@dataclass(frozen=True)
class MxConfig:
    format: ElementFormat
    block_size: int = settings.MX_BLOCK_SIZE

    def __post_init__(self):
        if self.block_size < 1:
            raise ConfigurationError(
                f'MX block size must be positive, got {self.block_size}'
            )


@dataclass
class MxQuantized:
    """Shared block exponents plus one grid index per element."""

    shape: tuple
    scale_exponents: np.ndarray
    codes: np.ndarray
    config: MxConfig


@dataclass
class ErrorReport:
    mse: float
    per_block_mse: np.ndarray
    sample_count: int
