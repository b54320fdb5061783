import enum
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DimensionError
from linalg.kernels import invert
from linalg.models import Permutation
from mxaffine import settings


class Parameterization(enum.Enum):
    LU = 'LU'
    QR = 'QR'


class InitSchemeKind(enum.Enum):
    IDENTITY = 'Identity'
    IDENTITY_NOISE = 'IdentityNoise'
    FULL_ORTHOGONAL = 'FullOrthogonal'
    BD_ORTHOGONAL = 'BDOrthogonal'
    BD_ORTHOGONAL_NOISE = 'BDOrthogonalNoise'
    FULL_HADAMARD = 'FullHadamard'
    BD_HADAMARD = 'BDHadamard'
    BD_HADAMARD_NOISE = 'BDHadamardNoise'

    @property
    def block_diagonal(self):
        return self.value.startswith('BD')

    @property
    def noisy(self):
        return self.value.endswith('Noise')

    @property
    def hadamard(self):
        return 'Hadamard' in self.value


class PresetKind(enum.Enum):
    NONE = 'None'
    FULL_HADAMARD = 'FullHadamard'
    BLOCK_HADAMARD = 'BlockHadamard'
    RANDOM_ORTHOGONAL = 'RandomOrthogonal'


@dataclass(frozen=True)
class InitScheme:
    kind: InitSchemeKind = InitSchemeKind(settings.TRANSFORM_INIT_SCHEME)
    noise_std: float = settings.TRANSFORM_NOISE_STD
    block: int = settings.TRANSFORM_INIT_BLOCK

    def check(self, d):
        if self.kind.block_diagonal and (self.block < 1 or d % self.block):
            raise DimensionError(
                f'{self.kind.value} block {self.block} does not divide {d}'
            )


@dataclass
class AffineTransform:
    """T(x) = A x + v on row vectors, with A^-1 cached."""

    a: np.ndarray
    v: np.ndarray
    a_inv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.a.ndim != 2 or self.a.shape != (self.v.size, self.v.size):
            raise DimensionError(
                f'matrix {self.a.shape} does not match shift {self.v.shape}'
            )
        if self.a_inv is None:
            self.a_inv = invert(self.a)

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.zeros(d), np.eye(d))

    @property
    def dim(self):
        return self.v.size

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionError(
                f'transform of dimension {self.dim} applied to shape '
                f'{x.shape}'
            )
        return x

    def apply(self, x):
        return self._check(x) @ self.a.T + self.v

    def apply_inverse(self, y):
        return (self._check(y) - self.v) @ self.a_inv.T


@dataclass
class LuParams:
    """A = P L (U + diag(s)), s = sign_s * exp(log_s).

    Only the strictly lower part of `l_strict` and the strictly upper part
    of `u_strict` are read.
    """

    permutation: Permutation
    l_strict: np.ndarray
    u_strict: np.ndarray
    log_s: np.ndarray
    sign_s: np.ndarray
    v: np.ndarray

    @property
    def dim(self):
        return self.log_s.size

    @property
    def parameterization(self):
        return Parameterization.LU


@dataclass
class QrParams:
    """A = exp((G - G^T) / 2) (R + diag(s))."""

    g: np.ndarray
    r_strict: np.ndarray
    log_s: np.ndarray
    sign_s: np.ndarray
    v: np.ndarray

    @property
    def dim(self):
        return self.log_s.size

    @property
    def parameterization(self):
        return Parameterization.QR
