import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Optional

from core.exceptions import ConfigurationError
from learning.models import TrainConfig, default_steps
from mxaffine import settings
from mxquant.formats import mx_config
from mxquant.models import MxConfig
from toymodel.models import ModelConfig, QuantPoints
from transforms.models import InitScheme, Parameterization


class CalibrationKind(enum.Enum):
    GAUSSIAN = 'gaussian'
    GAUSSIAN_OUTLIER_CHANNELS = 'gaussian_outlier_channels'
    TOKEN_SEQUENCES = 'token_sequences'


class WeightMethod(enum.Enum):
    RTN = 'rtn'
    GPTQ = 'gptq'


class AblationMethod(enum.Enum):
    NONE = 'none'
    HADAMARD_FULL = 'hadamard_full'
    HADAMARD_BLOCK = 'hadamard_block'
    LEARNED_ORTHOGONAL = 'learned_orthogonal'
    LEARNED_INVERTIBLE = 'learned_invertible'
    LATMIX_LU = 'latmix_lu'
    LATMIX_QR = 'latmix_qr'

    @property
    def learned(self):
        return self.value.startswith(('learned', 'latmix'))

    @property
    def parameterization(self):
        if self in (AblationMethod.LEARNED_ORTHOGONAL,
                    AblationMethod.LATMIX_QR):
            return Parameterization.QR
        return Parameterization.LU

    @property
    def frozen(self):
        """Parameter fields held at their initial value."""
        if self is AblationMethod.LEARNED_ORTHOGONAL:
            return frozenset({'r_strict', 'log_s'})
        if self is AblationMethod.LEARNED_INVERTIBLE:
            return frozenset({'v'})
        return frozenset()


@dataclass(frozen=True)
class SyntheticCalibSpec:
    """Seeded stand-in for a calibration corpus.

    Token sequences are drawn from the full-precision toy model itself when
    `sampled` is set, uniformly otherwise.
    """

    kind: CalibrationKind = CalibrationKind.TOKEN_SEQUENCES
    d: int = settings.MODEL_D_MODEL
    vocab: int = settings.MODEL_VOCAB_SIZE
    seq_len: int = settings.CALIBRATION_SEQ_LEN
    outlier_channel_count: int = 0
    outlier_scale: float = 1.0
    n_samples: int = settings.CALIBRATION_SAMPLES
    seed: int = 0
    sampled: bool = True

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                object.__setattr__(self, 'kind', CalibrationKind(self.kind))
            except ValueError:
                raise ConfigurationError(
                    f'unknown calibration kind {self.kind!r}'
                )
        checks = {
            'd': self.d >= 1,
            'vocab': self.vocab >= 1,
            'seq_len': self.seq_len >= 1,
            'n_samples': self.n_samples >= 1,
            'outlier_channel_count': (
                0 <= self.outlier_channel_count <= self.d
            ),
            'outlier_scale': self.outlier_scale > 0,
        }
        for name, valid in checks.items():
            if not valid:
                raise ConfigurationError(
                    f'invalid calibration {name}: {getattr(self, name)!r}'
                )

    @property
    def tokens(self):
        return self.kind is CalibrationKind.TOKEN_SEQUENCES


@dataclass(frozen=True)
class TransformSection:
    parameterization: Parameterization = Parameterization(
        settings.TRANSFORM_PARAMETERIZATION
    )
    scheme: InitScheme = field(default_factory=InitScheme)
    t3_enabled: bool = False


@dataclass(frozen=True)
class QuantizeSection:
    method: WeightMethod = WeightMethod.GPTQ
    damping: float = settings.GPTQ_DAMPING
    gate_tol: float = settings.FOLD_EQUIVALENCE_TOL
    gate_batches: int = 4


@dataclass(frozen=True)
class AblateSection:
    methods: tuple = tuple(method.value for method in AblationMethod)
    init_schemes: tuple = ()


@dataclass(frozen=True)
class SweepSection:
    block_sizes: tuple = (8, 16, 32, 64)
    methods: tuple = ('none', 'hadamard_full', 'hadamard_block')


@dataclass(frozen=True)
class BoundsSection:
    d: int = 64
    samples: int = settings.BOUND_SAMPLES
    lemma_trials: int = settings.LEMMA_TRIALS
    lemma_blocks: tuple = (2, 8, 32, 128)
    lemma_sigmas: tuple = (0.5, 1.0, 2.0)
    scenarios: int = settings.SCENARIO_COUNT
    formats: tuple = ('FP4_E2M1', 'INT4', 'FP8_E4M3')
    outlier_channels: tuple = (3, 40)
    outlier_scale: float = 20.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run of a command needs, defaults filled in."""

    model: ModelConfig = field(default_factory=ModelConfig)
    mx: MxConfig = field(default_factory=lambda: mx_config(
        settings.MX_ELEMENT_FORMAT, settings.MX_BLOCK_SIZE
    ))
    quant_points: QuantPoints = None
    transform: TransformSection = field(default_factory=TransformSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    calibration: SyntheticCalibSpec = field(
        default_factory=SyntheticCalibSpec
    )
    calibration_path: Optional[str] = None
    quantize: QuantizeSection = field(default_factory=QuantizeSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    seed: int = 0
    # the config left train.steps out: each parameterization gets its own
    steps_by_parameterization: bool = False

    def __post_init__(self):
        if self.quant_points is None:
            object.__setattr__(self, 'quant_points', QuantPoints(self.mx))

    def with_seed(self, seed):
        """The same experiment with every seeded component reseeded."""
        return dataclasses.replace(
            self,
            seed=seed,
            train=dataclasses.replace(self.train, seed=seed),
            calibration=dataclasses.replace(self.calibration, seed=seed),
        )

    def train_for(self, parameterization):
        """Train settings for learning with `parameterization`."""
        if not self.steps_by_parameterization:
            return self.train
        return dataclasses.replace(
            self.train, steps=default_steps(parameterization)
        )
