"""
Project settings for mxaffine.

Every tunable default of the library lives here as a module-level constant.
Library code imports this module and reads the constants it needs;
experiment configs (JSON) override them per run.
"""

import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


# Microscaling

MX_BLOCK_SIZE = 32
MX_ELEMENT_FORMAT = 'FP4_E2M1'

# Shared exponent used for all-zero blocks.
E_MIN = -127


# Toy transformer

MODEL_D_MODEL = 64
MODEL_N_LAYERS = 2
MODEL_N_HEADS = 4
MODEL_D_FF = 128
MODEL_VOCAB_SIZE = 256
MODEL_MAX_SEQ_LEN = 64
MODEL_HAS_BIAS = True
MODEL_WEIGHT_STD = 0.08
RMSNORM_EPS = 1e-6
# Embedding columns scaled up so the residual stream carries channel outliers.
MODEL_OUTLIER_CHANNELS = (5, 37)
MODEL_OUTLIER_SCALE = 16.0


# Transformations

TRANSFORM_PARAMETERIZATION = 'LU'
TRANSFORM_INIT_SCHEME = 'BDHadamardNoise'
TRANSFORM_INIT_BLOCK = MX_BLOCK_SIZE
TRANSFORM_NOISE_STD = 1e-3


# Transformation learning

LU_STEPS = 1000
QR_STEPS = 2500
LEARNING_RATE = 5e-5
WEIGHT_DECAY = 1e-2
WARMUP_FRACTION = 0.1
WARMUP_START_FACTOR = 0.1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
VOLUME_LAMBDA = 1e-2
DIAGONAL_LAMBDA = 0.0
TEMPERATURE = 1.0
BATCH_SIZE = 8
LOG_EVERY = 10
GRADCHECK_STEP = 1e-5


# Calibration and weight quantization

CALIBRATION_SAMPLES = 256
CALIBRATION_SEQ_LEN = MODEL_MAX_SEQ_LEN
GPTQ_DAMPING = 0.01
FOLD_EQUIVALENCE_TOL = 1e-5


# Bound verification

MC_SLACK_STD_ERRORS = 3.0
BOUND_SAMPLES = 10_000
LEMMA_TRIALS = 100_000
SCENARIO_COUNT = 1000


# Files and reports

CONFIG_SCHEMA = 1
REPORT_SCHEMA_VERSION = 1
CONTAINER_VERSION = 1
TRACE_COLUMNS = (
    'step', 'lr', 'loss_total', 'loss_dist', 'loss_vol',
    'orth_dev', 'offblock_norm',
)
SYNTHETIC_DATA_NOTICE = (
    'synthetic calibration data on a toy transformer; '
    'not a reproduction of any published benchmark table'
)


# Logging

LOG_LEVEL = os.environ.get('MXAFFINE_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
}
