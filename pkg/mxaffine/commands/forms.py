"""Validation of JSON experiment configs.

Each section of the file has a form that names the keys it accepts and
builds the matching dataclass; anything unknown is rejected.
"""
import dataclasses
import json
import os

from core.exceptions import ConfigurationError
from learning.models import TrainConfig, default_steps
from mxaffine import settings
from mxquant.formats import mx_config
from toymodel.models import ModelConfig, QuantPoints
from transforms.models import InitScheme, InitSchemeKind, Parameterization

from .models import (AblateSection, AblationMethod, BoundsSection,
                     ExperimentConfig, QuantizeSection, SweepSection,
                     SyntheticCalibSpec, TransformSection, WeightMethod)


def _names(model, exclude=()):
    return tuple(
        item.name for item in dataclasses.fields(model)
        if item.name not in exclude
    )


def _enum(kind, value, label):
    try:
        return kind(value)
    except ValueError:
        choices = ', '.join(item.value for item in kind)
        raise ConfigurationError(
            f'unknown {label} {value!r}; choose from {choices}'
        )


class SectionForm:
    """One config section checked against `Meta.fields`.

    Values pass through `clean_<key>` when the form defines it; `save`
    builds `Meta.model` from the cleaned values.
    """

    class Meta:
        model = None
        fields = ()

    def __init__(self, data, prefix):
        self.data = {} if data is None else data
        self.prefix = prefix

    @property
    def cleaned_data(self):
        if not isinstance(self.data, dict):
            raise ConfigurationError(f'section {self.prefix} must be an '
                                     f'object')
        unknown = sorted(set(self.data) - set(self.Meta.fields))
        if unknown:
            raise ConfigurationError(
                f'unknown keys in {self.prefix}: {", ".join(unknown)}'
            )
        cleaned = {}
        for name, value in self.data.items():
            clean = getattr(self, f'clean_{name}', None)
            cleaned[name] = clean(value) if clean is not None else value
        return cleaned

    def build(self, model, values):
        try:
            return model(**values)
        except (TypeError, ValueError) as error:
            raise ConfigurationError(f'invalid {self.prefix}: {error}')

    def save(self):
        return self.build(self.Meta.model, self.cleaned_data)


class ModelForm(SectionForm):
    class Meta:
        model = ModelConfig
        fields = _names(ModelConfig)

    def clean_outlier_channels(self, value):
        return tuple(value)


class MxForm(SectionForm):
    class Meta:
        fields = ('format', 'block_size', 'sites')

    def clean_sites(self, value):
        unknown = sorted(set(value) - set(QuantPoints.SITES))
        if unknown:
            raise ConfigurationError(
                f'unknown quantization sites: {", ".join(unknown)}'
            )
        return frozenset(value)

    def save(self):
        cleaned = self.cleaned_data
        mx = mx_config(
            cleaned.get('format', settings.MX_ELEMENT_FORMAT),
            cleaned.get('block_size', settings.MX_BLOCK_SIZE),
        )
        if 'sites' not in cleaned:
            return mx, QuantPoints(mx)
        sites = cleaned['sites']
        return mx, QuantPoints(
            mx, **{site: site in sites for site in QuantPoints.SITES}
        )


class TransformForm(SectionForm):
    class Meta:
        fields = ('parameterization', 'init_scheme', 'noise_std',
                  'init_block', 't3_enabled')

    def clean_parameterization(self, value):
        return _enum(Parameterization, str(value).upper(),
                     'parameterization')

    def clean_init_scheme(self, value):
        return _enum(InitSchemeKind, value, 'init scheme')

    def save(self):
        cleaned = self.cleaned_data
        defaults = InitScheme()
        scheme = self.build(InitScheme, {
            'kind': cleaned.pop('init_scheme', defaults.kind),
            'noise_std': cleaned.pop('noise_std', defaults.noise_std),
            'block': cleaned.pop('init_block', defaults.block),
        })
        return self.build(TransformSection, dict(cleaned, scheme=scheme))


class TrainForm(SectionForm):
    class Meta:
        model = TrainConfig
        fields = _names(TrainConfig, exclude=('seed',))

    def clean_freeze(self, value):
        return frozenset(value)

    def clean_betas(self, value):
        return tuple(value)


class CalibrationForm(SectionForm):
    class Meta:
        model = SyntheticCalibSpec
        fields = _names(SyntheticCalibSpec, exclude=('seed',)) + ('path',)

    def clean_path(self, value):
        if not os.path.isfile(value):
            raise ConfigurationError(f'calibration file {value} not found')
        return value

    def save(self):
        cleaned = self.cleaned_data
        path = cleaned.pop('path', None)
        return self.build(SyntheticCalibSpec, cleaned), path


class QuantizeForm(SectionForm):
    class Meta:
        model = QuantizeSection
        fields = _names(QuantizeSection)

    def clean_method(self, value):
        return _enum(WeightMethod, str(value).lower(), 'weight method')


class AblateForm(SectionForm):
    class Meta:
        model = AblateSection
        fields = _names(AblateSection)

    def clean_methods(self, value):
        return tuple(
            _enum(AblationMethod, method, 'ablation method').value
            for method in value
        )

    def clean_init_schemes(self, value):
        return tuple(
            _enum(InitSchemeKind, scheme, 'init scheme').value
            for scheme in value
        )


class SweepForm(AblateForm):
    class Meta:
        model = SweepSection
        fields = _names(SweepSection)

    def clean_methods(self, value):
        methods = super().clean_methods(value)
        learned = [m for m in methods if AblationMethod(m).learned]
        if learned:
            raise ConfigurationError(
                f'block-size sweeps take fixed transforms only, got '
                f'{", ".join(learned)}'
            )
        return methods

    def clean_block_sizes(self, value):
        return tuple(int(size) for size in value)


class BoundsForm(SectionForm):
    class Meta:
        model = BoundsSection
        fields = _names(BoundsSection)

    def clean_lemma_blocks(self, value):
        return tuple(value)

    def clean_lemma_sigmas(self, value):
        return tuple(value)

    def clean_formats(self, value):
        for fmt in value:
            mx_config(fmt, 1)
        return tuple(value)

    def clean_outlier_channels(self, value):
        return tuple(value)


class ExperimentForm:
    """The whole config file; sections missing from it take defaults."""

    sections = {
        'model': ModelForm,
        'mx': MxForm,
        'transform': TransformForm,
        'train': TrainForm,
        'calibration': CalibrationForm,
        'quantize': QuantizeForm,
        'ablate': AblateForm,
        'sweep': SweepForm,
        'bounds': BoundsForm,
    }

    def __init__(self, data):
        self.data = data

    def _check_top_level(self):
        if not isinstance(self.data, dict):
            raise ConfigurationError('config must be a JSON object')
        unknown = sorted(
            set(self.data) - set(self.sections) - {'schema', 'seed'}
        )
        if unknown:
            raise ConfigurationError(
                f'unknown config keys: {", ".join(unknown)}'
            )
        schema = self.data.get('schema', settings.CONFIG_SCHEMA)
        if schema != settings.CONFIG_SCHEMA:
            raise ConfigurationError(
                f'config schema {schema!r} is not supported '
                f'(expected {settings.CONFIG_SCHEMA})'
            )
        seed = self.data.get('seed', 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigurationError(f'seed must be a nonnegative integer, '
                                     f'got {seed!r}')
        return seed

    def _calibration(self, model):
        data = self.data.get('calibration') or {}
        defaults = {
            'd': model.d_model,
            'vocab': model.vocab_size,
            'seq_len': min(settings.CALIBRATION_SEQ_LEN, model.max_seq_len),
        }
        if isinstance(data, dict):
            data = dict(defaults, **data)
        return CalibrationForm(data, 'calibration').save()

    def save(self):
        seed = self._check_top_level()

        def section(name):
            return self.sections[name](self.data.get(name), name).save()

        model = section('model')
        mx, quant_points = section('mx')
        calibration, calibration_path = self._calibration(model)
        transform = section('transform')
        train = section('train')
        by_parameterization = 'steps' not in (self.data.get('train') or {})
        if by_parameterization:
            train = dataclasses.replace(
                train, steps=default_steps(transform.parameterization)
            )
        config = ExperimentConfig(
            model=model,
            mx=mx,
            quant_points=quant_points,
            transform=transform,
            train=train,
            steps_by_parameterization=by_parameterization,
            calibration=calibration,
            calibration_path=calibration_path,
            quantize=section('quantize'),
            ablate=section('ablate'),
            sweep=section('sweep'),
            bounds=section('bounds'),
        )
        check_consistency(config)
        return config.with_seed(seed)


def check_consistency(config):
    """Dimensions that have to agree across sections."""
    model = config.model
    config.quant_points.check(model)
    config.transform.scheme.check(model.d_model)
    spec = config.calibration
    if spec.tokens and config.calibration_path is None:
        if spec.vocab != model.vocab_size:
            raise ConfigurationError(
                f'calibration vocab {spec.vocab} differs from the model '
                f'vocab {model.vocab_size}'
            )
        if spec.seq_len > model.max_seq_len:
            raise ConfigurationError(
                f'calibration seq_len {spec.seq_len} exceeds max_seq_len '
                f'{model.max_seq_len}'
            )
    for size in config.sweep.block_sizes:
        if size < 1 or model.d_model % size:
            raise ConfigurationError(
                f'sweep block size {size} does not divide d_model '
                f'{model.d_model}'
            )
    if config.bounds.d % config.mx.block_size:
        raise ConfigurationError(
            f'bounds dimension {config.bounds.d} is not a multiple of the '
            f'MX block size {config.mx.block_size}'
        )


def load_config(path):
    """ExperimentConfig from a JSON file; defaults when `path` is None."""
    if path is None:
        return ExperimentForm({}).save()
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as error:
        raise ConfigurationError(f'cannot read config {path}: {error}')
    except json.JSONDecodeError as error:
        raise ConfigurationError(f'config {path} is not valid JSON: {error}')
    return ExperimentForm(data).save()
