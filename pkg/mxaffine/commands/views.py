"""The commands behind every CLI subcommand.

Each `cmd_*` takes an ExperimentConfig and an output directory, writes its
artifacts there and returns a summary dictionary.
"""
import csv
import dataclasses
import json
import logging
import os
from pathlib import Path

import numpy as np

from bounds.distillation import scenario_batch
from bounds.models import GaussianSource
from bounds.subgaussian import lemma_max_check
from bounds.theorem import (dirac_hadamard_demo, random_affine,
                            theorem1_check)
from core.exceptions import (ConfigurationError, DivergenceError,
                             VerificationError)
from core.utils import make_rng, to_jsonable
from learning.losses import kl_distill_loss
from learning.parameters import LearnableTransforms
from learning.trainer import fit_transforms
from mxaffine import settings
from mxquant.formats import mx_config
from mxquant.metrics import transformation_mse
from mxquant.weights import gptq_quantize_weights, rtn_quantize_weights
from toymodel.equivalence import check_folding
from toymodel.folding import fold_all
from toymodel.forward import (capture_activations, capture_transformed,
                              forward_fp, forward_transformed)
from toymodel.models import TransformSet
from toymodel.weights import init_weights, weights_to_tensors
from transforms.analysis import orthogonality_deviation
from transforms.models import InitSchemeKind
from transforms.parameterizations import preset_transform

from .calibration import (calibration_tensors, calibration_tokens,
                          generate_calibration)
from .container import read_container, write_container
from .models import AblationMethod, WeightMethod

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = 'transforms.mxtd'
TRACE_FILE = 'trace.csv'
MODEL_FILE = 'model.mxtd'
METRICS_FILE = 'metrics.json'
ABLATION_FILE = 'ablation.csv'
INIT_ABLATION_FILE = 'init_ablation.csv'
SWEEP_FILE = 'sweep_blocksize.csv'
BOUNDS_FILE = 'bounds.json'
CALIBRATION_FILE = 'calibration.mxtd'

# Input site of every quantized linear layer.
LINEAR_INPUTS = {
    'wq': 'qkv_inputs',
    'wk': 'qkv_inputs',
    'wv': 'qkv_inputs',
    'wo': 'out_proj_inputs',
    'w_gate': 'ffn_inputs',
    'w_up': 'ffn_inputs',
    'w_down': 'down_proj_inputs',
}


def _output_dir(out_dir):
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _report(command, **sections):
    return {
        'schema_version': settings.REPORT_SCHEMA_VERSION,
        'command': command,
        'notice': settings.SYNTHETIC_DATA_NOTICE,
        **sections,
    }


def _write_json(path, document):
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(to_jsonable(document), handle, indent=2, sort_keys=True)
        handle.write('\n')


def _write_csv(path, rows, columns):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def _prepare(config):
    weights = init_weights(config.model, seed=config.seed)
    return weights, calibration_tokens(config, weights)


def _trace_block(config, scheme):
    block = scheme.block if scheme.kind.block_diagonal else (
        config.mx.block_size
    )
    return block if config.model.d_model % block == 0 else (
        config.model.d_model
    )


def _learn(weights, config, tokens, scheme, parameterization,
           freeze=frozenset()):
    cfg = config.train_for(parameterization)
    if freeze:
        cfg = dataclasses.replace(cfg, freeze=cfg.freeze | freeze)
    learnable = LearnableTransforms.initialize(
        config.model, scheme, parameterization, seed=config.seed,
        t3_enabled=config.transform.t3_enabled,
        t3_block=config.mx.block_size,
    )
    return fit_transforms(
        weights, config.model, learnable, config.quant_points, tokens, cfg,
        _trace_block(config, scheme),
    )


def mean_kl(teacher_logits, student_logits):
    """Average KL(teacher || student) over every position."""
    return float(kl_distill_loss(teacher_logits, student_logits).data)


def cmd_learn(config, out_dir):
    """Learn T1 and T2, then write the checkpoint and the trace CSV."""
    out_dir = _output_dir(out_dir)
    weights, tokens = _prepare(config)
    trace_path = out_dir / TRACE_FILE
    logger.info('learning %s transforms (%s init)',
                config.transform.parameterization.value,
                config.transform.scheme.kind.value)
    try:
        learnable, trace = _learn(
            weights, config, tokens, config.transform.scheme,
            config.transform.parameterization,
        )
    except DivergenceError as error:
        if error.trace is not None:
            error.trace.to_csv(trace_path)
        raise
    checkpoint = out_dir / CHECKPOINT_FILE
    write_container(checkpoint, learnable.to_tensors())
    trace.to_csv(trace_path)
    logger.info('wrote %s and %s', checkpoint, trace_path)
    final = trace.records[-1].loss_total if trace.records else None
    return {
        'checkpoint': str(checkpoint),
        'trace': str(trace_path),
        'steps': config.train_for(
            config.transform.parameterization
        ).steps,
        'final_loss': final,
        'restored': trace.restored,
    }


def _gate_batches(tokens, count):
    return [batch for batch in np.array_split(tokens[:count * 2], count)
            if len(batch)]


def _quantize_matrix(w, x, config):
    if config.quantize.method is WeightMethod.RTN:
        return rtn_quantize_weights(w, config.mx)
    return gptq_quantize_weights(w, x, config.mx,
                                 damping=config.quantize.damping)


def quantize_model(folded, config, tokens):
    """Weight-quantized copy of `folded` and per-layer error metrics.

    GPTQ sees the inputs every linear layer receives in the folded
    full-precision model on the calibration tokens.
    """
    captured = capture_activations(folded, config.model, tokens)
    quantized = folded.copy()
    layers = []
    for index, layer in enumerate(quantized.layers):
        for name, site in LINEAR_INPUTS.items():
            w = getattr(layer, name)
            x = getattr(captured, site)[index].reshape(-1, w.shape[1])
            q = _quantize_matrix(w, x, config)
            setattr(layer, name, q)
            layers.append({
                'layer': index,
                'name': name,
                'weight_mse': float(np.mean((w - q) ** 2)),
                'output_mse': float(np.mean((x @ (w - q).T) ** 2)),
            })
    return quantized, layers, captured


def activation_errors(captured, mx):
    """MX round-trip MSE of the captured inputs, per site."""
    return {
        site: transformation_mse(
            None, mx, np.concatenate([
                inputs.reshape(-1, inputs.shape[-1])
                for inputs in getattr(captured, site)
            ]),
        ).mse
        for site in sorted(set(LINEAR_INPUTS.values()))
    }


def cmd_quantize(config, out_dir, checkpoint=None):
    """Fold the learned transforms, quantize the weights, report errors."""
    if checkpoint is None or not os.path.isfile(checkpoint):
        raise ConfigurationError(
            f'transform checkpoint {checkpoint} not found'
        )
    out_dir = _output_dir(out_dir)
    weights, tokens = _prepare(config)
    transforms = LearnableTransforms.from_tensors(
        read_container(checkpoint)
    ).transform_set()
    transforms.check(config.model)
    folded = fold_all(weights, transforms)
    deviation = check_folding(
        weights, folded, config.model, transforms,
        _gate_batches(tokens, config.quantize.gate_batches),
        tol=config.quantize.gate_tol,
    )
    logger.info('fold equivalence gate passed (deviation %.3e)', deviation)
    quantized, layers, captured = quantize_model(folded, config, tokens)
    teacher = forward_fp(weights, config.model, tokens)
    student = forward_fp(quantized, config.model, tokens,
                         qpoints=config.quant_points)
    document = _report(
        'quantize',
        checkpoint=str(checkpoint),
        method=config.quantize.method,
        format=str(config.mx.format),
        block_size=config.mx.block_size,
        fold_deviation=deviation,
        layers=layers,
        weight_mse=float(np.mean([row['weight_mse'] for row in layers])),
        output_mse=float(np.mean([row['output_mse'] for row in layers])),
        activation_mse=activation_errors(captured, config.mx),
        kl_to_teacher=mean_kl(teacher, student),
    )
    write_container(out_dir / MODEL_FILE, weights_to_tensors(quantized))
    _write_json(out_dir / METRICS_FILE, document)
    logger.info('quantized model: weight mse %.4g, kl %.4g',
                document['weight_mse'], document['kl_to_teacher'])
    return document


def _preset_set(kind, config, block):
    d = config.model.d_model
    return TransformSet(
        t1=preset_transform(kind, d, block=block, seed=config.seed),
        t2=[preset_transform(kind, d, block=block, seed=config.seed + 1 + i)
            for i in range(config.model.n_layers)],
        t3_enabled=config.transform.t3_enabled,
        t3_block=config.mx.block_size,
    )


def ablation_transforms(method, weights, config, tokens):
    """TransformSet of one row of the transformation ablation."""
    block = config.mx.block_size
    if method is AblationMethod.NONE:
        return TransformSet.identity(
            config.model, t3_enabled=config.transform.t3_enabled,
            t3_block=block,
        )
    if method is AblationMethod.HADAMARD_FULL:
        return _preset_set('FullHadamard', config, block)
    if method is AblationMethod.HADAMARD_BLOCK:
        return _preset_set('BlockHadamard', config, block)
    learnable, _ = _learn(weights, config, tokens, config.transform.scheme,
                          method.parameterization, method.frozen)
    return learnable.transform_set()


class Evaluation:
    """Teacher logits shared by every ablation row."""

    def __init__(self, weights, config, tokens):
        self.weights = weights
        self.config = config
        self.tokens = tokens
        self.teacher = forward_fp(weights, config.model, tokens)

    def qkv_inputs(self, transforms):
        """QKV quantizer inputs of the transformed model, mapped back to
        original coordinates."""
        captured = capture_transformed(
            self.weights, self.config.model, transforms, self.tokens,
            self.config.quant_points,
        ).qkv_inputs
        inputs = np.concatenate([
            z.reshape(-1, self.config.model.d_model) for z in captured
        ])
        return transforms.t1.apply_inverse(inputs)

    def row(self, transforms):
        error = transformation_mse(transforms.t1, self.config.mx,
                                   self.qkv_inputs(transforms))
        student = forward_transformed(
            self.weights, self.config.model, transforms,
            self.config.quant_points, self.tokens,
        )
        return {
            'activation_mse': error.mse,
            'kl_to_teacher': mean_kl(self.teacher, student),
            'per_block_mse': ' '.join(
                f'{value:.6g}' for value in error.per_block_mse
            ),
        }


def _methods(names):
    methods = []
    for name in names:
        try:
            methods.append(AblationMethod(name))
        except ValueError:
            raise ConfigurationError(f'unknown ablation method {name!r}')
    return methods


def cmd_ablate(config, out_dir, methods=None, init_schemes=None):
    """One CSV row per transformation type."""
    out_dir = _output_dir(out_dir)
    methods = _methods(methods or config.ablate.methods)
    weights, tokens = _prepare(config)
    evaluation = Evaluation(weights, config, tokens)
    rows = []
    for method in methods:
        logger.info('ablation row %s', method.value)
        transforms = ablation_transforms(method, weights, config, tokens)
        rows.append({'method': method.value, **evaluation.row(transforms)})
    path = out_dir / ABLATION_FILE
    _write_csv(path, rows, ('method', 'activation_mse', 'kl_to_teacher',
                            'per_block_mse'))
    result = {'table': str(path), 'rows': rows}
    schemes = init_schemes or config.ablate.init_schemes
    if schemes:
        result['init'] = cmd_ablate_init(config, out_dir, schemes,
                                         evaluation=evaluation)
    return result


def cmd_ablate_init(config, out_dir, schemes, evaluation=None):
    """Final loss, KL and activation MSE per initialization scheme."""
    out_dir = _output_dir(out_dir)
    if evaluation is None:
        weights, tokens = _prepare(config)
        evaluation = Evaluation(weights, config, tokens)
    rows = []
    for name in schemes:
        try:
            kind = InitSchemeKind(name)
        except ValueError:
            raise ConfigurationError(f'unknown init scheme {name!r}')
        scheme = dataclasses.replace(config.transform.scheme, kind=kind)
        scheme.check(config.model.d_model)
        logger.info('initialization ablation: %s', kind.value)
        learnable, trace = _learn(
            evaluation.weights, config, evaluation.tokens, scheme,
            config.transform.parameterization,
        )
        transforms = learnable.transform_set()
        rows.append({
            'scheme': kind.value,
            'final_loss': (trace.records[-1].loss_total
                           if trace.records else float('nan')),
            'orth_dev': orthogonality_deviation(transforms.t1.a),
            **evaluation.row(transforms),
        })
    path = out_dir / INIT_ABLATION_FILE
    _write_csv(path, rows, ('scheme', 'final_loss', 'orth_dev',
                            'activation_mse', 'kl_to_teacher',
                            'per_block_mse'))
    return {'table': str(path), 'rows': rows}


def _sweep_transform(method, d, block, seed):
    if method is AblationMethod.NONE:
        return None
    if method is AblationMethod.HADAMARD_FULL:
        return preset_transform('FullHadamard', d, seed=seed)
    return preset_transform('BlockHadamard', d, block=block, seed=seed)


def cmd_sweep_blocksize(config, out_dir, block_sizes=None):
    """Activation MSE per (method, block size) with a monotonicity flag."""
    out_dir = _output_dir(out_dir)
    sizes = sorted(block_sizes or config.sweep.block_sizes)
    d = config.model.d_model
    for size in sizes:
        if size < 1 or d % size:
            raise ConfigurationError(
                f'block size {size} does not divide d_model {d}'
            )
    weights, tokens = _prepare(config)
    qkv = capture_activations(weights, config.model, tokens).qkv_inputs
    samples = np.concatenate([inputs.reshape(-1, d) for inputs in qkv])
    rows = []
    for method in _methods(config.sweep.methods):
        errors = [
            transformation_mse(
                _sweep_transform(method, d, size, config.seed),
                mx_config(config.mx.format.kind, size), samples,
            ).mse
            for size in sizes
        ]
        monotone = bool(np.all(np.diff(errors) >= 0))
        if not monotone:
            logger.warning('%s: MSE is not monotone in the block size',
                           method.value)
        rows.extend(
            {'method': method.value, 'block_size': size, 'mse': error,
             'monotone': monotone}
            for size, error in zip(sizes, errors)
        )
    path = out_dir / SWEEP_FILE
    _write_csv(path, rows, ('method', 'block_size', 'mse', 'monotone'))
    return {'table': str(path), 'rows': rows}


def _theorem_section(config):
    bounds, seed = config.bounds, config.seed
    sources = {
        'gaussian': GaussianSource(d=bounds.d),
        'outlier_channels': GaussianSource(
            d=bounds.d, outlier_channels=bounds.outlier_channels,
            outlier_scale=bounds.outlier_scale,
        ),
    }
    transforms = {
        'identity': None,
        'hadamard': preset_transform('FullHadamard', bounds.d, seed=seed),
        'random_affine': random_affine(bounds.d, seed),
    }
    entries = []
    for fmt in bounds.formats:
        mx = mx_config(fmt, config.mx.block_size)
        for t_name, transform in transforms.items():
            for s_name, source in sources.items():
                report = theorem1_check(transform, mx, source,
                                        n_samples=bounds.samples, seed=seed)
                entries.append({'format': fmt, 'transform': t_name,
                                'source': s_name,
                                **dataclasses.asdict(report)})
    return entries


def _lemma_section(config):
    bounds = config.bounds
    rng = make_rng(config.seed)
    entries = []
    for block in bounds.lemma_blocks:
        for sigma in bounds.lemma_sigmas:
            for mu in (None, rng.standard_normal(block)):
                report = lemma_max_check(
                    sigma, block, trials=bounds.lemma_trials,
                    seed=config.seed, mu=mu,
                )
                entries.append({'shifted': mu is not None,
                                **dataclasses.asdict(report)})
    return entries


def _proposition_section(config):
    reports = scenario_batch(count=config.bounds.scenarios, seed=config.seed)
    return {
        'count': len(reports),
        'failures': sum(not report.holds for report in reports),
        'min_slack': min((report.slack for report in reports), default=0.0),
    }


def _failures(theorem, lemma, proposition):
    failures = [
        f'theorem {e["format"]}/{e["transform"]}/{e["source"]}'
        for e in theorem if not e['holds']
    ]
    failures += [
        f'lemma B={e["block"]} sigma={e["sigma"]} shifted={e["shifted"]}'
        for e in lemma if not e['holds']
    ]
    if proposition['failures']:
        failures.append(
            f'proposition: {proposition["failures"]} scenarios'
        )
    return failures


def cmd_verify_bounds(config, out_dir):
    """Run every bound checker; any failure raises VerificationError after
    the report has been written."""
    out_dir = _output_dir(out_dir)
    theorem = _theorem_section(config)
    lemma = _lemma_section(config)
    proposition = _proposition_section(config)
    demo = dirac_hadamard_demo()
    failures = _failures(theorem, lemma, proposition)
    document = _report(
        'verify-bounds',
        theorem=theorem,
        lemma=lemma,
        proposition=proposition,
        demo=dataclasses.asdict(demo),
        failures=failures,
        holds=not failures,
    )
    path = out_dir / BOUNDS_FILE
    _write_json(path, document)
    if failures:
        raise VerificationError(
            f'{len(failures)} bound checks failed: {"; ".join(failures)}',
            failures=failures,
        )
    logger.info('all bound checks hold; report in %s', path)
    return document


def cmd_gen_data(config, out_dir):
    """Write the configured synthetic calibration set to a container."""
    out_dir = _output_dir(out_dir)
    spec = config.calibration
    weights = None
    if spec.tokens and spec.sampled:
        weights = init_weights(config.model, seed=config.seed)
    samples = generate_calibration(spec, weights, config.model)
    path = out_dir / CALIBRATION_FILE
    write_container(path, calibration_tensors(spec, samples))
    logger.info('wrote %s calibration samples to %s', len(samples), path)
    return {'data': str(path), 'shape': list(samples.shape)}

