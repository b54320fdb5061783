"""Named tensors for transform checkpoints."""
import numpy as np

from core.exceptions import ContainerFormatError
from linalg.models import Permutation

from .models import AffineTransform, LuParams, QrParams

LU_FIELDS = ('l_strict', 'u_strict', 'log_s', 'sign_s', 'v')
QR_FIELDS = ('g', 'r_strict', 'log_s', 'sign_s', 'v')


def transform_to_tensors(params, prefix):
    """Flatten LuParams, QrParams or AffineTransform under `prefix.`."""
    if isinstance(params, LuParams):
        tensors = {name: getattr(params, name) for name in LU_FIELDS}
        tensors['permutation'] = np.array(params.permutation.mapping)
        tensors['kind'] = np.array([0])
    elif isinstance(params, QrParams):
        tensors = {name: getattr(params, name) for name in QR_FIELDS}
        tensors['kind'] = np.array([1])
    else:
        tensors = {'a': params.a, 'v': params.v, 'kind': np.array([2])}
    return {
        f'{prefix}.{name}': np.asarray(value, dtype=np.float64)
        for name, value in tensors.items()
    }


def _fetch(tensors, prefix, name):
    try:
        return np.asarray(tensors[f'{prefix}.{name}'], dtype=np.float64)
    except KeyError:
        raise ContainerFormatError(f'missing tensor {prefix}.{name}')


def transform_from_tensors(tensors, prefix):
    kind = int(_fetch(tensors, prefix, 'kind')[0])
    if kind == 0:
        fields = {name: _fetch(tensors, prefix, name) for name in LU_FIELDS}
        mapping = _fetch(tensors, prefix, 'permutation').astype(int)
        return LuParams(permutation=Permutation(tuple(mapping)), **fields)
    if kind == 1:
        fields = {name: _fetch(tensors, prefix, name) for name in QR_FIELDS}
        return QrParams(**fields)
    if kind == 2:
        return AffineTransform(
            _fetch(tensors, prefix, 'a'), _fetch(tensors, prefix, 'v')
        )
    raise ContainerFormatError(f'unknown transform kind {kind} at {prefix}')
