import dataclasses
import enum

import numpy as np

from .exceptions import NonFiniteError


def make_rng(seed):
    """Seeded generator; every random draw in the project goes through it."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_finite(array, path):
    if not np.all(np.isfinite(array)):
        raise NonFiniteError('non-finite values', path=path)
    return array


def to_jsonable(value):
    """Turn dataclasses, enums and numpy values into JSON-ready objects."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            field.name: to_jsonable(getattr(value, field.name))
            for field in dataclasses.fields(value)
            if not field.name.startswith('_')
        }
    if isinstance(value, enum.Enum):
        return value.name
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
