import csv
import json

import numpy as np

from toymodel.models import TransformSet
from transforms.models import AffineTransform


def brute_force_codes(z, fmt, chunk=8192):
    """Nearest full-grid code by enumerating every grid value.

    Ties go to the code whose magnitude index is even.
    """
    z = np.asarray(z, dtype=np.float64)
    codes = np.arange(fmt.grid.size)
    even = (np.abs(codes - fmt.zero_code) % 2 == 0)[np.newaxis, :]
    picked = []
    for start in range(0, z.size, chunk):
        part = z[start:start + chunk]
        distance = np.abs(part[:, np.newaxis] - fmt.grid[np.newaxis, :])
        best = distance.min(axis=1, keepdims=True)
        candidates = distance == best
        preferred = candidates & even
        pick = np.where(preferred.any(axis=1, keepdims=True),
                        preferred, candidates)
        picked.append(np.argmax(pick, axis=1))
    return np.concatenate(picked) if picked else np.zeros(0, dtype=int)


def random_affine(d, rng, spread=0.3, shift=0.5):
    a = np.eye(d) + spread * rng.standard_normal((d, d)) / np.sqrt(d)
    return AffineTransform(a, shift * rng.standard_normal(d))


def random_transform_set(config, rng, t3_block=32):
    return TransformSet(
        t1=random_affine(config.d_model, rng),
        t2=[random_affine(config.d_model, rng)
            for _ in range(config.n_layers)],
        t3_enabled=True,
        t3_block=t3_block,
    )


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as handle:
        return list(csv.DictReader(handle))


def read_json(path):
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)
