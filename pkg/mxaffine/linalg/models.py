from dataclasses import dataclass

import numpy as np

from core.exceptions import DimensionError


@dataclass(frozen=True)
class Permutation:
    """Bijection on {0, ..., d-1}; `mapping[i]` is the image of i."""

    mapping: tuple

    def __post_init__(self):
        mapping = tuple(int(i) for i in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise DimensionError(f'not a permutation: {mapping}')
        object.__setattr__(self, 'mapping', mapping)

    def __len__(self):
        return len(self.mapping)

    @classmethod
    def identity(cls, d):
        return cls(tuple(range(d)))

    @classmethod
    def from_matrix(cls, p):
        """Read the permutation off a 0/1 matrix with P[mapping[i], i] = 1."""
        p = np.asarray(p)
        return cls(tuple(int(np.argmax(p[:, i])) for i in range(p.shape[1])))

    def as_matrix(self):
        d = len(self.mapping)
        p = np.zeros((d, d))
        p[list(self.mapping), list(range(d))] = 1.0
        return p

    def inverse(self):
        inverse = [0] * len(self.mapping)
        for i, j in enumerate(self.mapping):
            inverse[j] = i
        return Permutation(tuple(inverse))
