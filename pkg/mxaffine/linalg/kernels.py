"""Dense double-precision matrix kernels."""
import math

import numpy as np
from scipy import linalg as sla

from core.exceptions import DimensionError, SingularMatrixError

POWER_MAX_ITER = 1000
POWER_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
EXPM_TERM_TOL = 1e-16
EXPM_SCALED_NORM = 0.5
INVERT_TOL = 1e-8


def as_matrix(a, name='matrix'):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f'{name} must be 2-D, got shape {a.shape}')
    return a


def _require_square(a, name='matrix'):
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f'{name} must be square, got shape {a.shape}')
    return a


def matmul(a, b):
    a = as_matrix(a, 'left operand')
    b = as_matrix(b, 'right operand')
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f'cannot multiply {a.shape} by {b.shape}'
        )
    return a @ b


def invert(a, tol=INVERT_TOL):
    """Inverse via pivoted LU.

    Every returned inverse satisfies ||a @ inverse - I||_inf <= `tol`;
    matrices too ill-conditioned for that are refused as singular.
    """
    a = _require_square(a)
    d = a.shape[0]
    if not np.all(np.isfinite(a)):
        raise SingularMatrixError('cannot invert a non-finite matrix')
    lu, piv = sla.lu_factor(a, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise SingularMatrixError('matrix is exactly singular')
    inverse = sla.lu_solve((lu, piv), np.eye(d), check_finite=False)
    residual = (np.linalg.norm(a @ inverse - np.eye(d), np.inf)
                if d else 0.0)
    if not np.isfinite(residual) or residual > tol:
        raise SingularMatrixError(
            f'matrix is singular to tolerance (residual {residual:.3e})'
        )
    return inverse


def spectral_norm(a, seed=0):
    """Largest singular value by power iteration on a^T a."""
    a = as_matrix(a)
    if a.size == 0 or not np.any(a):
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    value = 0.0
    for _ in range(POWER_MAX_ITER):
        ax = a @ x
        new_value = float(ax @ ax)
        y = a.T @ ax
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(new_value - value) <= POWER_TOL * max(new_value, 1e-300):
            value = new_value
            break
        value = new_value
    # one more Rayleigh quotient at the converged direction
    ax = a @ x
    return math.sqrt(max(value, float(ax @ ax)))


def _round_robin(n):
    """Rounds of disjoint index pairs covering every pair once."""
    players = list(range(n if n % 2 == 0 else n + 1))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [
            (players[i], players[m - 1 - i]) for i in range(m // 2)
        ]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if q < n and p < n]
        if pairs:
            rounds.append((
                np.array([p for p, _ in pairs]),
                np.array([q for _, q in pairs]),
            ))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def symmetric_eigenvalues(s):
    """Eigenvalues of a symmetric matrix by cyclic (parallel-order) Jacobi."""
    s = _require_square(s).copy()
    n = s.shape[0]
    if n <= 1:
        return np.diag(s).copy()
    rounds = _round_robin(n)
    scale = np.linalg.norm(s)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(s - np.diag(np.diag(s)))
        if off <= 1e-15 * scale or off == 0.0:
            break
        for p, q in rounds:
            apq = s[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            safe = np.where(active, apq, 1.0)
            theta = (s[q, q] - s[p, p]) / (2.0 * safe)
            sign = np.where(theta >= 0.0, 1.0, -1.0)
            t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c
            col_p = s[:, p].copy()
            col_q = s[:, q].copy()
            s[:, p] = c * col_p - sn * col_q
            s[:, q] = sn * col_p + c * col_q
            row_p = s[p, :].copy()
            row_q = s[q, :].copy()
            s[p, :] = c[:, None] * row_p - sn[:, None] * row_q
            s[q, :] = sn[:, None] * row_p + c[:, None] * row_q
    return np.diag(s).copy()


def singular_values(a):
    """Descending singular values from the Jacobi eigenvalues of a^T a."""
    a = as_matrix(a)
    gram = a.T @ a
    values = symmetric_eigenvalues(gram)
    return np.sort(np.sqrt(np.clip(values, 0.0, None)))[::-1]


def _bound_norm(x):
    # max(||x||_1, ||x||_inf) bounds the spectral norm from above
    return max(np.abs(x).sum(axis=0).max(), np.abs(x).sum(axis=1).max())


def matrix_exponential(x):
    """exp(x) by scaling and squaring with a truncated Taylor series."""
    x = _require_square(x)
    d = x.shape[0]
    if d == 0:
        return x.copy()
    norm = _bound_norm(x)
    squarings = 0
    if norm > EXPM_SCALED_NORM:
        squarings = int(math.ceil(math.log2(norm / EXPM_SCALED_NORM)))
    y = x / (2.0 ** squarings)
    result = np.eye(d)
    term = np.eye(d)
    for k in range(1, 60):
        term = term @ y / k
        result = result + term
        if np.max(np.abs(term)) <= EXPM_TERM_TOL * np.max(np.abs(result)):
            break
    for _ in range(squarings):
        result = result @ result
    return result


def matrix_exponential_frechet(x, direction):
    """Directional derivative of exp at x along `direction`.

    Read off the upper-right block of exp([[x, direction], [0, x]]).
    """
    x = _require_square(x)
    direction = _require_square(direction, 'direction')
    if x.shape != direction.shape:
        raise DimensionError('direction must match the matrix shape')
    d = x.shape[0]
    augmented = np.zeros((2 * d, 2 * d))
    augmented[:d, :d] = x
    augmented[:d, d:] = direction
    augmented[d:, d:] = x
    return matrix_exponential(augmented)[:d, d:]


def block_diagonal(blocks):
    blocks = [_require_square(block, 'block') for block in blocks]
    if not blocks:
        return np.zeros((0, 0))
    return sla.block_diag(*blocks)
