"""Element grids of the MX formats and the constants derived from them."""
import functools

import numpy as np

from core.exceptions import ConfigurationError

from .models import ElementFormat, FormatKind, MxConfig

R_MAX = {
    FormatKind.FP4_E2M1: 2,
    FormatKind.INT4: 2,
    FormatKind.FP8_E4M3: 8,
}


def _fp4_magnitudes():
    return np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0])


def _int4_magnitudes():
    # symmetric -7..7, the asymmetric -8 is never produced
    return np.arange(8, dtype=np.float64)


def _fp8_e4m3_magnitudes():
    subnormals = [m / 8.0 * 2.0 ** -6 for m in range(8)]
    normals = [
        (1.0 + m / 8.0) * 2.0 ** (e - 7)
        for e in range(1, 16)
        for m in range(8)
        if not (e == 15 and m == 7)
    ]
    return np.array(subnormals + normals)


MAGNITUDES = {
    FormatKind.FP4_E2M1: _fp4_magnitudes,
    FormatKind.INT4: _int4_magnitudes,
    FormatKind.FP8_E4M3: _fp8_e4m3_magnitudes,
}


@functools.lru_cache(maxsize=None)
def element_format(kind):
    if isinstance(kind, str):
        try:
            kind = FormatKind[kind.upper()]
        except KeyError:
            raise ConfigurationError(f'unknown element format {kind!r}')
    magnitudes = MAGNITUDES[kind]()
    grid = np.concatenate([-magnitudes[:0:-1], magnitudes])
    grid.setflags(write=False)
    return ElementFormat(kind=kind, grid=grid, r_max=R_MAX[kind])


def mx_config(kind, block_size):
    return MxConfig(format=element_format(kind), block_size=block_size)


def grid_values(fmt):
    return fmt.grid.copy()


def worst_element_error(fmt):
    """sup |z - Q_e(z)| over z in [0, 2**(r_max + 1)).

    Candidates are the midpoints between neighbouring grid values and the
    saturation edge.
    """
    magnitudes = fmt.magnitudes
    half_gaps = np.diff(magnitudes) / 2.0
    saturation = 2.0 ** (fmt.r_max + 1) - fmt.grid_max
    return float(max(half_gaps.max(initial=0.0), saturation))


def bound_constant(fmt):
    """Deterministic constant of the per-sample error chain."""
    return worst_element_error(fmt) ** 2 * 2.0 ** (-2 * fmt.r_max)


def c_q_grid(grid, support=None):
    """Sum over decision intervals of the integral of (z - q_k)**2.

    Intervals are bounded by midpoints between neighbouring grid values and
    by +-support at the ends.
    """
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if support is None:
        support = float(np.max(np.abs(grid)))
    midpoints = (grid[1:] + grid[:-1]) / 2.0
    lower = np.concatenate([[-support], midpoints])
    upper = np.concatenate([midpoints, [support]])
    lower = np.clip(lower, -support, support)
    upper = np.clip(upper, -support, support)
    return float(np.sum(((upper - grid) ** 3 - (lower - grid) ** 3) / 3.0))


def c_q(fmt):
    return c_q_grid(fmt.grid, fmt.grid_max)
