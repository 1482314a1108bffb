"""
Sparse-to-dense depth propagation at quarter resolution.

The sparse map is first filled by nearest-neighbour copying, then either
left as is, smoothed by a joint bilateral filter guided by the reference
image, or re-weighted by the per-pixel k x k weights predicted by the
propagation network. Windows are gathered with clamp-to-edge borders.
"""

import logging
from dataclasses import dataclass

import numpy as np

from autodiff import ops
from autodiff.tensor import as_tensor
from depthlab.exceptions import ConfigError, ContractError, DimensionError
from networks.specs import validate_window

logger = logging.getLogger(__name__)

# Allowed deviation of a per-pixel weight sum from one
WEIGHT_SUM_TOLERANCE = 1e-6

# Pixels per block when searching nearest sparse cells
_NEAREST_BLOCK = 4096


class PropagationMode:
    NEAREST = 'nearest'
    BILATERAL = 'bilateral'
    LEARNED = 'learned'

    choices = (NEAREST, BILATERAL, LEARNED)


@dataclass(frozen=True)
class PropagationConfig:
    k: int = 3
    mode: str = PropagationMode.LEARNED
    sigma_spatial: float = 1.0
    sigma_range: float = 0.1

    def __post_init__(self):
        validate_window(self.k)
        if self.mode not in PropagationMode.choices:
            raise ConfigError(f'Unknown propagation mode "{self.mode}"; choose from {PropagationMode.choices}.')
        if self.mode == PropagationMode.BILATERAL and (self.sigma_spatial <= 0 or self.sigma_range <= 0):
            raise ConfigError('Bilateral propagation needs positive sigma_spatial and sigma_range.')


def nearest_cell_index(mask):
    """
    Flat index of the nearest masked pixel for every pixel of `mask`.

    Ties go to the smallest row, then the smallest column.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError('cannot densify a depth map without any valid cell')
    height, width = mask.shape
    cells = np.flatnonzero(mask)
    cell_rows, cell_cols = np.divmod(cells, width)
    rows, cols = np.divmod(np.arange(height * width), width)

    nearest = np.empty(height * width, dtype=np.intp)
    for start in range(0, height * width, _NEAREST_BLOCK):
        block = slice(start, start + _NEAREST_BLOCK)
        dist = ((rows[block, None] - cell_rows[None]) ** 2
                + (cols[block, None] - cell_cols[None]) ** 2)
        # cells are in row-major order, so argmin's first hit applies the tie rule
        nearest[block] = cells[dist.argmin(axis=1)]
    return nearest.reshape(height, width)


def densify_nearest(sparse):
    """Fill every pixel with the value of its nearest sparse cell."""
    index = nearest_cell_index(sparse.mask)
    return ops.gather(sparse.values, index)


def window_index(height, width, k):
    """k*k x H x W flat indices of each pixel's clamp-to-edge window, row-major offsets."""
    r = k // 2
    rows, cols = np.mgrid[0:height, 0:width]
    offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
    return np.stack([
        np.clip(rows + dy, 0, height - 1) * width + np.clip(cols + dx, 0, width - 1)
        for dy, dx in offsets
    ])


def window_offsets(k):
    """(dy, dx) of each window channel, matching window_index."""
    r = k // 2
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    return dy.reshape(-1), dx.reshape(-1)


def propagate_learned(dense, weights):
    """
    Weighted sum of each pixel's k x k neighbourhood, D'(p) = sum_q D(q) w(p, q).

    `weights` is k*k x H x W and must already be normalised per pixel.
    """
    dense, weights = as_tensor(dense), as_tensor(weights)
    taps, height, width = weights.shape
    k = int(round(np.sqrt(taps)))
    if k * k != taps:
        raise DimensionError(f'weights have {taps} channels, not a square window')
    validate_window(k)
    if dense.shape != (height, width):
        raise DimensionError(f'depth {dense.shape} and weights {weights.shape} disagree')
    deviation = np.abs(weights.data.sum(axis=0) - 1.0).max()
    if deviation > WEIGHT_SUM_TOLERANCE:
        raise ContractError(f'propagation weights are not normalised (sum off by {deviation:.3g})')
    windows = ops.gather(dense, window_index(height, width, k))
    return ops.sum(ops.mul(windows, weights), axis=0)


def _guide_array(guide, shape):
    guide = np.asarray(guide, dtype=np.float64)
    if guide.ndim == 2:
        guide = guide[..., None]
    if guide.shape[:2] != tuple(shape):
        raise DimensionError(f'guide {guide.shape[:2]} does not match depth {tuple(shape)}')
    return guide


def bilateral_weights(guide, k, sigma_spatial, sigma_range):
    """Unnormalised k*k x H x W joint bilateral weights f(|p-q|) g(|I_p-I_q|)."""
    height, width = guide.shape[:2]
    index = window_index(height, width, k)
    flat = guide.reshape(height * width, -1)
    neighbours = flat[index]
    colour = np.sqrt(((neighbours - guide[None]) ** 2).sum(axis=-1))
    dy, dx = window_offsets(k)
    spatial = np.exp(-(dy * dy + dx * dx) / (2.0 * sigma_spatial ** 2))
    return spatial[:, None, None] * np.exp(-colour ** 2 / (2.0 * sigma_range ** 2))


def joint_bilateral(dense, guide, cfg):
    """
    Joint bilateral filter of a depth map over the k x k window.

    D'(p) = (1 / z_p) sum_q D(q) f(|p - q|) g(|I_p - I_q|) with Gaussian f
    and g; z_p is the weight sum. `guide` is H x W or H x W x C at the
    depth map's resolution.
    """
    dense = as_tensor(dense)
    if cfg.sigma_spatial <= 0 or cfg.sigma_range <= 0:
        raise ConfigError('joint_bilateral needs positive sigma_spatial and sigma_range.')
    guide = _guide_array(guide, dense.shape)
    weights = bilateral_weights(guide, cfg.k, cfg.sigma_spatial, cfg.sigma_range)
    weights = weights / weights.sum(axis=0)
    windows = ops.gather(dense, window_index(*dense.shape, cfg.k))
    return ops.sum(ops.mul(windows, weights), axis=0)


def quarter_guide(image):
    """The reference image sampled at quarter resolution (pixel j <- 4j)."""
    return np.asarray(image, dtype=np.float64)[::4, ::4]


def propagate(sparse, cfg, image=None, weights=None):
    """
    Densify `sparse` according to cfg.mode.

    Bilateral mode needs the full-resolution reference `image`; learned
    mode needs the predicted `weights`.
    """
    dense = densify_nearest(sparse)
    if cfg.mode == PropagationMode.NEAREST:
        return dense
    if cfg.mode == PropagationMode.BILATERAL:
        if image is None:
            raise ConfigError('Bilateral propagation needs the reference image.')
        return joint_bilateral(dense, quarter_guide(image), cfg)
    if weights is None:
        raise ConfigError('Learned propagation needs predicted weights.')
    if weights.shape[0] != cfg.k * cfg.k:
        raise ConfigError(f'Weights have {weights.shape[0]} channels, window k={cfg.k} needs {cfg.k ** 2}.')
    return propagate_learned(dense, weights)
