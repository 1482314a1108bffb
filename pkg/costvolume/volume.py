"""
Sparse plane-sweep cost volume over quarter-resolution features.

The volume is evaluated on every other pixel of the quarter-resolution
feature grid (the 1/8 grid), starting at `grid_offset` = (0, 0). For each
cell and depth hypothesis every source feature map is sampled at the
reprojected location and the cost is the per-channel variance across the
reference and the usable source samples.
"""

import logging
from dataclasses import dataclass

import numpy as np

from autodiff import functional as F
from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from depthlab.exceptions import ConfigError, DimensionError
from geometry.projection import reproject

logger = logging.getLogger(__name__)

# Cost of a cell that no source view observes
UNUSABLE_COST = 10.0

# Reprojections this far outside the map still count as in frame
IN_FRAME_TOLERANCE = 1e-6

GRID_OFFSET = (0, 0)


def sample_hypotheses(depth_range, n):
    """N uniformly spaced depths (mm) from d_min to d_max, endpoints included."""
    if n < 2:
        raise ConfigError(f'At least two depth hypotheses are needed, got {n}.')
    d_min, d_max = depth_range
    return np.linspace(d_min, d_max, int(n))


def hypotheses_from_cam(d_min, interval, n):
    """Hypotheses described MVSNet-style by the first depth and the plane spacing."""
    return sample_hypotheses((d_min, d_min + interval * (n - 1)), n)


def sparse_grid(height, width, offset=GRID_OFFSET):
    """(x, y) coordinates of the stride-2 grid on an H x W map, row-major."""
    ys = np.arange(offset[0], height, 2)
    xs = np.arange(offset[1], width, 2)
    gy, gx = np.meshgrid(ys, xs, indexing='ij')
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1).astype(np.float64), (len(ys), len(xs))


@dataclass
class CostVolume:
    """
    F x N x h x w variance volume on the sparse grid.

    `unusable` (N x h x w) flags cells that no source view observes;
    their cost is UNUSABLE_COST.
    """

    data: Tensor
    hypotheses: np.ndarray
    unusable: np.ndarray
    grid_offset: tuple = GRID_OFFSET

    @property
    def grid_shape(self):
        return self.data.shape[2:]


@dataclass
class SparseDepthMap:
    """Quarter-resolution depth that is defined on the sparse grid only."""

    values: Tensor
    mask: np.ndarray
    confidence: np.ndarray
    grid_offset: tuple = GRID_OFFSET

    @property
    def shape(self):
        return self.mask.shape


def _warp_source(src_feats, pixels, depths, ref_view, src_view):
    """Sample one source map at the reprojection of every (hypothesis, cell)."""
    n, cells = depths.shape
    grid = np.broadcast_to(pixels, (n, cells, 2))
    warped = reproject(grid, depths, ref_view, src_view)
    height, width = src_feats.shape[1:]
    x, y = warped.pixels[..., 0], warped.pixels[..., 1]
    with np.errstate(invalid='ignore'):
        in_frame = ((x >= -IN_FRAME_TOLERANCE) & (x <= width - 1 + IN_FRAME_TOLERANCE)
                    & (y >= -IN_FRAME_TOLERANCE) & (y <= height - 1 + IN_FRAME_TOLERANCE))
    usable = warped.valid & in_frame
    coords = np.where(usable[..., None], warped.pixels, 0.0).reshape(-1, 2)
    sampled = F.bilinear_sample(src_feats, coords)
    return ops.reshape(sampled, (src_feats.shape[0], n, cells)), usable


def build_sparse_cost_volume(ref_feats, src_feats, ref_view, src_views, hypotheses):
    """
    Variance cost volume of the reference features against the sources.

    `ref_view` and `src_views` must carry intrinsics at feature resolution
    (CameraView.at_scale(0.25) for quarter-resolution features). Source
    samples that land behind the source camera or outside its map are left
    out of the variance; cells with no usable source get UNUSABLE_COST.
    """
    ref_feats = as_tensor(ref_feats)
    src_feats = [as_tensor(f) for f in src_feats]
    if not src_feats:
        raise ConfigError('The cost volume needs at least one source view.')
    if len(src_feats) != len(src_views):
        raise ConfigError(f'{len(src_feats)} source feature maps for {len(src_views)} source views.')
    for feats in src_feats:
        if feats.ndim != 3 or feats.shape[0] != ref_feats.shape[0]:
            raise DimensionError(f'source features {feats.shape} do not match reference {ref_feats.shape}')
    hypotheses = np.asarray(hypotheses, dtype=np.float64)
    if hypotheses.ndim != 1 or np.any(np.diff(hypotheses) <= 0):
        raise ConfigError('Depth hypotheses must be strictly increasing.')

    channels, height, width = ref_feats.shape
    pixels, grid_shape = sparse_grid(height, width)
    n, cells = len(hypotheses), len(pixels)
    depths = np.broadcast_to(hypotheses[:, None], (n, cells))
    shape = (channels, n, cells)

    ref = ops.reshape(ops.index(ref_feats, (slice(None), slice(0, None, 2), slice(0, None, 2))),
                      (channels, 1, cells))
    ref = ops.broadcast_to(ref, shape)

    samples, masks = [], []
    for feats, src_view in zip(src_feats, src_views):
        sampled, usable = _warp_source(feats, pixels, depths, ref_view, src_view)
        samples.append(sampled)
        masks.append(np.broadcast_to(usable, shape).astype(np.float64))

    count = 1.0 + sum(m[0] for m in masks)
    total = ref
    for sampled, mask in zip(samples, masks):
        total = ops.add(total, ops.mul(sampled, mask))
    mean = ops.div(total, np.broadcast_to(count, shape))

    spread = ops.mul(ops.sub(ref, mean), ops.sub(ref, mean))
    for sampled, mask in zip(samples, masks):
        diff = ops.sub(sampled, mean)
        spread = ops.add(spread, ops.mul(ops.mul(diff, diff), mask))
    variance = ops.div(spread, np.broadcast_to(count, shape))

    unusable = count == 1.0
    keep = np.broadcast_to(~unusable, shape).astype(np.float64)
    cost = ops.add(ops.mul(variance, keep), np.broadcast_to(unusable * UNUSABLE_COST, shape))
    if unusable.any():
        logger.debug('%d of %d cost cells have no usable source view', int(unusable.sum()), unusable.size)

    return CostVolume(
        ops.reshape(cost, (channels, n) + grid_shape),
        hypotheses,
        unusable.reshape((n,) + grid_shape),
    )


def regularize(volume, net):
    """
    N x h x w probability volume from the 3-D regulariser, normalised by a
    softmax over the hypotheses.
    """
    data = volume.data if isinstance(volume, CostVolume) else as_tensor(volume)
    if not np.isfinite(data.data).all():
        raise ConfigError('Cost volume contains non-finite values.')
    if net.spec.dims != 3 or net.spec.out_channels != 1:
        raise ConfigError('The regulariser must be a 3-D network with one output channel.')
    logits = net(data)
    return F.softmax(ops.reshape(logits, logits.shape[1:]), axis=0)


def _confidence(prob, hypotheses, depth):
    """Probability mass of the four hypotheses around the regressed depth."""
    n = len(hypotheses)
    if n <= 4:
        return prob.sum(axis=0)
    positions = np.interp(depth, hypotheses, np.arange(n))
    start = np.clip(np.floor(positions).astype(np.intp) - 1, 0, n - 4)
    window = start[None] + np.arange(4).reshape((4,) + (1,) * depth.ndim)
    return np.take_along_axis(prob, window, axis=0).sum(axis=0)


def soft_argmax_depth(prob, hypotheses, quarter_shape, grid_offset=GRID_OFFSET):
    """
    Expected depth per sparse cell, scattered onto the quarter-resolution grid.

    Values off the sparse grid are zero and masked out. Confidence is not
    differentiated through.
    """
    prob = as_tensor(prob)
    hypotheses = np.asarray(hypotheses, dtype=np.float64)
    n = len(hypotheses)
    if prob.ndim != 3 or prob.shape[0] != n:
        raise DimensionError(f'probability volume {prob.shape} does not match {n} hypotheses')
    planes = np.broadcast_to(hypotheses.reshape(n, 1, 1), prob.shape)
    depth = ops.sum(ops.mul(prob, planes), axis=0)

    height, width = quarter_shape
    rows = np.arange(grid_offset[0], height, 2)
    cols = np.arange(grid_offset[1], width, 2)
    if depth.shape != (len(rows), len(cols)):
        raise DimensionError(f'sparse grid {depth.shape} does not fit a {height}x{width} map')
    flat_index = (rows[:, None] * width + cols[None, :]).reshape(-1)

    values = ops.scatter(depth, flat_index, quarter_shape)
    mask = np.zeros(quarter_shape, dtype=bool)
    mask.reshape(-1)[flat_index] = True
    confidence = np.zeros(quarter_shape)
    confidence.reshape(-1)[flat_index] = _confidence(prob.data, hypotheses, depth.data).reshape(-1)
    return SparseDepthMap(values, mask, confidence, grid_offset)
