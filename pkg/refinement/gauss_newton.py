"""
Differentiable Gauss-Newton depth refinement.

For a reference pixel p at depth D the residual against source i is the
feature difference r_i = F_i(p'_i) - F_0(p), with p'_i the reprojection
of p at depth D. Its derivative in D is J_i = dF_i/dp' . dp'/dD, the
spatial feature gradient at p'_i times the reprojection jacobian. Depth is
one-dimensional per pixel, so the Gauss-Newton step is the scalar

    delta = -sum(J . r) / (sum(J . J) + damping)

summed over channels and usable source views. Every quantity is built from
autodiff ops, so the refined map is differentiable w.r.t. the input depth
and the feature maps; with `detach_jacobian` J is treated as a constant.

With `reject_uphill` a step is kept only where it does not raise the
pixel's photometric cost (the summed squared residual) and leaves the set
of usable sources unchanged; elsewhere the pixel keeps its depth.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from autodiff import functional as F
from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from depthlab.exceptions import ConfigError, DimensionError
from geometry.projection import reprojection_coefficients

logger = logging.getLogger(__name__)

# Reprojections this far outside the feature map still count as in frame
IN_FRAME_TOLERANCE = 1e-6

Linearisation = namedtuple('Linearisation', ['residuals', 'jacobians', 'valid'])
StepStats = namedtuple('StepStats', ['iteration', 'updated', 'min', 'mean', 'max'])


@dataclass(frozen=True)
class GNConfig:
    iterations: int = 1
    damping: float = 1e-6
    min_views: int = 1
    max_step_fraction: float = 0.05
    detach_jacobian: bool = False
    reject_uphill: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f'iterations must be >= 0, got {self.iterations}.')
        if self.damping < 0:
            raise ConfigError(f'damping must be >= 0, got {self.damping}.')
        if self.min_views < 1:
            raise ConfigError(f'min_views must be >= 1, got {self.min_views}.')
        if self.max_step_fraction is not None and self.max_step_fraction <= 0:
            raise ConfigError('max_step_fraction must be positive or None.')


@dataclass
class RefinementResult:
    """
    `steps` holds one StepStats per iteration, describing the increments
    applied in that iteration; `change_stats` summarises the total change
    from the input map over every updated pixel.
    """

    depth: Tensor
    updated_mask: np.ndarray
    change_stats: dict
    steps: list


def _summary(values):
    if not values.size:
        return 0.0, 0.0, 0.0
    return float(values.min()), float(values.mean()), float(values.max())


def _row(t, i):
    return ops.index(t, (i,))


def _reproject(pixels, depth, ref_view, src_view):
    """Reprojected coordinates (M x 2 tensor), dp'/dD (2 rows of M) and the z > 0 mask."""
    q, c = reprojection_coefficients(pixels, ref_view, src_view)
    hx = ops.add(ops.mul(depth, q[:, 0]), c[0])
    hy = ops.add(ops.mul(depth, q[:, 1]), c[1])
    hz = ops.add(ops.mul(depth, q[:, 2]), c[2])
    front = hz.data > 0
    hz = ops.where(front, hz, 1.0)
    coords = ops.stack([ops.div(hx, hz), ops.div(hy, hz)], axis=1)
    hz2 = ops.mul(hz, hz)
    jac_x = ops.div(q[:, 0] * c[2] - q[:, 2] * c[0], hz2)
    jac_y = ops.div(q[:, 1] * c[2] - q[:, 2] * c[1], hz2)
    return coords, (jac_x, jac_y), front


def _in_frame(coords, height, width):
    x, y = coords[:, 0], coords[:, 1]
    tol = IN_FRAME_TOLERANCE
    return (x >= -tol) & (x <= width - 1 + tol) & (y >= -tol) & (y <= height - 1 + tol)


def linearise(pixels, depth, ref_feats, src_feats, ref_view, src_views, detach_jacobian=False):
    """
    Residuals and jacobians of M reference pixels against every source.

    `pixels` is M x 2 (x, y) at feature resolution and the views carry
    intrinsics at that resolution. Returns Linearisation(residuals,
    jacobians, valid): per source an F x M residual and jacobian, and a
    V x M mask that is false where the reprojection falls behind the
    source camera or outside its feature map. Invalid entries are zero.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depth = as_tensor(depth)
    ref_feats = as_tensor(ref_feats)
    if depth.shape != (len(pixels),):
        raise DimensionError(f'{len(pixels)} pixels but depth shape {depth.shape}')
    if np.any(~(depth.data > 0)):
        raise ConfigError('Gauss-Newton residuals need strictly positive depth.')
    channels = ref_feats.shape[0]
    reference = F.bilinear_sample(ref_feats, pixels)

    residuals, jacobians, valid = [], [], []
    for feats, src_view in zip(src_feats, src_views):
        feats = as_tensor(feats)
        if feats.shape[0] != channels:
            raise DimensionError(f'source features {feats.shape} do not match reference {ref_feats.shape}')
        coords, (jac_x, jac_y), front = _reproject(pixels, depth, ref_view, src_view)
        usable = front & _in_frame(coords.data, *feats.shape[1:])
        coords = ops.where(np.broadcast_to(usable[:, None], coords.shape), coords, 0.0)
        mask = np.broadcast_to(usable, (channels, len(pixels))).astype(np.float64)

        residual = ops.mul(ops.sub(F.bilinear_sample(feats, coords), reference), mask)
        if detach_jacobian:
            coords, feats = coords.detach(), feats.detach()
            jac_x, jac_y = jac_x.detach(), jac_y.detach()
        spatial = F.bilinear_gradient(feats, coords)
        shape = (channels, len(pixels))
        jacobian = ops.add(ops.mul(_row(spatial, 0), ops.broadcast_to(jac_x, shape)),
                           ops.mul(_row(spatial, 1), ops.broadcast_to(jac_y, shape)))
        residuals.append(residual)
        jacobians.append(ops.mul(jacobian, mask))
        valid.append(usable)
    valid = np.array(valid, dtype=bool).reshape(len(residuals), len(pixels))
    return Linearisation(residuals, jacobians, valid)


def residuals(pixels, depth, ref_feats, src_feats, ref_view, src_views):
    """Per-source F x M residuals F_i(p'_i) - F_0(p) and the V x M validity mask."""
    lin = linearise(pixels, depth, ref_feats, src_feats, ref_view, src_views)
    return lin.residuals, lin.valid


def jacobian(pixels, depth, ref_feats, src_feats, ref_view, src_views):
    """Per-source F x M derivatives of the residuals w.r.t. depth, and the validity mask."""
    lin = linearise(pixels, depth, ref_feats, src_feats, ref_view, src_views)
    return lin.jacobians, lin.valid


def _cost(residual_list):
    return np.sum([(r.data ** 2).sum(axis=0) for r in residual_list], axis=0)


def photometric_cost(pixels, depth, ref_feats, src_feats, ref_view, src_views):
    """Per-pixel squared residual summed over channels and usable sources, and the V x M validity mask."""
    res, valid = residuals(pixels, depth, ref_feats, src_feats, ref_view, src_views)
    return _cost(res), valid


def _downhill(pixels, lin, candidate, ref_feats, src_feats, ref_view, src_views):
    """Pixels whose cost at `candidate` does not exceed the linearised one, with the same usable sources."""
    positive = np.isfinite(candidate) & (candidate > 0)
    after = linearise(pixels, Tensor(np.where(positive, candidate, 1.0)), ref_feats.detach(),
                      [as_tensor(f).detach() for f in src_feats], ref_view, src_views)
    same_views = (after.valid == lin.valid).all(axis=0)
    return positive & same_views & (_cost(after.residuals) <= _cost(lin.residuals))


def gn_step(residual_list, jacobian_list, damping=0.0):
    """
    Scalar Gauss-Newton increment per pixel.

    Each list entry is an F x M (or length-M) stack for one view. Returns
    (delta, solvable): delta is an M tensor, zero where J^T J + damping is
    zero, and `solvable` marks the pixels that received a step.
    """
    if not residual_list:
        raise ConfigError('gn_step needs at least one residual.')
    jtj, jtr = None, None
    for r, j in zip(residual_list, jacobian_list):
        r, j = as_tensor(r), as_tensor(j)
        if r.shape != j.shape:
            raise DimensionError(f'residual {r.shape} and jacobian {j.shape} differ')
        jj, jr = ops.mul(j, j), ops.mul(j, r)
        if jj.ndim == 2:
            jj, jr = ops.sum(jj, axis=0), ops.sum(jr, axis=0)
        jtj = jj if jtj is None else ops.add(jtj, jj)
        jtr = jr if jtr is None else ops.add(jtr, jr)
    denominator = ops.add(jtj, float(damping))
    solvable = denominator.data > 0
    denominator = ops.where(solvable, denominator, 1.0)
    delta = ops.neg(ops.div(jtr, denominator))
    return ops.where(solvable, delta, 0.0), solvable


def feature_scale(view, feats):
    """Intrinsics scale from a view's image to a feature map; the aspect must agree."""
    if view.image is None:
        return 1.0
    height, width = feats.shape[1:]
    sx, sy = width / view.width, height / view.height
    if not np.isclose(sx, sy, rtol=1e-12):
        raise ConfigError(f'Feature map {height}x{width} does not scale {view} uniformly.')
    return sx


def _at_feature_scale(view, feats):
    scale = feature_scale(view, feats)
    return view if scale == 1.0 else view.at_scale(scale)


def refine_depth_map(depth, ref_view, src_views, ref_feats, src_feats, cfg=None):
    """
    Refine an H x W depth map with cfg.iterations Gauss-Newton steps.

    `ref_feats` / `src_feats` are C x H x W maps on the depth map's grid
    (the half-resolution GN features). Pixels with non-positive depth, or
    fewer than cfg.min_views usable sources, keep their input value
    bit for bit.
    """
    cfg = cfg or GNConfig()
    depth = as_tensor(depth)
    ref_feats = as_tensor(ref_feats)
    if depth.ndim != 2 or ref_feats.shape[1:] != depth.shape:
        raise ConfigError(f'Features {ref_feats.shape} do not match the depth map {depth.shape}.')
    for feats in src_feats:
        if as_tensor(feats).shape[1:] != depth.shape:
            raise ConfigError(f'Source features {as_tensor(feats).shape} do not match the depth map {depth.shape}.')
    if len(src_feats) != len(src_views):
        raise ConfigError(f'{len(src_feats)} source feature maps for {len(src_views)} source views.')

    ref = _at_feature_scale(ref_view, ref_feats)
    sources = [_at_feature_scale(v, f) for v, f in zip(src_views, src_feats)]
    height, width = depth.shape
    pixels = F.pixel_grid(height, width)
    d_min, d_max = ref_view.depth_range
    cap = None if cfg.max_step_fraction is None else cfg.max_step_fraction * (d_max - d_min)

    original = depth
    updated = np.zeros(depth.shape, dtype=bool)
    steps = []
    for iteration in range(cfg.iterations):
        flat = ops.reshape(depth, (height * width,))
        positive = np.isfinite(flat.data) & (flat.data > 0)
        safe = ops.where(positive, flat, 1.0)
        lin = linearise(pixels, safe, ref_feats, src_feats, ref, sources, cfg.detach_jacobian)
        delta, solvable = gn_step(lin.residuals, lin.jacobians, cfg.damping)
        if cap is not None:
            delta = ops.clip(delta, -cap, cap)
        step = positive & solvable & (lin.valid.sum(axis=0) >= cfg.min_views)
        candidate = ops.add(flat, delta)
        if cfg.reject_uphill and step.any():
            downhill = _downhill(pixels, lin, candidate.data, ref_feats, src_feats, ref, sources)
            logger.debug('GN iteration %d rejected %d uphill steps', iteration, int((step & ~downhill).sum()))
            step &= downhill
        steps.append(StepStats(iteration, int(step.sum()), *_summary(delta.data[step])))
        flat = ops.where(step, candidate, flat)
        depth = ops.reshape(flat, (height, width))
        updated |= step.reshape(height, width)
        logger.debug('GN iteration %d updated %d of %d pixels', iteration, int(step.sum()), step.size)

    low, mean, high = _summary((depth.data - original.data)[updated])
    return RefinementResult(depth, updated, {'min': low, 'mean': mean, 'max': high}, steps)
