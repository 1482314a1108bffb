"""
Depth-map fusion into a coloured point cloud.

Each reference view is fused on its own: pixels whose confidence passes
the photometric filter are checked against every other view by the
inverse-depth discrepancy f * baseline * |1/D(p) - 1/D'(p)|, where D'(p)
is the source's depth at the reprojection of p, carried back into the
reference camera. Pixels consistent with enough views become one world
point at the mean of the agreeing depths.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from depthlab.exceptions import ConfigError, DimensionError
from geometry.depthmaps import DepthMap
from geometry.projection import backproject, baseline, relative_motion, reproject

logger = logging.getLogger(__name__)

UNVERIFIABLE = np.inf

Discrepancy = namedtuple('Discrepancy', ['values', 'verifiable', 'depth_in_ref'])
ViewFusion = namedtuple('ViewFusion', ['filtered', 'discrepancies', 'counts', 'fused', 'depth', 'cloud'])


@dataclass(frozen=True)
class FusionConfig:
    prob_thresh: float = 0.5
    eta: float = 0.12
    min_views: int = 3

    def __post_init__(self):
        if not 0.0 <= self.prob_thresh <= 1.0:
            raise ConfigError(f'prob_thresh must be in [0, 1], got {self.prob_thresh}.')
        if not self.eta > 0:
            raise ConfigError(f'eta must be positive, got {self.eta}.')
        if self.min_views < 2:
            raise ConfigError(f'min_views must be >= 2, got {self.min_views}.')


@dataclass
class PointCloud:
    """N x 3 world points (mm) with N x 3 uint8 colours."""

    points: np.ndarray
    colors: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.colors is None:
            self.colors = np.full(self.points.shape, 255, dtype=np.uint8)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.colors) != len(self.points):
            raise DimensionError(f'{len(self.points)} points but {len(self.colors)} colours')
        if not np.isfinite(self.points).all():
            raise ConfigError('Point clouds must have finite coordinates.')

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)))

    @classmethod
    def concatenate(cls, clouds):
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(np.concatenate([c.points for c in clouds]), np.concatenate([c.colors for c in clouds]))


# ---------------------------------------------------------------------------
# Photometric filtering
# ---------------------------------------------------------------------------

def resize_nearest(values, shape):
    """Nearest-neighbour resize where target pixel i reads source pixel round(i * src / dst)."""
    values = np.asarray(values)
    height, width = shape
    rows = np.minimum(np.floor(np.arange(height) * values.shape[0] / height + 0.5), values.shape[0] - 1)
    cols = np.minimum(np.floor(np.arange(width) * values.shape[1] / width + 0.5), values.shape[1] - 1)
    return values[rows.astype(np.intp)[:, None], cols.astype(np.intp)[None, :]]


def photometric_filter(depth, confidence, prob_thresh):
    """Clear the mask wherever the (resized) confidence is below `prob_thresh`."""
    confidence = np.asarray(confidence, dtype=np.float64)
    if confidence.size and (confidence.min() < 0 or confidence.max() > 1):
        raise ConfigError('Confidence must lie in [0, 1].')
    confidence = resize_nearest(confidence, depth.shape)
    return DepthMap(depth.values, depth.mask & (confidence >= prob_thresh), confidence)


# ---------------------------------------------------------------------------
# Geometric consistency
# ---------------------------------------------------------------------------

def view_at_depth_scale(view, depth):
    """The camera with intrinsics scaled to the depth map's grid."""
    if view.image is None or view.image.shape[:2] == depth.shape:
        return view
    scale = depth.shape[1] / view.width
    if not np.isclose(depth.shape[0] / view.height, scale, rtol=1e-12):
        raise ConfigError(f'Depth map {depth.shape} does not scale {view} uniformly.')
    return view.at_scale(scale)


def _sample_inverse_depth(depth, coords):
    """Bilinear inverse depth at M (x, y) positions; needs all four corners valid."""
    height, width = depth.shape
    x, y = coords[:, 0], coords[:, 1]
    inside = np.isfinite(x) & np.isfinite(y) & (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)
    x = np.where(inside, x, 0.0)
    y = np.where(inside, y, 0.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(width - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(height - 2, 0))
    x1, y1 = np.minimum(x0 + 1, width - 1), np.minimum(y0 + 1, height - 1)
    fx, fy = x - x0, y - y0

    ok = inside.copy()
    inverse = np.zeros(len(coords))
    for rows, cols, w in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x1, fx * (1 - fy)),
                          (y1, x0, (1 - fx) * fy), (y1, x1, fx * fy)):
        ok &= depth.mask[rows, cols]
        with np.errstate(divide='ignore'):
            inverse += w * np.where(depth.mask[rows, cols], 1.0 / depth.values[rows, cols], 0.0)
    return inverse, ok & (inverse > 0)


def geometric_discrepancy(pixels, ref_depth, src_depth, ref_view, src_view):
    """
    Inverse-depth discrepancy of reference pixels against one source map.

    `pixels` is M x 2 integer (x, y) with valid reference depth; views carry
    intrinsics on the depth maps' grids. Returns Discrepancy(values,
    verifiable, depth_in_ref): values are in pixels and UNVERIFIABLE where
    the reprojection leaves the source frame or lands on invalid depth;
    depth_in_ref is the source's depth expressed in the reference camera.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    cols, rows = pixels[:, 0].astype(np.intp), pixels[:, 1].astype(np.intp)
    depth = ref_depth.values[rows, cols]
    if not ref_depth.mask[rows, cols].all():
        raise ConfigError('geometric_discrepancy needs valid reference depth at every pixel.')

    projected = reproject(pixels, depth, ref_view, src_view)
    inverse, verifiable = _sample_inverse_depth(src_depth, projected.pixels)
    verifiable &= projected.valid

    src_z = np.where(verifiable, 1.0 / np.where(verifiable, inverse, 1.0), 1.0)
    coords = np.where(verifiable[:, None], projected.pixels, 0.0)
    src_points = backproject(coords, src_z, src_view.intrinsics)
    rotation, offset = relative_motion(ref_view.pose, src_view.pose)
    depth_in_ref = ((src_points - offset) @ rotation)[:, 2]
    verifiable &= depth_in_ref > 0

    scale = ref_view.intrinsics.fx * baseline(ref_view.pose, src_view.pose)
    with np.errstate(divide='ignore', invalid='ignore'):
        values = scale * np.abs(1.0 / depth - 1.0 / depth_in_ref)
    values = np.where(verifiable, values, UNVERIFIABLE)
    return Discrepancy(values, verifiable, np.where(verifiable, depth_in_ref, np.nan))


def _colors(view, rows, cols, shape):
    if view.image is None:
        return np.full((len(rows), 3), 255, dtype=np.uint8)
    image = resize_nearest(view.image, shape)
    return np.round(np.clip(image[rows, cols], 0.0, 1.0) * 255).astype(np.uint8)


def fuse_view(index, depth_maps, views, cfg, sources=None):
    """
    Fuse the depth map of views[index] against the other maps.

    `depth_maps` are already photometrically filtered. `sources` restricts
    the check to those view positions (default: all others). Returns
    ViewFusion with the per-source discrepancy arrays, the consistency
    count and fused mask on the depth grid, the averaged depth and the
    resulting PointCloud.
    """
    ref_depth = depth_maps[index]
    ref_view = view_at_depth_scale(views[index], ref_depth)
    sources = [i for i in range(len(views)) if i != index] if sources is None else list(sources)

    rows, cols = np.nonzero(ref_depth.mask)
    pixels = np.stack([cols, rows], axis=1).astype(np.float64)
    counts = np.zeros(ref_depth.shape, dtype=np.intp)
    total = ref_depth.values[rows, cols].copy()
    discrepancies = {}
    for i in sources:
        src_view = view_at_depth_scale(views[i], depth_maps[i])
        result = geometric_discrepancy(pixels, ref_depth, depth_maps[i], ref_view, src_view)
        consistent = result.values < cfg.eta
        counts[rows, cols] += consistent
        total += np.where(consistent, result.depth_in_ref, 0.0)
        full = np.full(ref_depth.shape, UNVERIFIABLE)
        full[rows, cols] = result.values
        discrepancies[views[i].id] = full

    averaged = total / (counts[rows, cols] + 1)
    keep = counts[rows, cols] + 1 >= cfg.min_views
    fused = np.zeros(ref_depth.shape, dtype=bool)
    fused[rows[keep], cols[keep]] = True
    depth = np.zeros(ref_depth.shape)
    depth[rows[keep], cols[keep]] = averaged[keep]

    if keep.any():
        camera_points = backproject(pixels[keep], averaged[keep], ref_view.intrinsics)
        pose = ref_view.pose
        world = (camera_points - pose.translation) @ pose.rotation
        colors = _colors(views[index], rows[keep], cols[keep], ref_depth.shape)
        cloud = PointCloud(world, colors)
    else:
        cloud = PointCloud.empty()
    return ViewFusion(ref_depth, discrepancies, counts, fused, depth, cloud)


def fuse(depth_maps, views, cfg=None, pairs=None):
    """
    Fuse per-view depth maps into one point cloud.

    `depth_maps` align with `views`; each DepthMap's confidence (if any)
    drives the photometric filter. `pairs` optionally maps a view id to
    the ids its map is checked against. Points are kept once per
    reference view that claims them.
    """
    cfg = cfg or FusionConfig()
    if len(depth_maps) != len(views):
        raise ConfigError(f'{len(depth_maps)} depth maps for {len(views)} views.')
    if len(views) < cfg.min_views:
        logger.warning('Fusion needs %d views, only %d given; the cloud is empty', cfg.min_views, len(views))
        return PointCloud.empty()

    filtered = []
    for depth in depth_maps:
        confidence = np.ones(depth.shape) if depth.confidence is None else depth.confidence
        filtered.append(photometric_filter(depth, confidence, cfg.prob_thresh))

    position = {view.id: i for i, view in enumerate(views)}
    clouds = []
    for index, view in enumerate(views):
        sources = None
        if pairs is not None and view.id in pairs:
            sources = [position[v] for v in pairs[view.id] if v in position]
        result = fuse_view(index, filtered, views, cfg, sources)
        logger.info('Fused %d of %d filtered pixels of %s', int(result.fused.sum()),
                    int(filtered[index].mask.sum()), view)
        clouds.append(result.cloud)
    return PointCloud.concatenate(clouds)
