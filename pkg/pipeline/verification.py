"""
Self-contained verification suite behind the `verify` command.

Each check measures one numerical property (a gradient error, an oracle
difference, a round-trip mismatch) and passes when the measurement stays
below its tolerance. Checks are grouped so `verify --group` can run a
subset; every group finishes in seconds on one core.
"""

import logging
import tempfile
import time
from collections import namedtuple
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff import functional as F
from autodiff import ops
from autodiff.gradcheck import gradient_check
from costvolume.volume import sample_hypotheses, soft_argmax_depth
from datasets.io import Pair, read_cam, read_pairs, read_pfm, write_cam, write_pairs, write_pfm
from datasets.scenes import SceneSpec, render_scene
from depthlab.exceptions import ConfigError
from fusion.fusion import FusionConfig, PointCloud, fuse, fuse_view
from fusion.ply import read_ply, write_ply
from geometry.cameras import CameraView, Intrinsics, Pose
from geometry.depthmaps import DepthMap
from geometry.projection import backproject, look_at_pose, reproject, reproject_jacobian
from propagation.propagate import PropagationConfig, joint_bilateral, propagate_learned
from refinement.gauss_newton import GNConfig, gn_step, refine_depth_map

logger = logging.getLogger(__name__)

CheckResult = namedtuple('CheckResult', ['group', 'name', 'error', 'tolerance', 'passed', 'detail'])

GROUPS = ('gradients', 'gauss_newton', 'propagation', 'fusion', 'geometry', 'io')

_REGISTRY = {group: [] for group in GROUPS}


def check(group, tolerance):
    """Register a function returning a non-negative error as a check of `group`."""
    def register(func):
        _REGISTRY[group].append((func.__name__, tolerance, func))
        return func
    return register


def _random(shape, seed, low=-1.0, high=1.0):
    return np.random.default_rng(seed).uniform(low, high, size=shape)


def _weighted_sum(out, seed):
    """Scalar <out, R> with a fixed random R, so every output entry reaches the gradient."""
    return ops.sum(ops.mul(out, _random(out.shape, seed)))


def _shifted_rig(baseline_x=50.0, focal=16.0, height=12, width=16):
    """Reference at the origin and a source shifted along x, both looking down +z."""
    intrinsics = Intrinsics(focal, focal, (width - 1) / 2, (height - 1) / 2)
    ref = CameraView(0, None, intrinsics, Pose.identity(), (380.0, 720.0))
    src = CameraView(1, None, intrinsics, Pose(np.eye(3), [-baseline_x, 0.0, 0.0]), (380.0, 720.0))
    return ref, src


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

@check('gradients', 1e-4)
def conv2d(seed=1):
    x, w, b = _random((2, 6, 6), seed), _random((3, 2, 3, 3), seed + 1), _random(3, seed + 2)
    return gradient_check(lambda x, w, b: _weighted_sum(F.conv2d(x, w, b, padding=1), seed), [x, w, b])


@check('gradients', 1e-4)
def conv2d_strided(seed=2):
    x, w = _random((2, 7, 7), seed), _random((2, 2, 3, 3), seed + 1)
    return gradient_check(lambda x, w: _weighted_sum(F.conv2d(x, w, stride=2, padding=1), seed), [x, w])


@check('gradients', 1e-4)
def conv3d(seed=3):
    x, w, b = _random((2, 3, 4, 4), seed), _random((2, 2, 3, 3, 3), seed + 1), _random(2, seed + 2)
    return gradient_check(lambda x, w, b: _weighted_sum(F.conv3d(x, w, b, padding=1), seed), [x, w, b])


@check('gradients', 1e-4)
def softmax(seed=4):
    x = _random((5, 3, 3), seed, -3.0, 3.0)
    return gradient_check(lambda x: _weighted_sum(F.softmax(x, axis=0), seed), [x])


@check('gradients', 1e-4)
def bilinear_sample(seed=5):
    fmap = _random((2, 5, 6), seed)
    rng = np.random.default_rng(seed)
    # fractional parts away from cell edges keep the finite differences inside one cell
    coords = np.stack([rng.integers(0, 5, 12), rng.integers(0, 4, 12)], axis=1) + rng.uniform(0.2, 0.8, (12, 2))
    return gradient_check(lambda f, c: _weighted_sum(F.bilinear_sample(f, c), seed), [fmap, coords])


@check('gradients', 1e-4)
def learned_propagation(seed=6):
    depth = _random((6, 7), seed, 400.0, 600.0)
    logits = _random((9, 6, 7), seed + 1, -2.0, 2.0)
    return gradient_check(
        lambda d, l: _weighted_sum(propagate_learned(d, F.softmax(l, axis=0)), seed), [depth, logits],
    )


@check('gradients', 1e-4)
def soft_argmax(seed=7):
    logits = _random((8, 3, 4), seed, -2.0, 2.0)
    hypotheses = sample_hypotheses((400.0, 700.0), 8)

    def loss(l):
        sparse = soft_argmax_depth(F.softmax(l, axis=0), hypotheses, (6, 8))
        return _weighted_sum(sparse.values, seed)

    return gradient_check(loss, [logits])


@check('gradients', 1e-4)
def gauss_newton_layer(seed=8):
    ref, src = _shifted_rig()
    depth = 500.0 + _random((12, 16), seed, -3.0, 3.0)
    ref_feats, src_feats = _random((3, 12, 16), seed + 1), _random((3, 12, 16), seed + 2)
    cfg = GNConfig(max_step_fraction=None)

    def loss(d, fr, fs):
        return _weighted_sum(refine_depth_map(d, ref, [src], fr, [fs], cfg).depth, seed)

    return gradient_check(loss, [depth, ref_feats, src_feats], max_entries=20, seed=seed)


@check('gradients', 1e-4)
def masked_l1_loss(seed=9):
    pred, target = _random((5, 5), seed), _random((5, 5), seed + 1)
    mask = _random((5, 5), seed + 2) > -0.5
    return gradient_check(lambda p: F.l1_loss_masked(p, target, mask), [pred])


# ---------------------------------------------------------------------------
# Gauss-Newton
# ---------------------------------------------------------------------------

@check('gauss_newton', 1e-10)
def affine_residuals_solved_in_one_step(seed=10):
    """Residuals r = J (D - D*) from two views: one undamped step lands on D*."""
    rng = np.random.default_rng(seed)
    pixels = 1000
    offset = rng.uniform(-5.0, 5.0, pixels)
    jacobians = [rng.uniform(-1.0, 1.0, (4, pixels)) for _ in range(2)]
    residuals = [j * offset for j in jacobians]
    delta, solvable = gn_step(residuals, jacobians, damping=0.0)
    return float(np.abs(delta.data + offset)[solvable].max())


@check('gauss_newton', 0.0)
def zero_iterations_is_identity(seed=11):
    ref, src = _shifted_rig()
    depth = 500.0 + _random((12, 16), seed, -3.0, 3.0)
    result = refine_depth_map(depth, ref, [src], _random((3, 12, 16), seed + 1),
                              [_random((3, 12, 16), seed + 2)], GNConfig(iterations=0))
    return float(np.abs(result.depth.data - depth).max())


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def _edge_windows(values, k):
    r = k // 2
    return sliding_window_view(np.pad(values, r, mode='edge'), (k, k))


@check('propagation', 1e-12)
def uniform_weights_match_box_filter(seed=12):
    depth = _random((8, 9), seed, 400.0, 600.0)
    weights = np.full((9, 8, 9), 1.0 / 9.0)
    oracle = _edge_windows(depth, 3).mean(axis=(-2, -1))
    return float(np.abs(propagate_learned(depth, weights).data - oracle).max())


@check('propagation', 1e-10)
def constant_guide_bilateral_is_gaussian(seed=13):
    depth = _random((8, 9), seed, 400.0, 600.0)
    cfg = PropagationConfig(k=5, mode='bilateral', sigma_spatial=1.3, sigma_range=0.1)
    dy, dx = np.mgrid[-2:3, -2:3]
    kernel = np.exp(-(dx * dx + dy * dy) / (2.0 * cfg.sigma_spatial ** 2))
    oracle = (_edge_windows(depth, 5) * kernel).sum(axis=(-2, -1)) / kernel.sum()
    filtered = joint_bilateral(depth, np.full((8, 9, 3), 0.5), cfg)
    return float(np.abs(filtered.data - oracle).max())


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def _rendered_plane(size=32, num_views=3):
    rendered = render_scene(SceneSpec(height=size, width=size, num_views=num_views))
    return [r.view for r in rendered], [DepthMap(r.depth) for r in rendered]


@check('fusion', 1e-3)
def ground_truth_fuses_onto_surface():
    """RMS distance (mm) of the fused GT cloud to the z = 500 plane."""
    views, depths = _rendered_plane()
    cloud = fuse(depths, views, FusionConfig())
    if len(cloud) == 0:
        return np.inf
    return float(np.sqrt(np.mean((cloud.points[:, 2] - 500.0) ** 2)))


def _noisy_maps(depths, seed):
    rng = np.random.default_rng(seed)
    return [DepthMap(d.values * (1.0 + rng.normal(0.0, 2e-3, d.shape))) for d in depths]


@check('fusion', 0.0)
def consistency_nested_in_eta(seed=14):
    """Pixels leaving the consistent set as eta grows (must be none)."""
    views, depths = _rendered_plane()
    noisy = _noisy_maps(depths, seed)
    violations, previous = 0, None
    for eta in (0.12, 0.25, 0.5, 1.0, 2.0):
        consistent = fuse_view(0, noisy, views, FusionConfig(eta=eta, min_views=2)).fused
        if previous is not None:
            violations += int((previous & ~consistent).sum())
        previous = consistent
    return float(violations)


@check('fusion', 0.0)
def fused_set_nested_in_min_views(seed=15):
    """Pixels fused at V + 1 but not at V (must be none)."""
    views, depths = _rendered_plane()
    noisy = _noisy_maps(depths, seed)
    violations, previous = 0, None
    for min_views in (2, 3, 4):
        fused = fuse_view(0, noisy, views, FusionConfig(min_views=min_views)).fused
        if previous is not None:
            violations += int((fused & ~previous).sum())
        previous = fused
    return float(violations)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _world_points(pixels, depth, view):
    camera = backproject(pixels, depth, view.intrinsics)
    return (camera - view.pose.translation) @ view.pose.rotation


@check('geometry', 1e-9)
def ground_truth_reprojection():
    """World-point disagreement (mm) after moving GT pixels into another view and back."""
    rendered = render_scene(SceneSpec(height=32, width=32, num_views=3))
    ref, src = rendered[0].view, rendered[2].view
    rows, cols = np.mgrid[0:32, 0:32]
    pixels = np.stack([cols, rows], axis=-1).reshape(-1, 2).astype(np.float64)
    depth = rendered[0].depth.reshape(-1)
    moved = reproject(pixels, depth, ref, src)
    if not moved.valid.all():
        return np.inf
    there = _world_points(moved.pixels, moved.z, src)
    here = _world_points(pixels, depth, ref)
    on_plane = np.abs(here[:, 2] - 500.0).max()
    return float(max(np.abs(there - here).max(), on_plane))


@check('geometry', 1e-5)
def reprojection_jacobian(seed=16, rigs=1000):
    """Worst relative difference between the analytic and central-difference dp'/dD."""
    rng = np.random.default_rng(seed)
    intrinsics = Intrinsics(64.0, 64.0, 31.5, 31.5)
    worst = 0.0
    for _ in range(rigs):
        center = rng.uniform(-100.0, 100.0, 3) * np.array([1.0, 1.0, 0.2])
        ref = CameraView(0, None, intrinsics, Pose.identity(), (100.0, 1000.0))
        src = CameraView(1, None, intrinsics, look_at_pose(center, [0.0, 0.0, 500.0]), (100.0, 1000.0))
        pixel = rng.uniform(0.0, 63.0, 2)
        depth = rng.uniform(300.0, 700.0)
        jac = reproject_jacobian(pixel, depth, ref, src)
        if not jac.valid:
            continue
        step = 1e-3
        plus = reproject(pixel, depth + step, ref, src).pixels
        minus = reproject(pixel, depth - step, ref, src).pixels
        numeric = (plus - minus) / (2 * step)
        scale = max(np.abs(numeric).max(), 1e-3)
        worst = max(worst, float(np.abs(jac.jacobian - numeric).max() / scale))
    return worst


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

@check('io', 0.0)
def pfm_round_trip(seed=17):
    values = _random((7, 5), seed, 0.0, 1000.0).astype(np.float32).astype(np.float64)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'depth.pfm'
        write_pfm(path, values)
        return float(np.abs(read_pfm(path) - values).max())


@check('io', 0.0)
def cam_round_trip():
    pose = look_at_pose([30.0, -10.0, 5.0], [0.0, 0.0, 500.0])
    intrinsics = Intrinsics(361.54, 360.0, 82.9, 66.4)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'cam.txt'
        write_cam(path, pose, intrinsics, (425.0, 935.0), 192)
        cam = read_cam(path)
    return float(max(
        np.abs(cam.pose.matrix - pose.matrix).max(),
        np.abs(cam.intrinsics.matrix - intrinsics.matrix).max(),
        np.abs(np.subtract(cam.depth_range, (425.0, 935.0))).max(),
    ))


@check('io', 0.0)
def pair_round_trip():
    pairs = [Pair(0, (1, 2)), Pair(1, (0, 2)), Pair(2, (1, 0))]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'pair.txt'
        write_pairs(path, pairs)
        return 0.0 if read_pairs(path) == pairs else 1.0


@check('io', 0.0)
def ply_round_trip(seed=18):
    points = _random((20, 3), seed, -100.0, 100.0).astype(np.float32).astype(np.float64)
    colors = np.random.default_rng(seed).integers(0, 256, (20, 3)).astype(np.uint8)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'cloud.ply'
        write_ply(path, PointCloud(points, colors))
        cloud = read_ply(path)
    mismatch = np.abs(cloud.points - points).max()
    return float(mismatch + np.abs(cloud.colors.astype(int) - colors.astype(int)).max())


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def run_checks(groups=None):
    """Run the selected groups (all by default) and return their CheckResults."""
    groups = GROUPS if not groups else tuple(groups)
    unknown = sorted(set(groups) - set(GROUPS))
    if unknown:
        raise ConfigError(f'Unknown check groups {unknown}; choose from {GROUPS}.')

    results = []
    for group in groups:
        start = time.perf_counter()
        for name, tolerance, func in _REGISTRY[group]:
            try:
                error = float(func())
                detail = ''
            except Exception as exc:  # noqa: BLE001
                error, detail = np.inf, f'{type(exc).__name__}: {exc}'
            passed = bool(error <= tolerance)
            results.append(CheckResult(group, name, error, tolerance, passed, detail))
        failed = sum(not r.passed for r in results if r.group == group)
        logger.info('check group %s: %d failed (%.2f s)', group, failed, time.perf_counter() - start)
    return results
