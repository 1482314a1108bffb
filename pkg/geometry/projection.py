"""
Projection, back-projection and cross-view reprojection.

Every function accepts a single pixel (shape (2,)) or any array of pixels
(shape (..., 2)) together with a depth of shape (...).

For a reference pixel p at depth D the homogeneous source-image point is
affine in D:

    h(D) = D * q + c,   q = K_s A K_r⁻¹ [p, 1],   c = K_s b

with A = R_s R_rᵀ and b = t_s - A t_r. The reprojected pixel is
(h0 / h2, h1 / h2) and h2 is the depth of the point in the source camera.
"""

from collections import namedtuple

import numpy as np

from depthlab.exceptions import ConfigError, InvalidDepthError

from .cameras import Pose

Reprojection = namedtuple('Reprojection', ['pixels', 'z', 'valid'])
ReprojectionJacobian = namedtuple('ReprojectionJacobian', ['jacobian', 'valid'])


def _homogeneous(pixels):
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[-1] != 2:
        raise ValueError(f'pixel arrays must end in a length-2 axis, got shape {pixels.shape}')
    return np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)


def _positive_depth(depth):
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(~(depth > 0)):
        raise InvalidDepthError('depth must be strictly positive')
    return depth


def backproject(pixels, depth, intrinsics):
    """Camera-frame point(s) D * K⁻¹ [p, 1] for pixel(s) p at depth D (mm)."""
    depth = _positive_depth(depth)
    rays = _homogeneous(pixels) @ intrinsics.inverse.T
    return rays * depth[..., None]


def project(points, intrinsics):
    """
    Pixel coordinates of camera-frame point(s).

    Points must lie in front of the camera (z > 0).
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    if np.any(~(z > 0)):
        raise InvalidDepthError('cannot project points with z <= 0')
    h = points @ intrinsics.matrix.T
    return h[..., :2] / h[..., 2:3]


def relative_motion(ref_pose, src_pose):
    """(A, b) such that X_src = A @ X_ref + b for camera-frame points."""
    rotation = src_pose.rotation @ ref_pose.rotation.T
    return rotation, src_pose.translation - rotation @ ref_pose.translation


def reprojection_coefficients(pixels, ref, src):
    """
    Per-pixel affine form of the reprojection: h(D) = D * q + c.

    Returns q with shape (..., 3) and c with shape (3,).
    """
    rotation, offset = relative_motion(ref.pose, src.pose)
    to_src = src.intrinsics.matrix @ rotation @ ref.intrinsics.inverse
    q = _homogeneous(pixels) @ to_src.T
    c = src.intrinsics.matrix @ offset
    return q, c


def _divide(h):
    z = h[..., 2]
    valid = z > 0
    with np.errstate(divide='ignore', invalid='ignore'):
        pixels = np.where(valid[..., None], h[..., :2] / z[..., None], np.nan)
    return pixels, z, valid


def reproject(pixels, depth, ref, src):
    """
    Map reference pixel(s) at depth D into the source view.

    Returns Reprojection(pixels, z, valid). `z` is the point's depth in the
    source camera; where z <= 0 the point is behind the source camera,
    `valid` is False and the pixel is NaN. Callers mask those entries.
    """
    depth = _positive_depth(depth)
    q, c = reprojection_coefficients(pixels, ref, src)
    h = q * depth[..., None] + c
    return Reprojection(*_divide(h))


def reproject_jacobian(pixels, depth, ref, src):
    """
    Analytic derivative of the reprojected pixel w.r.t. reference depth.

    d(h0/h2)/dD = (q0 c2 - q2 c0) / h2², and likewise for y. Returns
    ReprojectionJacobian(jacobian (..., 2), valid); invalid entries
    (behind the source camera) are zero.
    """
    depth = _positive_depth(depth)
    q, c = reprojection_coefficients(pixels, ref, src)
    h = q * depth[..., None] + c
    z = h[..., 2]
    valid = z > 0
    numerator = q[..., :2] * c[2] - q[..., 2:3] * c[:2]
    with np.errstate(divide='ignore', invalid='ignore'):
        jacobian = np.where(valid[..., None], numerator / (z * z)[..., None], 0.0)
    return ReprojectionJacobian(jacobian, valid)


def camera_center(pose):
    """World position of the camera centre, -Rᵀt."""
    return pose.center


def baseline(pose_a, pose_b):
    """Distance between two camera centres (mm)."""
    return float(np.linalg.norm(pose_a.center - pose_b.center))


def look_at_pose(center, target, down=(0.0, 1.0, 0.0)):
    """
    World-to-camera pose of a camera at `center` looking at `target`.

    `down` is the world direction that should appear as +y (downwards) in
    the image. With center at the origin, target on +z and the default
    `down`, the pose is the identity.
    """
    center = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - center
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ConfigError('look_at_pose: camera centre and target coincide.')
    z_axis = forward / norm
    x_axis = np.cross(np.asarray(down, dtype=np.float64), z_axis)
    x_norm = np.linalg.norm(x_axis)
    if x_norm < 1e-12:
        raise ConfigError('look_at_pose: viewing direction is parallel to the down vector.')
    x_axis /= x_norm
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.stack([x_axis, y_axis, z_axis])
    return Pose(rotation, -rotation @ center)
