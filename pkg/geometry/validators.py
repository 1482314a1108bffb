"""
Validators for camera parameters.

Each raises ConfigError (a Django ValidationError) with a message naming
the offending value.
"""

import numpy as np

from depthlab.exceptions import ConfigError

# Orthonormality tolerance for rotations read from disk or built in code
ROTATION_TOLERANCE = 1e-9


def validate_focal(fx, fy):
    """Focal lengths must be strictly positive."""
    if not (fx > 0 and fy > 0):
        raise ConfigError(f'Focal lengths must be positive, got fx={fx}, fy={fy}.')


def validate_rotation(rotation, tolerance=ROTATION_TOLERANCE):
    """
    Validate a 3x3 world-to-camera rotation.

    RᵀR must equal the identity and det(R) must equal 1, both within
    `tolerance`.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ConfigError(f'Rotation must be 3x3, got shape {rotation.shape}.')
    deviation = np.abs(rotation.T @ rotation - np.eye(3)).max()
    if deviation > tolerance:
        raise ConfigError(f'Rotation is not orthonormal (max deviation {deviation:.3e}).')
    det = np.linalg.det(rotation)
    if abs(det - 1.0) > tolerance:
        raise ConfigError(f'Rotation determinant is {det:.12f}, expected 1.')


def validate_depth_range(d_min, d_max):
    """Depth ranges must satisfy 0 < d_min < d_max."""
    if not (0 < d_min < d_max):
        raise ConfigError(f'Depth range must satisfy 0 < d_min < d_max, got ({d_min}, {d_max}).')


def validate_scale(factor):
    if not factor > 0:
        raise ConfigError(f'Scale factor must be positive, got {factor}.')
