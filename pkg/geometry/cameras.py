"""
Pinhole camera types.

Extrinsics are world-to-camera: a world point X maps to the camera frame
as R @ X + t. All lengths are millimetres and all pixel coordinates are
(x, y) = (column, row) with the origin at the centre of the top-left
pixel.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .validators import validate_depth_range, validate_focal, validate_rotation, validate_scale


@dataclass(frozen=True)
class Intrinsics:
    """Focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for field in ('fx', 'fy', 'cx', 'cy'):
            object.__setattr__(self, field, float(getattr(self, field)))
        validate_focal(self.fx, self.fy)

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[0, 0], matrix[1, 1], matrix[0, 2], matrix[1, 2])

    @property
    def matrix(self):
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @property
    def inverse(self):
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])


def scale_intrinsics(intrinsics, factor):
    """Intrinsics for an image resampled by `factor` (all four entries scale)."""
    validate_scale(factor)
    return Intrinsics(
        intrinsics.fx * factor,
        intrinsics.fy * factor,
        intrinsics.cx * factor,
        intrinsics.cy * factor,
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rotation (3x3, orthonormal) and translation (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        validate_rotation(rotation)
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix):
        """Build a pose from a 4x4 (or 3x4) world-to-camera matrix."""
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:3, :3], matrix[:3, 3])

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def center(self):
        """Camera centre in world coordinates, -Rᵀt."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CameraView:
    """
    One calibrated input view.

    `image` is an H x W x 3 float array in [0, 1] (or None for views that
    only carry geometry); `depth_range` is (d_min, d_max) in mm.
    """

    id: int
    image: np.ndarray
    intrinsics: Intrinsics
    pose: Pose
    depth_range: tuple

    def __post_init__(self):
        d_min, d_max = (float(v) for v in self.depth_range)
        validate_depth_range(d_min, d_max)
        object.__setattr__(self, 'depth_range', (d_min, d_max))
        if self.image is not None:
            image = np.array(self.image, dtype=np.float64)
            image.flags.writeable = False
            object.__setattr__(self, 'image', image)

    def __str__(self):
        return f'view {self.id}'

    @property
    def height(self):
        return self.image.shape[0]

    @property
    def width(self):
        return self.image.shape[1]

    def at_scale(self, factor):
        """
        The same camera with intrinsics scaled by `factor`.

        Used for feature maps at 1/2 and 1/4 resolution; the image itself
        is not resampled.
        """
        return dataclasses.replace(self, intrinsics=scale_intrinsics(self.intrinsics, factor))
