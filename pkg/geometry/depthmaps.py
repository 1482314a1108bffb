"""
Dense depth maps.
"""

from dataclasses import dataclass

import numpy as np

from depthlab.exceptions import DimensionError


@dataclass
class DepthMap:
    """
    Per-pixel depth (mm) with a validity mask and an optional confidence.

    Invalid pixels carry depth 0 on disk; in memory the mask is the
    authority.
    """

    values: np.ndarray
    mask: np.ndarray = None
    confidence: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is None:
            self.mask = np.isfinite(self.values) & (self.values > 0)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise DimensionError(f'mask shape {self.mask.shape} != depth shape {self.values.shape}')
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=np.float64)
            if self.confidence.shape != self.values.shape:
                raise DimensionError(
                    f'confidence shape {self.confidence.shape} != depth shape {self.values.shape}'
                )

    @property
    def shape(self):
        return self.values.shape

    def masked_values(self):
        """Depth with invalid pixels set to 0 (the on-disk convention)."""
        return np.where(self.mask, self.values, 0.0)

    def downsampled(self, factor):
        """Every `factor`-th pixel, matching intrinsics scaled by 1/factor."""
        step = (slice(None, None, factor), slice(None, None, factor))
        confidence = None if self.confidence is None else self.confidence[step]
        return DepthMap(self.values[step].copy(), self.mask[step].copy(), confidence)
