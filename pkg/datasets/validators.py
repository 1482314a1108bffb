"""
Validators for scene data read from disk or built in code.
"""

from depthlab.exceptions import ConfigError, DataError

# Feature maps are taken at 1/2, 1/4 and, for the sparse grid, 1/8 resolution
SIZE_MULTIPLE = 8


def validate_image_size(height, width):
    """Image dimensions must be positive multiples of 8."""
    if height <= 0 or width <= 0 or height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
        raise ConfigError(
            f'Image size {height}x{width} must be a positive multiple of {SIZE_MULTIPLE}.'
        )


def validate_pairs(pairs, view_ids):
    """
    Check a pair list against the set of known view ids.

    Every reference and source id must exist, and no reference may list
    itself as a source.
    """
    known = set(view_ids)
    for pair in pairs:
        if pair.reference not in known:
            raise DataError(f'Pair list references unknown view {pair.reference}.')
        dangling = [v for v in pair.sources if v not in known]
        if dangling:
            raise DataError(
                f'View {pair.reference} lists unknown source views {dangling}.'
            )
        if pair.reference in pair.sources:
            raise DataError(f'View {pair.reference} lists itself as a source.')
        if not pair.sources:
            raise DataError(f'View {pair.reference} has no source views.')
