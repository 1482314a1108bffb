"""
Readers and writers for the on-disk scene formats.

    cam files   MVSNet text format: extrinsic (4x4, world-to-camera),
                intrinsic (3x3), then `d_min interval [N d_max]` in mm.
    pair lists  count, then one `ref n src...` line per reference; the
                MVSNet two-line form (`ref` / `n src score ...`) is read too.
    PFM         single-channel `Pf` float32, rows bottom-up.
    images      8-bit binary PPM (P6) through Pillow.

Parse failures raise ParseError with the file path and the 1-based line
(text formats) or byte offset (PFM).
"""

import logging
import re
from collections import namedtuple
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from depthlab.exceptions import ConfigError, DataError, ParseError
from geometry.cameras import Intrinsics, Pose
from geometry.validators import validate_rotation

logger = logging.getLogger(__name__)

# Depth planes assumed when a cam file carries no `N d_max` tail (MVSNet DTU setting)
DEFAULT_CAM_PLANES = 192

# Rotations further than this from orthonormal are rejected; closer ones
# (rounded text output) are projected back onto SO(3)
ORTHONORMAL_REPAIR_LIMIT = 1e-3

CamFile = namedtuple('CamFile', ['pose', 'intrinsics', 'depth_range', 'num_planes'])
Pair = namedtuple('Pair', ['reference', 'sources'])


def _format(value):
    return repr(float(value))


# ---------------------------------------------------------------------------
# Camera files
# ---------------------------------------------------------------------------

def _numbered_lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f'Cannot read {path}: {exc}') from exc
    return [(number, line.split()) for number, line in enumerate(text.splitlines(), start=1)
            if line.strip()]


def _floats(path, number, tokens, count=None):
    if count is not None and len(tokens) != count:
        raise ParseError(path, f'expected {count} numbers, found {len(tokens)}', line=number)
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(path, f'not a number: {exc}', line=number) from exc


def _repair_rotation(path, line, rotation):
    try:
        validate_rotation(rotation)
        return rotation
    except ConfigError:
        pass
    try:
        validate_rotation(rotation, tolerance=ORTHONORMAL_REPAIR_LIMIT)
    except ConfigError as exc:
        raise ParseError(path, f'extrinsic rotation is invalid: {exc.message}', line=line) from exc
    u, _, vt = np.linalg.svd(rotation)
    return u @ vt


def read_cam(path, num_planes=None):
    """
    Parse a cam file into CamFile(pose, intrinsics, depth_range, num_planes).

    d_max comes from the `N d_max` tail when present, otherwise from
    d_min + interval * (N - 1) with N = `num_planes` (or
    DEFAULT_CAM_PLANES).
    """
    lines = _numbered_lines(path)
    cursor = iter(lines)
    last_line = lines[-1][0] if lines else 0

    def expect_keyword(keyword):
        try:
            number, tokens = next(cursor)
        except StopIteration:
            raise ParseError(path, f'missing "{keyword}" section', line=last_line + 1)
        if tokens != [keyword]:
            raise ParseError(path, f'expected "{keyword}"', line=number)
        return number

    def rows(count, width):
        out = []
        for _ in range(count):
            try:
                number, tokens = next(cursor)
            except StopIteration:
                raise ParseError(path, 'file ends inside a matrix', line=last_line + 1)
            out.append(_floats(path, number, tokens, width))
        return np.array(out)

    extrinsic_line = expect_keyword('extrinsic')
    extrinsic = rows(4, 4)
    expect_keyword('intrinsic')
    intrinsic = rows(3, 3)
    try:
        number, tokens = next(cursor)
    except StopIteration:
        raise ParseError(path, 'missing depth range line', line=last_line + 1)
    if len(tokens) not in (2, 4):
        raise ParseError(path, 'depth line must hold "d_min interval [N d_max]"', line=number)
    depth = _floats(path, number, tokens)
    leftover = next(cursor, None)
    if leftover is not None:
        raise ParseError(path, 'unexpected content after depth range', line=leftover[0])

    rotation = _repair_rotation(path, extrinsic_line + 1, extrinsic[:3, :3])
    d_min, interval = depth[0], depth[1]
    if len(depth) == 4:
        planes, d_max = int(depth[2]), depth[3]
    else:
        planes = num_planes or DEFAULT_CAM_PLANES
        d_max = d_min + interval * (planes - 1)
    try:
        return CamFile(
            Pose(rotation, extrinsic[:3, 3]),
            Intrinsics.from_matrix(intrinsic),
            (d_min, d_max),
            planes,
        )
    except ConfigError as exc:
        raise ParseError(path, exc.message, line=number) from exc


def write_cam(path, pose, intrinsics, depth_range, num_planes):
    """Write a cam file with the `N d_max` tail; floats keep full precision."""
    d_min, d_max = depth_range
    interval = (d_max - d_min) / (num_planes - 1)
    out = ['extrinsic']
    out += [' '.join(_format(v) for v in row) for row in pose.matrix]
    out += ['', 'intrinsic']
    out += [' '.join(_format(v) for v in row) for row in intrinsics.matrix]
    out += ['', f'{_format(d_min)} {_format(interval)} {int(num_planes)} {_format(d_max)}', '']
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(out))


# ---------------------------------------------------------------------------
# Pair lists
# ---------------------------------------------------------------------------

def _ints(path, number, tokens):
    try:
        return [int(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(path, f'not an integer: {exc}', line=number) from exc


def read_pairs(path):
    """
    Read a pair list in either layout and return a list of Pair tuples.

    One-line layout: `ref n src_1 ... src_n`. Two-line (MVSNet) layout:
    `ref` then `n src_1 score_1 ... src_n score_n`; scores are dropped.
    """
    lines = _numbered_lines(path)
    if not lines:
        raise ParseError(path, 'empty pair list', line=1)
    number, tokens = lines[0]
    if len(tokens) != 1:
        raise ParseError(path, 'first line must hold the number of references', line=number)
    count = _ints(path, number, tokens)[0]
    body = lines[1:]
    two_line = bool(body) and len(body[0][1]) == 1

    pairs = []
    index = 0
    for _ in range(count):
        if index >= len(body):
            raise ParseError(path, f'expected {count} references, found {len(pairs)}',
                             line=lines[-1][0] + 1)
        number, tokens = body[index]
        if two_line:
            reference = _ints(path, number, tokens)[0]
            index += 1
            if index >= len(body):
                raise ParseError(path, f'missing source line for view {reference}', line=number + 1)
            number, tokens = body[index]
            n = _ints(path, number, tokens[:1])[0]
            if len(tokens) != 1 + 2 * n:
                raise ParseError(path, f'expected {n} id/score pairs', line=number)
            sources = _ints(path, number, tokens[1::2])
        else:
            values = _ints(path, number, tokens)
            if len(values) < 2 or len(values) != 2 + values[1]:
                raise ParseError(path, 'expected "ref n src_1 ... src_n"', line=number)
            reference, sources = values[0], values[2:]
        pairs.append(Pair(reference, tuple(sources)))
        index += 1
    if index != len(body):
        raise ParseError(path, 'unexpected content after last reference', line=body[index][0])
    return pairs


def write_pairs(path, pairs):
    """Write pairs in the one-line layout."""
    out = [str(len(pairs))]
    for pair in pairs:
        out.append(' '.join(str(v) for v in (pair.reference, len(pair.sources), *pair.sources)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(out) + '\n')


# ---------------------------------------------------------------------------
# PFM depth maps
# ---------------------------------------------------------------------------

_PFM_HEADER = re.compile(rb'\APf\s+(\d+)\s+(\d+)\s+(\S+)\s')


def read_pfm(path):
    """Read a single-channel PFM into a float64 H x W array (top row first)."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise DataError(f'Cannot read {path}: {exc}') from exc
    if not payload.startswith(b'Pf'):
        raise ParseError(path, 'bad magic, expected "Pf"', offset=0)
    match = _PFM_HEADER.match(payload)
    if match is None:
        raise ParseError(path, 'malformed header', offset=2)
    width, height = int(match.group(1)), int(match.group(2))
    try:
        scale = float(match.group(3))
    except ValueError:
        raise ParseError(path, 'scale is not a number', offset=match.start(3))
    if scale == 0:
        raise ParseError(path, 'scale must be non-zero', offset=match.start(3))
    dtype = '<f4' if scale < 0 else '>f4'

    start = match.end()
    expected = width * height * 4
    if len(payload) - start < expected:
        raise ParseError(path, f'truncated data: need {expected} bytes', offset=len(payload))
    if len(payload) - start > expected:
        raise ParseError(path, 'trailing bytes after image data', offset=start + expected)
    data = np.frombuffer(payload, dtype=dtype, count=width * height, offset=start)
    return np.flipud(data.reshape(height, width)).astype(np.float64)


def write_pfm(path, values):
    """Write an H x W map as little-endian float32 PFM."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ConfigError(f'PFM maps must be 2-D, got shape {values.shape}.')
    height, width = values.shape
    header = f'Pf\n{width} {height}\n-1.0\n'.encode('ascii')
    data = np.ascontiguousarray(np.flipud(values), dtype='<f4').tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + data)


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def read_image(path):
    """Load an RGB image as an H x W x 3 float array in [0, 1]."""
    try:
        with Image.open(path) as image:
            rgb = np.asarray(image.convert('RGB'), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f'Cannot read image {path}: {exc}') from exc
    return rgb / 255.0


def write_image(path, image):
    """Write an H x W x 3 array in [0, 1] as an 8-bit binary PPM."""
    pixels = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels.astype(np.uint8)).save(path, format='PPM')
