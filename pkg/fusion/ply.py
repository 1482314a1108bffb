"""
Binary little-endian PLY point clouds (float x, y, z and uchar red, green, blue).
"""

import logging
from pathlib import Path

import numpy as np

from depthlab.exceptions import DataError, ParseError

from .fusion import PointCloud

logger = logging.getLogger(__name__)

VERTEX_DTYPE = np.dtype([
    ('x', '<f4'), ('y', '<f4'), ('z', '<f4'),
    ('red', 'u1'), ('green', 'u1'), ('blue', 'u1'),
])

_PROPERTIES = [
    b'property float x',
    b'property float y',
    b'property float z',
    b'property uchar red',
    b'property uchar green',
    b'property uchar blue',
]


def ply_header(count):
    lines = [b'ply', b'format binary_little_endian 1.0', b'element vertex %d' % count]
    return b'\n'.join(lines + _PROPERTIES + [b'end_header']) + b'\n'


def write_ply(path, cloud):
    """Write a PointCloud; coordinates are stored as float32."""
    vertices = np.empty(len(cloud), dtype=VERTEX_DTYPE)
    for axis, name in enumerate('xyz'):
        vertices[name] = cloud.points[:, axis]
    for channel, name in enumerate(('red', 'green', 'blue')):
        vertices[name] = cloud.colors[:, channel]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ply_header(len(cloud)) + vertices.tobytes())
    logger.info('Wrote %d points to %s', len(cloud), path)


def read_ply(path):
    """Read a PLY written by write_ply (the same vertex layout is required)."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise DataError(f'Cannot read {path}: {exc}') from exc

    end = payload.find(b'end_header\n')
    if not payload.startswith(b'ply\n') or end < 0:
        raise ParseError(path, 'not a PLY file', line=1)
    lines = payload[:end].split(b'\n')[:-1]
    if lines[1:2] != [b'format binary_little_endian 1.0']:
        raise ParseError(path, 'only binary_little_endian 1.0 is supported', line=2)
    tokens = lines[2].split() if len(lines) > 2 else []
    if len(tokens) != 3 or tokens[:2] != [b'element', b'vertex'] or not tokens[2].isdigit():
        raise ParseError(path, 'expected "element vertex <count>"', line=3)
    if lines[3:] != _PROPERTIES:
        raise ParseError(path, 'unsupported vertex properties', line=4)

    count = int(tokens[2])
    start = end + len(b'end_header\n')
    expected = count * VERTEX_DTYPE.itemsize
    if len(payload) - start != expected:
        raise ParseError(path, f'expected {expected} bytes of vertex data, found {len(payload) - start}',
                         offset=start)
    if count == 0:
        return PointCloud.empty()
    vertices = np.frombuffer(payload, dtype=VERTEX_DTYPE, count=count, offset=start)
    points = np.stack([vertices[name] for name in 'xyz'], axis=1).astype(np.float64)
    colors = np.stack([vertices[name] for name in ('red', 'green', 'blue')], axis=1)
    return PointCloud(points, colors)
