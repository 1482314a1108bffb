"""
Binary weight checkpoints.

Layout (all integers little-endian u32):

    b'MVSF' | version | count |
    count x ( name_len | name (UTF-8) | rank | dims... | float64 data )

Data is little-endian float64 in C order, so a save/load round trip is
bit-exact.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from depthlab.exceptions import ParseError

from .tensor import Tensor

logger = logging.getLogger(__name__)

MAGIC = b'MVSF'
VERSION = 1


def save_checkpoint(path, named_arrays):
    """
    Write `named_arrays` (mapping or iterable of (name, array) pairs) to `path`.

    Tensors are accepted in place of arrays.
    """
    items = named_arrays.items() if hasattr(named_arrays, 'items') else named_arrays
    items = [(name, np.asarray(value.data if isinstance(value, Tensor) else value, dtype='<f8'))
             for name, value in items]
    chunks = [MAGIC, struct.pack('<II', VERSION, len(items))]
    for name, array in items:
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f'<I{array.ndim}I', array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array).tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b''.join(chunks))
    logger.info('Saved %d arrays to %s', len(items), path)


class _Reader:
    def __init__(self, path, payload):
        self.path = path
        self.payload = payload
        self.offset = 0

    def take(self, size, what):
        end = self.offset + size
        if end > len(self.payload):
            raise ParseError(self.path, f'truncated while reading {what}', offset=self.offset)
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what, count=1):
        values = struct.unpack(f'<{count}I', self.take(4 * count, what))
        return values if count > 1 else values[0]


def load_checkpoint(path):
    """Read a checkpoint into an ordered dict of name -> float64 array."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise ParseError(path, f'cannot read checkpoint: {exc}') from exc
    reader = _Reader(path, payload)

    if reader.take(4, 'magic') != MAGIC:
        raise ParseError(path, 'bad magic, not a checkpoint file', offset=0)
    version = reader.u32('version')
    if version != VERSION:
        raise ParseError(path, f'unsupported checkpoint version {version}', offset=4)
    count = reader.u32('parameter count')

    arrays = {}
    for _ in range(count):
        name_len = reader.u32('name length')
        start = reader.offset
        try:
            name = reader.take(name_len, 'name').decode('utf-8')
        except UnicodeDecodeError as exc:
            raise ParseError(path, 'parameter name is not UTF-8', offset=start) from exc
        rank = reader.u32(f'rank of {name}')
        shape = tuple(int(n) for n in np.atleast_1d(reader.u32(f'shape of {name}', rank))) if rank else ()
        size = int(np.prod(shape)) if shape else 1
        data = reader.take(8 * size, f'data of {name}')
        arrays[name] = np.frombuffer(data, dtype='<f8').reshape(shape).astype(np.float64)

    if reader.offset != len(payload):
        raise ParseError(path, 'trailing bytes after last parameter', offset=reader.offset)
    return arrays
