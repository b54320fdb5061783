"""The MXTD named-tensor container.

Layout, all little-endian and without padding: magic ``MXTD``, u16 version,
u32 tensor count, then per tensor a u16 name length, the UTF-8 name, a u8
dtype code, a u8 rank, one u64 per dimension and the row-major payload.
"""
import logging
import math
import struct

import numpy as np

from core.exceptions import ContainerFormatError
from mxaffine import settings

logger = logging.getLogger(__name__)

MAGIC = b'MXTD'
DTYPES = {
    1: np.dtype('<f4'),
    2: np.dtype('<f8'),
    3: np.dtype('<u4'),
}
CODES = {dtype: code for code, dtype in DTYPES.items()}
MAX_NAME_BYTES = 0xFFFF
MAX_NDIM = 0xFF


def _code(name, array):
    code = CODES.get(array.dtype.newbyteorder('<'))
    if code is None:
        raise ContainerFormatError(
            f'tensor {name} has dtype {array.dtype}; the container stores '
            f'float32, float64 and uint32 only'
        )
    return code


def encode_container(tensors):
    """Bytes of a container holding `tensors` (name -> array) in order."""
    chunks = [MAGIC, struct.pack('<HI', settings.CONTAINER_VERSION,
                                 len(tensors))]
    for name, array in tensors.items():
        array = np.asarray(array)
        encoded = name.encode('utf-8')
        if len(encoded) > MAX_NAME_BYTES or array.ndim > MAX_NDIM:
            raise ContainerFormatError(f'tensor {name} cannot be stored')
        code = _code(name, array)
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<BB', code, array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}Q', *array.shape))
        chunks.append(
            np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes()
        )
    return b''.join(chunks)


class _Reader:

    def __init__(self, data):
        self.data = memoryview(data)
        self.offset = 0

    @property
    def remaining(self):
        return len(self.data) - self.offset

    def take(self, size):
        if self.offset + size > len(self.data):
            raise ContainerFormatError(
                f'container truncated at byte {self.offset}'
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor(reader, tensors):
    (length,) = reader.unpack('<H')
    try:
        name = bytes(reader.take(length)).decode('utf-8')
    except UnicodeDecodeError:
        raise ContainerFormatError('tensor name is not valid UTF-8')
    if name in tensors:
        raise ContainerFormatError(f'duplicate tensor name {name}')
    code, ndim = reader.unpack('<BB')
    if code not in DTYPES:
        raise ContainerFormatError(f'unknown dtype code {code} for {name}')
    shape = reader.unpack(f'<{ndim}Q')
    dtype = DTYPES[code]
    size = math.prod(shape) * dtype.itemsize
    if size > reader.remaining:
        raise ContainerFormatError(
            f'tensor {name} of shape {shape} needs {size} bytes, '
            f'{reader.remaining} left'
        )
    payload = reader.take(size)
    tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def decode_container(data):
    reader = _Reader(data)
    magic = bytes(reader.take(len(MAGIC)))
    if magic != MAGIC:
        raise ContainerFormatError(
            f'not an MXTD container (magic={magic!r}, expected {MAGIC!r})'
        )
    version, count = reader.unpack('<HI')
    if version != settings.CONTAINER_VERSION:
        raise ContainerFormatError(f'unsupported container version '
                                   f'{version}')
    tensors = {}
    for _ in range(count):
        _read_tensor(reader, tensors)
    if reader.offset != len(reader.data):
        raise ContainerFormatError(
            f'{len(reader.data) - reader.offset} trailing bytes after the '
            f'last tensor'
        )
    return tensors


def write_container(path, tensors):
    data = encode_container(tensors)
    with open(path, 'wb') as handle:
        handle.write(data)
    logger.debug('wrote %d tensors (%d bytes) to %s',
                 len(tensors), len(data), path)


def read_container(path):
    """name -> array, in file order; arrays keep their stored dtype."""
    try:
        with open(path, 'rb') as handle:
            data = handle.read()
    except OSError as error:
        raise ContainerFormatError(f'cannot read container {path}: {error}')
    return decode_container(data)
