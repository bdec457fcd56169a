"""Bit-grid export as a binary portable graymap (P5)."""
from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..serialize import atomic_write
from .nist import BitStream


def heatmap_bytes(stream, width: int, height: int) -> bytes:
    """Row-major grid of the first ``width * height`` bits; 0 is black, 1 is white."""
    bits = (stream if isinstance(stream, BitStream) else BitStream(stream)).bits
    if width < 1 or height < 1:
        raise DomainError("heatmap width and height must be positive")
    if width * height > bits.size:
        raise DomainError(f"a {width}x{height} grid needs {width * height} bits, stream has {bits.size}")
    pixels = (bits[: width * height].astype(np.uint8) * 255).tobytes()
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels


def heatmap_export(stream, width: int, height: int, path) -> bytes:
    data = heatmap_bytes(stream, width, height)
    atomic_write(path, data)
    return data
