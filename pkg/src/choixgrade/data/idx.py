"""Reader and writer for the IDX container used by the MNIST family.

Layout (all header words big-endian)::

    [magic:u32] [dim_0:u32] ... [dim_{d-1}:u32] [payload: prod(dims) bytes]

Only the unsigned-byte variants are supported: ``0x00000803`` for image
stacks (n, rows, cols) and ``0x00000801`` for label vectors (n,).  Inputs that
start with the gzip magic ``1f 8b`` are decompressed first.
"""
from __future__ import annotations

import gzip
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import (BadMagic, DataError, HeterogeneousDimensions, LabelOutOfRange,
                      TrailingBytes, Truncated)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(data)
        except (OSError, EOFError) as e:
            raise Truncated(f"damaged gzip stream: {e}") from None
    return data


def _read_header(data: bytes, magic: int, ndim: int) -> tuple[int, ...]:
    size = 4 * (ndim + 1)
    if len(data) < size:
        if len(data) >= 4 and struct.unpack(">I", data[:4])[0] != magic:
            raise BadMagic(f"expected magic 0x{magic:08x}, got 0x{struct.unpack('>I', data[:4])[0]:08x}")
        raise Truncated(f"header needs {size} bytes, got {len(data)}")
    words = struct.unpack(f">{ndim + 1}I", data[:size])
    if words[0] != magic:
        raise BadMagic(f"expected magic 0x{magic:08x}, got 0x{words[0]:08x}")
    return words[1:]


def _payload(data: bytes, offset: int, expected: int) -> bytes:
    got = len(data) - offset
    if got < expected:
        raise Truncated(f"payload has {got} bytes, header promises {expected}")
    if got > expected:
        raise TrailingBytes(f"payload has {got - expected} bytes beyond the {expected} promised")
    return data[offset:]


def parse_idx_images(data: bytes) -> np.ndarray:
    """Decode an image file into a ``(n, rows, cols)`` uint8 array.

    Pixels keep the stored row-major order; no orientation fix is applied
    here (see :func:`emnist_upright`).
    """
    data = _maybe_gunzip(bytes(data))
    n, rows, cols = _read_header(data, IMAGE_MAGIC, 3)
    payload = _payload(data, 16, n * rows * cols)
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols).copy()


def parse_idx_labels(data: bytes, value_range: tuple[int, int] | None = (1, 26)) -> np.ndarray:
    """Decode a label file into a ``(n,)`` uint8 array.

    ``value_range`` is the inclusive range every label must fall in; the
    default is the letters dataset's 1..26.  Pass ``None`` to skip the check.
    """
    data = _maybe_gunzip(bytes(data))
    (n,) = _read_header(data, LABEL_MAGIC, 1)
    labels = np.frombuffer(_payload(data, 8, n), dtype=np.uint8).copy()
    if value_range is not None and n:
        lo, hi = value_range
        bad = np.flatnonzero((labels < lo) | (labels > hi))
        if bad.size:
            i = int(bad[0])
            raise LabelOutOfRange(f"label {labels[i]} at position {i} outside {lo}..{hi}")
    return labels


def serialize_idx_images(images: np.ndarray | Sequence[np.ndarray],
                         rows: int | None = None, cols: int | None = None) -> bytes:
    """Encode images as an uncompressed IDX image file.

    ``images`` is either an ``(n, rows, cols)`` array or a sequence of 2-D
    arrays sharing one shape.  An empty sequence needs ``rows``/``cols``.
    """
    if isinstance(images, np.ndarray):
        if images.ndim != 3:
            raise HeterogeneousDimensions(f"expected a 3-D image stack, got shape {images.shape}")
        stack = images
    else:
        images = list(images)
        if not images:
            if rows is None or cols is None:
                raise HeterogeneousDimensions("empty image list needs explicit rows and cols")
            stack = np.zeros((0, rows, cols), dtype=np.uint8)
        else:
            shapes = {np.shape(im) for im in images}
            if len(shapes) != 1 or len(next(iter(shapes))) != 2:
                raise HeterogeneousDimensions(f"images do not share one 2-D shape: {sorted(shapes)}")
            stack = np.stack([np.asarray(im) for im in images])
    n, r, c = stack.shape
    if (rows is not None and rows != r) or (cols is not None and cols != c):
        raise HeterogeneousDimensions(f"declared {rows}x{cols} but images are {r}x{c}")
    payload = np.ascontiguousarray(stack, dtype=np.uint8).tobytes()
    return struct.pack(">IIII", IMAGE_MAGIC, n, r, c) + payload


def serialize_idx_labels(labels) -> bytes:
    arr = np.ascontiguousarray(labels, dtype=np.uint8).reshape(-1)
    return struct.pack(">II", LABEL_MAGIC, arr.size) + arr.tobytes()


def emnist_upright(images: np.ndarray) -> np.ndarray:
    """Transpose EMNIST's column-major glyphs so letters read upright."""
    return np.ascontiguousarray(images.transpose(0, 2, 1))


def _named(path, parse):
    """Run ``parse`` on the file's bytes; data errors carry the file name."""
    try:
        return parse(Path(path).read_bytes())
    except DataError as e:
        raise type(e)(f"{path}: {e}") from None


def read_images(path: str | Path) -> np.ndarray:
    return _named(path, parse_idx_images)


def read_labels(path: str | Path, value_range: tuple[int, int] | None = (1, 26)) -> np.ndarray:
    return _named(path, lambda data: parse_idx_labels(data, value_range))
