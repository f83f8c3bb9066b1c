"""Image resizing and binary portable graymap (P5) I/O."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import PgmFormatError, WrongInputSize

SOURCE_SIDE = 28
TARGET_SIDE = 64


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row ``i`` holds the linear weights sampling the input at ``i*(n_in-1)/(n_out-1)``."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    if n_out == 1 or n_in == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(pos).astype(np.int64), n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    m[rows, lo] = 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def resize_bilinear(images: np.ndarray, out_h: int = TARGET_SIDE, out_w: int = TARGET_SIDE) -> np.ndarray:
    """Corner-aligned bilinear resize of one ``(h, w)`` or many ``(n, h, w)`` images.

    Returns float64 intensities on the input's scale.  The four output
    corners sample the four input corners exactly.
    """
    arr = np.asarray(images, dtype=np.float64)
    rh = _interp_matrix(arr.shape[-2], out_h)
    rw = _interp_matrix(arr.shape[-1], out_w)
    return rh @ arr @ rw.T


def resize_u8(images: np.ndarray, out_h: int = TARGET_SIDE, out_w: int = TARGET_SIDE) -> np.ndarray:
    """Bilinear resize rounded half-up back onto the 0..255 grid."""
    out = resize_bilinear(images, out_h, out_w)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def to_unit(images_u8: np.ndarray) -> np.ndarray:
    return np.asarray(images_u8, dtype=np.float32) / np.float32(255.0)


def resize_to_64(img: np.ndarray) -> np.ndarray:
    """Preprocess one 28x28 source glyph into a 64x64 float32 image in [0, 1]."""
    img = np.asarray(img)
    if img.shape != (SOURCE_SIDE, SOURCE_SIDE):
        raise WrongInputSize(f"expected {SOURCE_SIDE}x{SOURCE_SIDE} input, got {img.shape}")
    return to_unit(resize_u8(img))


def preprocess_any(img: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Grading-side preprocessing: any-size graymap to a 64x64 float32 image."""
    arr = np.asarray(img, dtype=np.float64)
    if maxval != 255:
        arr = arr * (255.0 / maxval)
    if arr.shape == (TARGET_SIDE, TARGET_SIDE):
        return to_unit(np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8))
    return to_unit(resize_u8(arr))


# -- P5 graymaps --------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def parse_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a binary graymap. Returns ``(pixels, maxval)``.

    Pixels are uint8 when ``maxval < 256`` and big-endian 16-bit otherwise.
    """
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise PgmFormatError("incomplete graymap header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise PgmFormatError(f"not a binary graymap (magic {fields[0][:8]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise PgmFormatError(f"bad graymap header field: {exc}") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise PgmFormatError(f"bad graymap geometry {width}x{height} maxval {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmFormatError("missing separator after graymap header")
    pos += 1
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise PgmFormatError(f"graymap payload has {len(data) - pos} bytes, needs {need}")
    pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return pixels.reshape(height, width).copy(), maxval


def serialize_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise PgmFormatError(f"graymap must be 2-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise PgmFormatError(f"graymap pixels must be uint8, got {img.dtype}")
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(serialize_pgm(img))


def unit_to_u8(img: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_unit` for images that came from the 0..255 grid."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)
