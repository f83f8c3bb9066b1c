"""Procedural stand-in for EMNIST-letters.

Each letter is a handful of pen strokes on the unit square.  A sample applies
a random affine map and vertex jitter, then rasterises the strokes with a
soft pen onto a 28x28 grid.  Output is stored transposed, the way EMNIST
ships its images, so the regular loader path (including the orientation
fix) is exercised unchanged.

This is test and demo data only; it is much easier than real handwriting.
"""
from __future__ import annotations

import numpy as np

from .idx import serialize_idx_images, serialize_idx_labels

SIDE = 28


def _arc(cx, cy, rx, ry, a0, a1, n=10):
    t = np.radians(np.linspace(a0, a1, n))
    return [(cx + rx * np.cos(u), cy - ry * np.sin(u)) for u in t]


_P_BOWL = [(0.2, 0.0), (0.65, 0.0), (0.8, 0.13), (0.8, 0.37), (0.65, 0.5), (0.2, 0.5)]

# strokes in (x, y) with y pointing down
STROKES: dict[str, list[list[tuple[float, float]]]] = {
    "A": [[(0.1, 1.0), (0.5, 0.0), (0.9, 1.0)], [(0.28, 0.6), (0.72, 0.6)]],
    "B": [[(0.2, 0.0), (0.2, 1.0)], _P_BOWL,
          [(0.65, 0.5), (0.85, 0.62), (0.85, 0.88), (0.65, 1.0), (0.2, 1.0)]],
    "C": [_arc(0.5, 0.5, 0.38, 0.5, 45, 315)],
    "D": [[(0.2, 0.0), (0.2, 1.0)],
          [(0.2, 0.0), (0.55, 0.0), (0.8, 0.2), (0.85, 0.5), (0.8, 0.8), (0.55, 1.0), (0.2, 1.0)]],
    "E": [[(0.8, 0.0), (0.2, 0.0), (0.2, 1.0), (0.8, 1.0)], [(0.2, 0.5), (0.65, 0.5)]],
    "F": [[(0.8, 0.0), (0.2, 0.0), (0.2, 1.0)], [(0.2, 0.5), (0.65, 0.5)]],
    "G": [_arc(0.5, 0.5, 0.38, 0.5, 45, 330), [(0.5, 0.55), (0.85, 0.55), (0.85, 0.85)]],
    "H": [[(0.2, 0.0), (0.2, 1.0)], [(0.8, 0.0), (0.8, 1.0)], [(0.2, 0.5), (0.8, 0.5)]],
    "I": [[(0.5, 0.0), (0.5, 1.0)], [(0.3, 0.0), (0.7, 0.0)], [(0.3, 1.0), (0.7, 1.0)]],
    "J": [[(0.7, 0.0), (0.7, 0.8), (0.55, 1.0), (0.35, 1.0), (0.2, 0.85)]],
    "K": [[(0.2, 0.0), (0.2, 1.0)], [(0.8, 0.0), (0.2, 0.55)], [(0.4, 0.4), (0.8, 1.0)]],
    "L": [[(0.2, 0.0), (0.2, 1.0), (0.8, 1.0)]],
    "M": [[(0.1, 1.0), (0.15, 0.0), (0.5, 0.6), (0.85, 0.0), (0.9, 1.0)]],
    "N": [[(0.2, 1.0), (0.2, 0.0), (0.8, 1.0), (0.8, 0.0)]],
    "O": [_arc(0.5, 0.5, 0.38, 0.5, 0, 360, 16)],
    "P": [[(0.2, 1.0), (0.2, 0.0)], _P_BOWL],
    "Q": [_arc(0.5, 0.5, 0.38, 0.5, 0, 360, 16), [(0.6, 0.7), (0.9, 1.0)]],
    "R": [[(0.2, 1.0), (0.2, 0.0)], _P_BOWL, [(0.5, 0.5), (0.85, 1.0)]],
    "S": [[(0.8, 0.1), (0.6, 0.0), (0.35, 0.0), (0.2, 0.15), (0.25, 0.4), (0.75, 0.6),
           (0.8, 0.85), (0.65, 1.0), (0.35, 1.0), (0.2, 0.9)]],
    "T": [[(0.1, 0.0), (0.9, 0.0)], [(0.5, 0.0), (0.5, 1.0)]],
    "U": [[(0.2, 0.0), (0.2, 0.75), (0.35, 1.0), (0.65, 1.0), (0.8, 0.75), (0.8, 0.0)]],
    "V": [[(0.1, 0.0), (0.5, 1.0), (0.9, 0.0)]],
    "W": [[(0.05, 0.0), (0.28, 1.0), (0.5, 0.4), (0.72, 1.0), (0.95, 0.0)]],
    "X": [[(0.15, 0.0), (0.85, 1.0)], [(0.85, 0.0), (0.15, 1.0)]],
    "Y": [[(0.15, 0.0), (0.5, 0.5), (0.85, 0.0)], [(0.5, 0.5), (0.5, 1.0)]],
    "Z": [[(0.15, 0.0), (0.85, 0.0), (0.15, 1.0), (0.85, 1.0)]],
}


def _segments(letter: str) -> np.ndarray:
    segs = []
    for stroke in STROKES[letter]:
        pts = np.asarray(stroke, dtype=np.float64)
        segs.extend(zip(pts[:-1], pts[1:]))
    return np.asarray(segs)  # (S, 2, 2)


_GRID = np.stack(np.meshgrid(np.arange(SIDE) + 0.5, np.arange(SIDE) + 0.5), -1).reshape(-1, 2)


def render_letter(letter: int, rng: np.random.Generator) -> np.ndarray:
    """One upright 28x28 uint8 glyph for EMNIST letter index ``letter`` (1 = 'a')."""
    segs = _segments(chr(ord("A") + letter - 1))
    pts = segs.reshape(-1, 2) - 0.5
    pts = pts + rng.normal(0, 0.03, pts.shape)
    angle = rng.uniform(-0.25, 0.25)
    size = rng.uniform(14.0, 19.0)
    aspect = rng.uniform(0.8, 1.1)
    shear = rng.uniform(-0.25, 0.25)
    c, s = np.cos(angle), np.sin(angle)
    m = np.array([[c, -s], [s, c]]) @ np.array([[size * aspect, shear * size], [0, size]])
    centre = SIDE / 2 + rng.uniform(-1.5, 1.5, 2)
    p = (pts @ m.T + centre).reshape(-1, 2, 2)
    a, b = p[:, 0], p[:, 1]
    ab = b - a
    t = ((_GRID[:, None] - a) * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-9)
    t = np.clip(t, 0, 1)
    d = np.linalg.norm(_GRID[:, None] - (a + t[..., None] * ab), axis=-1).min(axis=1)
    width = rng.uniform(1.0, 1.7)
    ink = np.clip(width + 0.5 - d, 0, 1) * rng.uniform(0.8, 1.0)
    return np.floor(ink.reshape(SIDE, SIDE) * 255 + 0.5).astype(np.uint8)


def synthetic_letters(per_letter: int, seed: int, letters=range(1, 27)) -> tuple[np.ndarray, np.ndarray]:
    """``(images, labels)`` in EMNIST storage order: images transposed, labels 1..26."""
    rng = np.random.default_rng(seed)
    letters = list(letters)
    labels = np.repeat(np.asarray(letters, dtype=np.uint8), per_letter)
    images = np.empty((len(labels), SIDE, SIDE), dtype=np.uint8)
    for i, letter in enumerate(labels):
        images[i] = render_letter(int(letter), rng).T
    order = rng.permutation(len(labels))
    return images[order], labels[order]


def write_synthetic_idx(image_path, label_path, per_letter: int, seed: int) -> None:
    images, labels = synthetic_letters(per_letter, seed)
    with open(image_path, "wb") as f:
        f.write(serialize_idx_images(images))
    with open(label_path, "wb") as f:
        f.write(serialize_idx_labels(labels))
