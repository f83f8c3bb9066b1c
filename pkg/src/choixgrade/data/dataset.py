"""Five-class letter dataset: A, B, C, D and an "unknown" class.

The unknown class is filled round-robin from the 22 letters E..Z so that every
letter contributes the same number of examples, give or take one.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path

import numpy as np

from ..errors import DataError, EmptyInput, InsufficientData
from . import idx
from .imaging import resize_u8, to_unit

TRAIN_PER_CLASS = 4800
VAL_PER_CLASS = 800
N_LETTERS = 26


class ClassLabel(IntEnum):
    A = 0
    B = 1
    C = 2
    D = 3
    UNKNOWN = 4

    @property
    def symbol(self) -> str:
        return "Unknown" if self is ClassLabel.UNKNOWN else self.name

    @classmethod
    def from_letter(cls, letter: int) -> "ClassLabel":
        """Map an EMNIST letter index (1 = 'a' .. 26 = 'z') to its class."""
        return cls(letter - 1) if 1 <= letter <= 4 else cls.UNKNOWN


CLASS_NAMES = [c.symbol for c in ClassLabel]
UNKNOWN_LETTERS = tuple(range(5, N_LETTERS + 1))


def letter_name(letter: int) -> str:
    return chr(ord("A") + letter - 1)


def quota(base: int, scale: float) -> int:
    """``round(scale * base)`` with halves rounded up."""
    return int(np.floor(scale * base + 0.5))


@dataclass
class Split:
    """One partition. ``raw`` holds the upright 28x28 source glyphs."""

    raw: np.ndarray
    labels: np.ndarray
    source_letters: np.ndarray
    source_index: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @cached_property
    def images_u8(self) -> np.ndarray:
        """64x64 uint8 images, the exact grid the float images are drawn from."""
        if self.raw.shape[1:] == (64, 64):
            return self.raw
        out = np.empty((len(self), 64, 64), dtype=np.uint8)
        for start in range(0, len(self), 4096):
            out[start:start + 4096] = resize_u8(self.raw[start:start + 4096])
        return out

    @property
    def images(self) -> np.ndarray:
        """``(n, 1, 64, 64)`` float32 network inputs in [0, 1]."""
        return to_unit(self.images_u8)[:, None]

    def counts(self) -> dict[str, int]:
        binc = np.bincount(self.labels, minlength=len(ClassLabel))
        return {name: int(binc[i]) for i, name in enumerate(CLASS_NAMES)}

    def subset(self, index) -> "Split":
        index = np.asarray(index)
        if index.size == 0:
            index = index.astype(np.intp)
        return Split(self.raw[index], self.labels[index], self.source_letters[index],
                     self.source_index[index])


@dataclass
class DatasetManifest:
    counts: dict[tuple[str, str], int]
    seed: int
    scale: float
    source_checksum: str

    HEADER = "class,split,count,seed,scale,source_sha256"

    def to_text(self) -> str:
        lines = [self.HEADER]
        for split in ("train", "val"):
            for name in CLASS_NAMES:
                lines.append(f"{name},{split},{self.counts[name, split]},{self.seed},"
                             f"{self.scale!r},{self.source_checksum}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DatasetManifest":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != cls.HEADER:
            raise DataError("manifest header missing or unrecognised")
        counts = {}
        seeds, scales, sums = set(), set(), set()
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 6:
                raise DataError(f"bad manifest line: {ln!r}")
            name, split, count, seed, scale, checksum = parts
            counts[name, split] = int(count)
            seeds.add(int(seed))
            scales.add(float(scale))
            sums.add(checksum)
        if len(seeds) != 1 or len(scales) != 1 or len(sums) != 1:
            raise DataError("manifest rows disagree on seed, scale or checksum")
        return cls(counts, seeds.pop(), scales.pop(), sums.pop())


@dataclass
class DatasetSplit:
    train: Split
    val: Split
    seed: int
    manifest: DatasetManifest = field(repr=False)


def source_checksum(images: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(images, dtype=np.uint8).tobytes())
    h.update(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
    return h.hexdigest()


def build_five_class_dataset(images: np.ndarray, labels: np.ndarray, seed: int,
                             scale: float = 1.0) -> DatasetSplit:
    """Draw the train/val partitions from a pool of letter images.

    ``images`` is ``(n, 28, 28)`` uint8 (upright) and ``labels`` holds letter
    indices 1..26.  Each class gets ``round(scale*4800)`` training and
    ``round(scale*800)`` validation examples.  A-D use only their own letter.
    The unknown class walks E..Z in order, one example per letter per turn,
    from a seeded shuffle of each letter's pool; the validation draw resumes
    the walk where training stopped.
    """
    images = np.asarray(images)
    labels = np.asarray(labels).astype(np.int64)
    if len(images) == 0 or len(labels) == 0:
        raise EmptyInput("no source examples")
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    if not 0 < scale <= 1:
        raise DataError(f"scale must lie in (0, 1], got {scale}")
    n_train, n_val = quota(TRAIN_PER_CLASS, scale), quota(VAL_PER_CLASS, scale)

    rng = np.random.default_rng(seed)
    pools = {}
    for letter in range(1, N_LETTERS + 1):
        members = np.flatnonzero(labels == letter)
        pools[letter] = members[rng.permutation(len(members))]

    train_idx, val_idx = [], []
    for letter in range(1, 5):
        pool = pools[letter]
        if len(pool) < n_train + n_val:
            raise InsufficientData(f"letter {letter_name(letter)} has {len(pool)} examples, "
                                   f"needs {n_train + n_val}")
        train_idx.append(pool[:n_train])
        val_idx.append(pool[n_train:n_train + n_val])

    k = len(UNKNOWN_LETTERS)
    turns = np.arange(n_train + n_val) % k
    per_letter_train = np.bincount(turns[:n_train], minlength=k)
    per_letter_val = np.bincount(turns[n_train:], minlength=k)
    for j, letter in enumerate(UNKNOWN_LETTERS):
        pool = pools[letter]
        a, b = per_letter_train[j], per_letter_val[j]
        if len(pool) < a + b:
            raise InsufficientData(f"letter {letter_name(letter)} has {len(pool)} examples, "
                                   f"needs {a + b} for the unknown class")
        train_idx.append(pool[:a])
        val_idx.append(pool[a:a + b])

    def assemble(parts):
        index = np.concatenate(parts)
        index = index[rng.permutation(len(index))]
        letters = labels[index]
        classes = np.where(letters <= 4, letters - 1, int(ClassLabel.UNKNOWN))
        return Split(images[index], classes.astype(np.int64), letters.astype(np.uint8), index)

    train, val = assemble(train_idx), assemble(val_idx)
    counts = {}
    for split_name, split in (("train", train), ("val", val)):
        for name, c in split.counts().items():
            counts[name, split_name] = c
    manifest = DatasetManifest(counts, seed, scale, source_checksum(images, labels))
    return DatasetSplit(train, val, seed, manifest)


# -- on-disk layout -----------------------------------------------------------

FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", "train-letters-idx1-ubyte"),
    "val": ("val-images-idx3-ubyte", "val-labels-idx1-ubyte", "val-letters-idx1-ubyte"),
}
MANIFEST = "manifest.csv"


def load_source_pool(image_paths, label_paths) -> tuple[np.ndarray, np.ndarray]:
    """Read and concatenate EMNIST-letters IDX pairs, fixing glyph orientation."""
    ims, lbs = [], []
    for ip, lp in zip(image_paths, label_paths, strict=True):
        im = idx.read_images(ip)
        lb = idx.read_labels(lp)
        if len(im) != len(lb):
            raise DataError(f"{ip} has {len(im)} images but {lp} has {len(lb)} labels")
        ims.append(idx.emnist_upright(im))
        lbs.append(lb)
    return np.concatenate(ims), np.concatenate(lbs)


def save_dataset(ds: DatasetSplit, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split_name, split in (("train", ds.train), ("val", ds.val)):
        f_img, f_lab, f_let = FILES[split_name]
        (out / f_img).write_bytes(idx.serialize_idx_images(split.raw))
        (out / f_lab).write_bytes(idx.serialize_idx_labels(split.labels))
        (out / f_let).write_bytes(idx.serialize_idx_labels(split.source_letters))
    (out / MANIFEST).write_text(ds.manifest.to_text(), encoding="utf-8")


def load_dataset(in_dir: str | Path) -> DatasetSplit:
    """Read a directory written by :func:`save_dataset`; counts must match the manifest."""
    d = Path(in_dir)
    manifest = DatasetManifest.from_text((d / MANIFEST).read_text(encoding="utf-8"))
    splits = {}
    offset = 0
    for split_name in ("train", "val"):
        f_img, f_lab, f_let = FILES[split_name]
        raw = idx.read_images(d / f_img)
        labels = idx.read_labels(d / f_lab, (0, len(ClassLabel) - 1)).astype(np.int64)
        letters = idx.read_labels(d / f_let)
        if not len(raw) == len(labels) == len(letters):
            raise DataError(f"{split_name} files disagree on example count")
        # provenance indices are not persisted; positions keep the splits disjoint
        split = Split(raw, labels, letters, np.arange(offset, offset + len(raw)))
        offset += len(raw)
        for name, c in split.counts().items():
            if manifest.counts.get((name, split_name)) != c:
                raise DataError(f"{split_name}/{name}: manifest says "
                                f"{manifest.counts.get((name, split_name))}, files hold {c}")
        splits[split_name] = split
    return DatasetSplit(splits["train"], splits["val"], manifest.seed, manifest)

