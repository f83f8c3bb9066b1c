"""Checkpoint container.

Layout: a UTF-8 text header followed by raw little-endian float32 data::

    CHOIXGRADE-CHECKPOINT 1
    config {"blocks_per_stage": 2, ...}
    meta {"best_val_accuracy": 0.97, "epoch": 11, ...}
    tensors 64
    stem.conv.weight f4 16,1,3,3 0 576
    ...
    end
    <payload>

Each tensor line gives name, dtype, comma-separated shape, byte offset into
the payload and byte length.  Offsets must tile the payload exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigMismatch, CorruptFile, MissingFile, VersionMismatch
from .nn.model import MiniResNetConfig, Model, build_mini_resnet

MAGIC = "CHOIXGRADE-CHECKPOINT"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: MiniResNetConfig
    state: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: Model, meta: dict | None = None) -> "Checkpoint":
        return cls(model.config, model.state(), dict(meta or {}))

    def restore_into(self, model: Model) -> None:
        if model.config != self.config:
            raise ConfigMismatch(f"checkpoint holds {self.config}, model is {model.config}")
        model.load_state(self.state)

    def build_model(self) -> Model:
        model = build_mini_resnet(self.config)
        model.load_state(self.state)
        return model

    def to_bytes(self) -> bytes:
        lines = [f"{MAGIC} {self.version}",
                 f"config {self.config.to_json()}",
                 f"meta {json.dumps(self.meta, sort_keys=True)}",
                 f"tensors {len(self.state)}"]
        chunks, offset = [], 0
        for name, arr in self.state.items():
            if any(c.isspace() for c in name):
                raise ValueError(f"tensor name {name!r} contains whitespace")
            buf = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
            shape = ",".join(str(d) for d in arr.shape)
            lines.append(f"{name} f4 {shape} {offset} {len(buf)}")
            chunks.append(buf)
            offset += len(buf)
        lines.append("end")
        return ("\n".join(lines) + "\n").encode("utf-8") + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        pos = 0

        def line() -> str:
            nonlocal pos
            end = data.find(b"\n", pos)
            if end < 0:
                raise CorruptFile("checkpoint header ends early")
            text = data[pos:end].decode("utf-8", errors="replace")
            pos = end + 1
            return text

        head = line().split()
        if len(head) != 2 or head[0] != MAGIC:
            raise CorruptFile("not a checkpoint file (bad magic line)")
        try:
            version = int(head[1])
        except ValueError:
            raise CorruptFile(f"unreadable format version {head[1]!r}") from None
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
        try:
            key, text = line().split(" ", 1)
            assert key == "config"
            config = MiniResNetConfig.from_json(text)
            key, text = line().split(" ", 1)
            assert key == "meta"
            meta = json.loads(text)
            key, count = line().split()
            assert key == "tensors"
            count = int(count)
        except (ValueError, AssertionError, TypeError) as e:
            raise CorruptFile(f"malformed checkpoint header: {e}") from None

        table = []
        for _ in range(count):
            parts = line().split()
            if len(parts) != 5 or parts[1] != "f4":
                raise CorruptFile(f"bad tensor entry {' '.join(parts)!r}")
            name, _, shape_text, off, nbytes = parts
            try:
                shape = tuple(int(d) for d in shape_text.split(",")) if shape_text else ()
                table.append((name, shape, int(off), int(nbytes)))
            except ValueError:
                raise CorruptFile(f"bad tensor entry {' '.join(parts)!r}") from None
        if line() != "end":
            raise CorruptFile("tensor table not terminated by 'end'")

        payload = memoryview(data)[pos:]
        expected = 0
        state = {}
        for name, shape, off, nbytes in table:
            if off != expected or nbytes != int(np.prod(shape)) * _DTYPE.itemsize:
                raise CorruptFile(f"offset table inconsistent at {name!r}")
            expected += nbytes
            if expected > len(payload):
                raise CorruptFile(f"payload ends inside {name!r} ({len(payload)} of {expected} bytes)")
            state[name] = np.frombuffer(payload[off:off + nbytes], dtype=_DTYPE) \
                .astype(np.float32).reshape(shape)
        if expected != len(payload):
            raise CorruptFile(f"payload holds {len(payload)} bytes, table accounts for {expected}")
        return cls(config, state, meta, version)


def save_checkpoint(model: Model, meta: dict | None, path: str | Path) -> Checkpoint:
    ckpt = Checkpoint.from_model(model, meta)
    write_checkpoint(ckpt, path)
    return ckpt


def write_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(ckpt.to_bytes())
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"checkpoint not found: {path}")
    return Checkpoint.from_bytes(path.read_bytes())


def load_checkpoint(path: str | Path, config: MiniResNetConfig | None = None) -> Model:
    """Rebuild the saved model; ``config`` (if given) must match the stored one."""
    ckpt = read_checkpoint(path)
    if config is not None and config != ckpt.config:
        raise ConfigMismatch(f"{path} holds {ckpt.config}, requested {config}")
    model = ckpt.build_model()
    model.meta = dict(ckpt.meta)
    return model
