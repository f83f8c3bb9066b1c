"""Configurable mini residual network with a named parameter registry."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..autograd import ops
from ..autograd.tensor import Tensor, no_record
from ..errors import InvalidConfig, ShapeMismatch
from .layers import (BatchNorm2d, Conv2d, Layer, Linear, ParamEntry, ResidualBlock,
                     ResidualBlockSpec, he_init)

NUM_CLASSES = 5


@dataclass(frozen=True)
class MiniResNetConfig:
    widths: tuple[int, ...] = (16, 32, 64)
    blocks_per_stage: int = 2
    in_channels: int = 1
    num_classes: int = NUM_CLASSES
    image_side: int = 64

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def validate(self) -> None:
        if not self.widths or min(self.widths) < 1:
            raise InvalidConfig(f"stage widths must be >= 1, got {self.widths}")
        if self.blocks_per_stage < 1:
            raise InvalidConfig(f"blocks_per_stage must be >= 1, got {self.blocks_per_stage}")
        if self.in_channels < 1 or self.image_side < 1:
            raise InvalidConfig("input channels and image side must be >= 1")
        if self.num_classes != NUM_CLASSES:
            raise InvalidConfig(f"the grader classifies into {NUM_CLASSES} classes, got {self.num_classes}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MiniResNetConfig":
        d = json.loads(text)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


class _Stem(Layer):
    def __init__(self, in_ch, out_ch, seed):
        self.conv = Conv2d(in_ch, out_ch, 3, 1, 1, seed, "stem.conv")
        self.bn = BatchNorm2d(out_ch)

    def __call__(self, x, training):
        return ops.relu(self.bn(self.conv(x), training))

    def _children(self):
        return {"conv": self.conv, "bn": self.bn}


@dataclass(eq=False)
class Model(Layer):
    """Stem, residual stages, global average pool and a linear classifier."""

    config: MiniResNetConfig
    seed: int = 0
    registry: dict[str, ParamEntry] = field(default_factory=dict, repr=False)
    buffers: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        cfg = self.config
        cfg.validate()
        self.stem = _Stem(cfg.in_channels, cfg.widths[0], self.seed)
        self.stages: list[list[ResidualBlock]] = []
        prev = cfg.widths[0]
        for si, width in enumerate(cfg.widths):
            blocks = []
            for bi in range(cfg.blocks_per_stage):
                stride = 2 if si > 0 and bi == 0 else 1
                spec = ResidualBlockSpec(prev, width, stride)
                blocks.append(ResidualBlock(spec, self.seed, f"stage{si + 1}.block{bi}"))
                prev = width
            self.stages.append(blocks)
        self.fc = Linear(prev, cfg.num_classes, self.seed, "fc")
        self.registry = {name: ParamEntry(name, t) for name, t in self.named_params()}
        self._slots = {name: (owner, attr) for name, owner, attr in self.param_slots()}
        self.buffers = dict(self.named_buffers())

    def _children(self):
        kids = {"stem": self.stem}
        for si, blocks in enumerate(self.stages):
            for bi, block in enumerate(blocks):
                kids[f"stage{si + 1}.block{bi}"] = block
        kids["fc"] = self.fc
        return kids

    @property
    def head_names(self) -> tuple[str, str]:
        return ("fc.weight", "fc.bias")

    def conv_layer_count(self) -> int:
        """Convolutions on the main path (projection shortcuts excluded)."""
        return 1 + 2 * sum(len(b) for b in self.stages)

    def parameter_count(self) -> int:
        return int(sum(e.tensor.size for e in self.registry.values()))

    # -- freezing -------------------------------------------------------------

    def set_frozen(self, name: str, frozen: bool) -> None:
        entry = self.registry[name]
        entry.frozen = frozen
        entry.tensor.requires_grad = not frozen
        owner, _ = self._slots[name]
        if isinstance(owner, BatchNorm2d):
            prefix = name.rsplit(".", 1)[0]
            owner.frozen = self.registry[prefix + ".gamma"].frozen and self.registry[prefix + ".beta"].frozen

    def freeze_all_but(self, keep: tuple[str, ...]) -> None:
        for name in self.registry:
            self.set_frozen(name, name not in keep)

    def unfreeze_all(self) -> None:
        for name in self.registry:
            self.set_frozen(name, False)

    def frozen_names(self) -> list[str]:
        return [n for n, e in self.registry.items() if e.frozen]

    def zero_grad(self) -> None:
        for e in self.registry.values():
            e.tensor.grad = None

    # -- state ----------------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed by name."""
        out = {n: e.tensor.data.copy() for n, e in self.registry.items()}
        out.update({n: b.copy() for n, b in self.buffers.items()})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.registry) | set(self.buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ShapeMismatch(f"state mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for n, e in self.registry.items():
            if state[n].shape != e.tensor.shape:
                raise ShapeMismatch(f"{n}: shape {state[n].shape} vs {e.tensor.shape}")
            e.tensor.data[...] = state[n]
        for n, b in self.buffers.items():
            if state[n].shape != b.shape:
                raise ShapeMismatch(f"{n}: shape {state[n].shape} vs {b.shape}")
            b[...] = state[n]

    def bind(self, tensors: dict[str, Tensor]) -> dict[str, Tensor]:
        """Swap in replacement parameter tensors by name; returns the displaced ones.

        Used for functional evaluation (e.g. gradient checks in float64).
        The registry keeps pointing at the originals.
        """
        old = {}
        for name, t in tensors.items():
            owner, attr = self._slots[name]
            old[name] = getattr(owner, attr)
            setattr(owner, attr, t)
        return old

    def reset_head(self, seed: int) -> None:
        """Redraw the classifier weights and zero its bias."""
        w = he_init(self.fc.weight.shape, self.fc.weight.shape[0], seed, "fc.weight")
        self.fc.weight.data[...] = w.data
        self.fc.bias.data[...] = 0

    # -- forward --------------------------------------------------------------

    def __call__(self, x: Tensor, mode: str = "eval") -> Tensor:
        return forward(self, x, mode)


def build_mini_resnet(config: MiniResNetConfig | None = None, seed: int = 0) -> Model:
    return Model(config or MiniResNetConfig(), seed)


def forward(model: Model, batch, mode: str = "eval") -> Tensor:
    """Logits ``(N, num_classes)`` for a ``(N, in_channels, side, side)`` batch."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    cfg = model.config
    if x.ndim != 4 or x.shape[1:] != (cfg.in_channels, cfg.image_side, cfg.image_side):
        raise ShapeMismatch(f"expected (N, {cfg.in_channels}, {cfg.image_side}, {cfg.image_side}), "
                            f"got {x.shape}")
    training = mode == "train"
    h = model.stem(x, training)
    for blocks in model.stages:
        for block in blocks:
            h = block(h, training)
    return model.fc(ops.global_avg_pool(h))


def predict_logits(model: Model, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits for a float image array, without recording."""
    outs = []
    with no_record():
        for start in range(0, len(images), batch_size):
            outs.append(forward(model, Tensor(images[start:start + batch_size]), "eval").data)
    if not outs:
        return np.zeros((0, model.config.num_classes), dtype=np.float32)
    return np.concatenate(outs)
