"""Layers, residual blocks and the classification head."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ..autograd import ops
from ..autograd.tensor import Tensor
from ..errors import InvalidConfig, ShapeMismatch, TargetOutOfRange

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def he_init(shape, fan_in: int, seed: int, name: str = "") -> Tensor:
    """Normal(0, sqrt(2/fan_in)) draw.

    The stream is keyed on ``(seed, crc32(name))`` so every named parameter
    gets its own reproducible sequence regardless of build order.
    """
    if fan_in < 1:
        raise InvalidConfig(f"fan_in must be >= 1, got {fan_in}")
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))
    rng = np.random.default_rng(ss)
    data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return Tensor(data.astype(np.float32), requires_grad=True)


@dataclass
class ParamEntry:
    name: str
    tensor: Tensor
    frozen: bool = False


class Layer:
    """Base for anything owning parameters or buffers."""

    def named_params(self, prefix: str = ""):
        for attr, t in self._params().items():
            yield prefix + attr, t
        for attr, child in self._children().items():
            yield from child.named_params(f"{prefix}{attr}.")

    def param_slots(self, prefix: str = ""):
        """Yield ``(name, owner, attribute)`` for every parameter."""
        for attr in self._params():
            yield prefix + attr, self, attr
        for key, child in self._children().items():
            yield from child.param_slots(f"{prefix}{key}.")

    def named_buffers(self, prefix: str = ""):
        for attr, b in self._buffers().items():
            yield prefix + attr, b
        for attr, child in self._children().items():
            yield from child.named_buffers(f"{prefix}{attr}.")

    def _params(self) -> dict:
        return {}

    def _buffers(self) -> dict:
        return {}

    def _children(self) -> dict:
        return {}


class Conv2d(Layer):
    """Bias-free convolution; batch norm downstream supplies the offset."""

    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 1, pad: int = 0,
                 seed: int = 0, name: str = ""):
        self.stride, self.pad = stride, pad
        self.weight = he_init((out_ch, in_ch, k, k), in_ch * k * k, seed, name + ".weight")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.stride, self.pad)

    def _params(self):
        return {"weight": self.weight}


class BatchNorm2d(Layer):
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.frozen = False

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        # a fully frozen norm layer keeps its statistics fixed as well
        if self.frozen:
            training = False
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              training, BN_MOMENTUM, BN_EPS)

    def _params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def _buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


def batchnorm_forward(x: Tensor, gamma: Tensor, beta: Tensor, running_stats, mode: str) -> Tensor:
    """Functional form; ``running_stats`` is a ``(mean, var)`` pair of float arrays updated in place."""
    mean, var = running_stats
    return ops.batch_norm(x, gamma, beta, mean, var, mode == "train", BN_MOMENTUM, BN_EPS)


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, seed: int = 0, name: str = ""):
        self.weight = he_init((in_features, out_features), in_features, seed, name + ".weight")
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)

    def _params(self):
        return {"weight": self.weight, "bias": self.bias}


@dataclass(frozen=True)
class ResidualBlockSpec:
    in_channels: int
    out_channels: int
    stride: int = 1
    use_batchnorm: bool = True

    @property
    def uses_projection(self) -> bool:
        return self.in_channels != self.out_channels or self.stride != 1


class ResidualBlock(Layer):
    """relu(F(x) + shortcut(x)) with F = conv-bn-relu-conv-bn.

    The shortcut is the identity when shapes agree, otherwise a strided 1x1
    convolution (a learned linear projection).
    """

    def __init__(self, spec: ResidualBlockSpec, seed: int = 0, name: str = ""):
        self.spec = spec
        ci, co, s = spec.in_channels, spec.out_channels, spec.stride
        self.conv1 = Conv2d(ci, co, 3, s, 1, seed, name + ".conv1")
        self.conv2 = Conv2d(co, co, 3, 1, 1, seed, name + ".conv2")
        self.bn1 = BatchNorm2d(co) if spec.use_batchnorm else None
        self.bn2 = BatchNorm2d(co) if spec.use_batchnorm else None
        self.proj = Conv2d(ci, co, 1, s, 0, seed, name + ".proj") if spec.uses_projection else None

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeMismatch(f"block expects {self.spec.in_channels} channels, got input {x.shape}")
        f = self.conv1(x)
        if self.bn1 is not None:
            f = self.bn1(f, training)
        f = ops.relu(f)
        f = self.conv2(f)
        if self.bn2 is not None:
            f = self.bn2(f, training)
        shortcut = self.proj(x) if self.proj is not None else x
        return ops.relu(ops.add(f, shortcut))

    def _children(self):
        kids = {"conv1": self.conv1}
        if self.bn1 is not None:
            kids["bn1"] = self.bn1
        kids["conv2"] = self.conv2
        if self.bn2 is not None:
            kids["bn2"] = self.bn2
        if self.proj is not None:
            kids["proj"] = self.proj
        return kids


def residual_block_forward(x: Tensor, spec: ResidualBlockSpec, params: dict[str, Tensor],
                           mode: str = "train") -> Tensor:
    """Run one block with explicitly supplied weights.

    ``params`` maps ``conv1``/``conv2``/``proj`` to kernels and, when the spec
    uses batch norm, ``bn1``/``bn2`` to ``(gamma, beta, running_mean, running_var)``.
    """
    block = ResidualBlock(spec)
    block.conv1.weight = params["conv1"]
    block.conv2.weight = params["conv2"]
    if spec.uses_projection:
        block.proj.weight = params["proj"]
    for key in ("bn1", "bn2"):
        bn = getattr(block, key)
        if bn is not None and key in params:
            bn.gamma, bn.beta, bn.running_mean, bn.running_var = params[key]
    return block(x, mode == "train")


# -- head ---------------------------------------------------------------------

def softmax(logits) -> Tensor:
    """Row-wise softmax (max-shifted). Not recorded on the tape."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return Tensor.wrap(e / e.sum(axis=-1, keepdims=True))


def _check_targets(targets: np.ndarray, k: int) -> np.ndarray:
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.size and (t.min() < 0 or t.max() >= k):
        raise TargetOutOfRange(f"targets must lie in 0..{k - 1}")
    return t


def cross_entropy_loss(logits: Tensor, targets) -> Tensor:
    """Batch mean of ``-log softmax(logits)[target]``, built from recorded primitives."""
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    t = _check_targets(targets, k)
    if t.size != n:
        raise ShapeMismatch(f"{n} logit rows but {t.size} targets")
    dt = logits.dtype
    shift = Tensor(logits.data.max(axis=1, keepdims=True), dtype=dt)
    z = ops.sub(logits, shift)
    lse = ops.log(ops.sum(ops.exp(z), axis=1))
    onehot = np.zeros((n, k), dtype=dt)
    onehot[np.arange(n), t] = 1
    picked = ops.sum(ops.mul(z, Tensor(onehot, dtype=dt)), axis=1)
    return ops.mean(ops.sub(lse, picked))


def cross_entropy_grad(logits, targets) -> np.ndarray:
    """Closed-form d(loss)/d(logits) = (softmax - onehot) / N."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    n, k = z.shape
    t = _check_targets(targets, k)
    p = softmax(z).data.copy()
    p[np.arange(n), t] -= 1
    return p / n
