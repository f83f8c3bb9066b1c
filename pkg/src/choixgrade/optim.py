"""SGD with momentum, the cyclic cosine learning-rate schedule, and the
three training strategies expressed as freeze plans."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig, MissingCheckpoint, MissingGradient, UnexpectedCheckpoint


@dataclass(frozen=True)
class CosineSchedule:
    """Half-cosine decay from ``eta_max`` to ``eta_min`` over ``T_i`` steps, then restart.

    ``t_cur`` counts scheduler steps since the last restart; the step unit
    (epoch or batch) is chosen by the caller.
    """

    eta_min: float = 1e-5
    eta_max: float = 1e-2
    T_i: int = 6
    t_cur: int = 0

    def __post_init__(self):
        if not 0 < self.eta_min <= self.eta_max:
            raise InvalidConfig(f"need 0 < eta_min <= eta_max, got {self.eta_min}, {self.eta_max}")
        if self.T_i < 1:
            raise InvalidConfig(f"T_i must be >= 1, got {self.T_i}")
        if not 0 <= self.t_cur <= self.T_i:
            raise InvalidConfig(f"t_cur must lie in [0, {self.T_i}], got {self.t_cur}")


def lr_at(schedule: CosineSchedule) -> float:
    """eta_min + (eta_max - eta_min) * (1 + cos(pi * t_cur / T_i)) / 2.

    Uses (1 + cos x) / 2 = cos^2(x / 2), which avoids the cancellation near
    the end of a cycle, and a convex combination so both endpoints are exact.
    """
    w = math.cos(math.pi * schedule.t_cur / (2 * schedule.T_i)) ** 2
    return min(max(schedule.eta_max * w + schedule.eta_min * (1 - w), schedule.eta_min), schedule.eta_max)


def schedule_step(schedule: CosineSchedule) -> CosineSchedule:
    """Advance one step; reaching ``T_i`` restarts at ``eta_max``."""
    t = schedule.t_cur + 1
    return replace(schedule, t_cur=0 if t >= schedule.T_i else t)


@dataclass(frozen=True)
class SgdConfig:
    momentum: float = 0.9
    weight_decay: float = 0.0
    schedule: CosineSchedule = field(default_factory=CosineSchedule)

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise InvalidConfig(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidConfig(f"weight decay must be >= 0, got {self.weight_decay}")


def sgd_step(model, gradients: dict[str, np.ndarray] | None, config: SgdConfig,
             velocity: dict[str, np.ndarray], lr: float | None = None) -> float:
    """One momentum step over every unfrozen parameter, in place.

    ``model`` is anything with a ``registry`` of parameter entries (or the
    registry itself).  ``gradients`` defaults to each tensor's ``.grad``.
    ``velocity`` holds the per-parameter momentum buffers and is updated in
    place.  Returns the learning rate used.
    """
    registry = getattr(model, "registry", model)
    eta = lr_at(config.schedule) if lr is None else lr
    updates = []
    for name, entry in registry.items():
        if entry.frozen:
            continue
        g = gradients.get(name) if gradients is not None else entry.tensor.grad
        if g is None:
            raise MissingGradient(f"no gradient for unfrozen parameter {name!r}")
        updates.append((name, entry.tensor.data, g))
    # checked up front so a missing gradient leaves every parameter untouched
    for name, p, g in updates:
        dt = p.dtype.type
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p)
        v *= dt(config.momentum)
        v += g
        if config.weight_decay:
            v += dt(config.weight_decay) * p
        p -= dt(eta) * v
    return eta


class TrainStrategy(enum.Enum):
    TRANSFER_LAST = "transfer-last"
    RETRAIN_WHOLE = "retrain-whole"
    FROM_SCRATCH = "from-scratch"

    @property
    def needs_checkpoint(self) -> bool:
        return self is not TrainStrategy.FROM_SCRATCH

    @classmethod
    def parse(cls, name: str) -> "TrainStrategy":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise InvalidConfig(f"unknown strategy {name!r} (choose from {choices})") from None


def apply_strategy(model, strategy: TrainStrategy, source_checkpoint=None,
                   reset_head: bool = True, seed: int = 0):
    """Configure ``model`` in place for ``strategy`` and return it.

    ``source_checkpoint`` is a path or an already read :class:`Checkpoint`.
    For transfer-last the classifier is redrawn (``reset_head``) so that only
    the head learns on top of the loaded features.
    """
    from .checkpoint import Checkpoint, read_checkpoint

    if strategy.needs_checkpoint and source_checkpoint is None:
        raise MissingCheckpoint(f"strategy {strategy.value} needs a source checkpoint")
    if not strategy.needs_checkpoint and source_checkpoint is not None:
        raise UnexpectedCheckpoint("from-scratch training takes no source checkpoint")
    if source_checkpoint is not None:
        ckpt = source_checkpoint if isinstance(source_checkpoint, Checkpoint) \
            else read_checkpoint(source_checkpoint)
        ckpt.restore_into(model)
    if strategy is TrainStrategy.TRANSFER_LAST:
        model.freeze_all_but(model.head_names)
        if reset_head:
            model.reset_head(seed)
    else:
        model.unfreeze_all()
    return model
