"""Training loop, evaluation, metric files, the strategy comparison and the
misclassification dump."""
from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable

import numpy as np

from .autograd.tensor import Tape, Tensor, backward
from .checkpoint import Checkpoint, write_checkpoint
from .data.dataset import ClassLabel, DatasetSplit
from .data.imaging import write_pgm
from .errors import EmptyDataset, InvalidConfig, ShapeMismatch
from .nn.layers import cross_entropy_loss, softmax
from .nn.model import MiniResNetConfig, Model, build_mini_resnet, forward, predict_logits
from .optim import CosineSchedule, SgdConfig, TrainStrategy, apply_strategy, lr_at, schedule_step, sgd_step


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    strategy: TrainStrategy = TrainStrategy.FROM_SCRATCH
    eta_max: float = 1e-2
    eta_min: float = 1e-5
    half_cycle: int = 6
    per_batch_schedule: bool = False
    momentum: float = 0.9
    weight_decay: float = 0.0
    scale: float = 1.0
    model: MiniResNetConfig = field(default_factory=MiniResNetConfig)
    reset_head: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfig(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.half_cycle < 1:
            raise InvalidConfig(f"half cycle must be >= 1, got {self.half_cycle}")
        # trip the schedule/optimizer validation early
        self.sgd_config(1)

    def sgd_config(self, batches_per_epoch: int) -> SgdConfig:
        t_i = self.half_cycle * (batches_per_epoch if self.per_batch_schedule else 1)
        return SgdConfig(self.momentum, self.weight_decay,
                         CosineSchedule(self.eta_min, self.eta_max, t_i, 0))


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_accuracy: float
    lr: float
    seconds: float


@dataclass
class TrainResult:
    model: Model
    history: list[EpochMetrics]
    best: Checkpoint

    @property
    def best_accuracy(self) -> float:
        return float(self.best.meta["best_val_accuracy"])

    @property
    def best_percent(self) -> str:
        return format_percent(self.best.meta["val_correct"], self.best.meta["val_total"])


def batch_bounds(n: int, batch_size: int) -> list[tuple[int, int]]:
    """Consecutive ``[start, stop)`` ranges; a trailing batch of one joins its predecessor."""
    bounds = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_step(model: Model, x: np.ndarray, y: np.ndarray, sgd: SgdConfig,
               velocity: dict, lr: float) -> float:
    """Forward, backward and one SGD update on a single batch; returns the batch loss."""
    model.zero_grad()
    with Tape() as tape:
        loss = cross_entropy_loss(forward(model, Tensor(x), "train"), y)
    backward(loss, tape)
    sgd_step(model, None, sgd, velocity, lr)
    return float(loss.data)


def _check_inputs(model: Model, dataset: DatasetSplit) -> None:
    if len(dataset.train) == 0 or len(dataset.val) == 0:
        raise EmptyDataset(f"need training and validation examples, got "
                           f"{len(dataset.train)} and {len(dataset.val)}")
    side = dataset.train.images_u8.shape[1:]
    cfg = model.config
    if cfg.in_channels != 1 or (cfg.image_side, cfg.image_side) != side:
        raise ShapeMismatch(f"model expects {cfg.in_channels}x{cfg.image_side}x{cfg.image_side}, "
                            f"dataset images are 1x{side[0]}x{side[1]}")


def train(model: Model, dataset: DatasetSplit, config: TrainConfig,
          on_epoch: Callable[[EpochMetrics], None] | None = None) -> TrainResult:
    """Run ``config.epochs`` epochs, evaluating on the validation split after each.

    The returned checkpoint is the one with the highest validation accuracy
    (earliest epoch on ties); the returned model holds the final weights.
    """
    _check_inputs(model, dataset)
    x_train, y_train = dataset.train.images, dataset.train.labels
    x_val, y_val = dataset.val.images, dataset.val.labels
    bounds = batch_bounds(len(y_train), config.batch_size)
    sgd = config.sgd_config(len(bounds))
    schedule = sgd.schedule
    velocity: dict[str, np.ndarray] = {}
    history: list[EpochMetrics] = []
    best: Checkpoint | None = None
    best_acc = -1.0

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        epoch_lr = lr_at(schedule)
        order = epoch_order(len(y_train), config.seed, epoch)
        loss_sum = 0.0
        for start, stop in bounds:
            idx = order[start:stop]
            loss_sum += train_step(model, x_train[idx], y_train[idx], sgd, velocity,
                                   lr_at(schedule)) * len(idx)
            if config.per_batch_schedule:
                schedule = schedule_step(schedule)
        if not config.per_batch_schedule:
            schedule = schedule_step(schedule)
        ev = evaluate(model, x_val, y_val)
        acc = ev.accuracy
        m = EpochMetrics(epoch, loss_sum / len(y_train), acc, epoch_lr, time.perf_counter() - t0)
        history.append(m)
        if acc > best_acc:
            best_acc = acc
            best = Checkpoint.from_model(model, {
                "best_val_accuracy": acc, "val_correct": ev.correct, "val_total": ev.total,
                "epoch": epoch, "seed": config.seed, "strategy": config.strategy.value})
        if on_epoch is not None:
            on_epoch(m)
    return TrainResult(model, history, best)


def run_strategy(dataset: DatasetSplit, config: TrainConfig, source: Checkpoint | str | Path | None = None,
                 on_epoch: Callable[[EpochMetrics], None] | None = None) -> TrainResult:
    """Build a fresh model, configure it for ``config.strategy`` and train it."""
    model = build_mini_resnet(config.model, config.seed)
    apply_strategy(model, config.strategy, source, config.reset_head, config.seed)
    return train(model, dataset, config, on_epoch)


# -- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class MisclassifiedRecord:
    index: int
    predicted: ClassLabel
    true: ClassLabel
    confidence: float


@dataclass
class EvalResult:
    correct: int
    total: int
    predictions: np.ndarray
    confidences: np.ndarray
    records: list[MisclassifiedRecord]

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def evaluate(model: Model, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> EvalResult:
    """Eval-mode accuracy; argmax ties resolve to the lowest class index."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise EmptyDataset("cannot evaluate on zero examples")
    logits = predict_logits(model, images, batch_size)
    pred = np.argmax(logits, axis=1)
    conf = softmax(logits).data.max(axis=1)
    wrong = np.flatnonzero(pred != labels)
    records = [MisclassifiedRecord(int(i), ClassLabel(int(pred[i])), ClassLabel(int(labels[i])),
                                   float(conf[i])) for i in wrong]
    return EvalResult(len(labels) - len(wrong), len(labels), pred, conf, records)


def format_percent(correct: int, total: int) -> str:
    """Two-decimal percentage, halves rounded up, computed on the exact ratio."""
    value = (Decimal(correct) * 100 / Decimal(total)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"{value}%"


# -- metric files -------------------------------------------------------------

METRICS_HEADER = ("epoch", "train_loss", "val_accuracy", "lr", "seconds")


def metrics_to_csv(history: list[EpochMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in history:
        w.writerow([m.epoch, repr(m.train_loss), repr(m.val_accuracy), repr(m.lr), f"{m.seconds:.3f}"])
    return buf.getvalue()


def write_metrics(history: list[EpochMetrics], path: str | Path) -> None:
    Path(path).write_text(metrics_to_csv(history), encoding="utf-8")


def read_metrics(path: str | Path) -> list[EpochMetrics]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise ValueError(f"{path}: not a metrics file")
    return [EpochMetrics(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows[1:]]


# -- strategy comparison ------------------------------------------------------

COMPARISON_ORDER = (TrainStrategy.TRANSFER_LAST, TrainStrategy.RETRAIN_WHOLE, TrainStrategy.FROM_SCRATCH)


def variant_name(cfg: MiniResNetConfig) -> str:
    return "w" + "-".join(str(w) for w in cfg.widths) + f"x{cfg.blocks_per_stage}"


@dataclass
class ComparisonRow:
    variant: str
    results: dict[TrainStrategy, TrainResult]

    def best(self, strategy: TrainStrategy) -> float:
        return self.results[strategy].best_accuracy


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        head = ["variant"] + [s.value for s in COMPARISON_ORDER]
        body = [[r.variant] + [r.results[s].best_percent for s in COMPARISON_ORDER] for r in self.rows]
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [head] + body]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def run_comparison(dataset: DatasetSplit, configs: list[TrainConfig], out_dir: str | Path | None = None,
                   on_epoch: Callable[[str, TrainStrategy, EpochMetrics], None] | None = None) -> ComparisonTable:
    """Per variant: from-scratch, then transfer-last on its best checkpoint, then
    retrain-whole starting from the transfer-last checkpoint."""
    if not configs:
        raise InvalidConfig("run_comparison needs at least one configuration")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    table = ComparisonTable([])
    for cfg in configs:
        name = variant_name(cfg.model)
        results: dict[TrainStrategy, TrainResult] = {}
        source = None
        for strategy in (TrainStrategy.FROM_SCRATCH, TrainStrategy.TRANSFER_LAST, TrainStrategy.RETRAIN_WHOLE):
            hook = None if on_epoch is None else (lambda m, s=strategy: on_epoch(name, s, m))
            res = run_strategy(dataset, replace(cfg, strategy=strategy), source, hook)
            results[strategy] = res
            source = res.best
            if out is not None:
                write_checkpoint(res.best, out / f"{name}-{strategy.value}.ckpt")
                write_metrics(res.history, out / f"{name}-{strategy.value}.csv")
        row = ComparisonRow(name, results)
        if row.best(TrainStrategy.RETRAIN_WHOLE) < row.best(TrainStrategy.TRANSFER_LAST):
            msg = (f"{name}: retrain-whole ({results[TrainStrategy.RETRAIN_WHOLE].best_percent}) "
                   f"below transfer-last ({results[TrainStrategy.TRANSFER_LAST].best_percent})")
            table.warnings.append(msg)
            warnings.warn(msg, stacklevel=2)
        table.rows.append(row)
    return table


# -- misclassification dump ---------------------------------------------------

INDEX_FILE = "index.txt"


def dump_name(rec: MisclassifiedRecord) -> str:
    return f"pred-{rec.predicted.symbol}_true-{rec.true.symbol}_idx-{rec.index}.pgm"


def dump_misclassified(records: list[MisclassifiedRecord], images_u8: np.ndarray,
                       out_dir: str | Path) -> list[Path]:
    """Write each record's 64x64 image as P5 plus ``index.txt`` (name,index,pred,true,confidence)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths, lines = [], []
    for rec in records:
        if not 0 <= rec.index < len(images_u8):
            raise IndexError(f"record index {rec.index} outside dataset of {len(images_u8)}")
        p = out / dump_name(rec)
        write_pgm(p, images_u8[rec.index])
        paths.append(p)
        lines.append(f"{p.name},{rec.index},{rec.predicted.symbol},{rec.true.symbol},{rec.confidence:.6f}\n")
    (out / INDEX_FILE).write_text("".join(lines), encoding="utf-8")
    return paths
