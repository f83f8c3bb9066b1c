"""Command-line entry point: ``choixgrade <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 not enough data,
4 runtime or I/O failure.  ``CHOIXGRADE_SEED`` supplies the default seed.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, read_checkpoint, write_checkpoint
from .data.dataset import build_five_class_dataset, load_dataset, load_source_pool, save_dataset
from .errors import (CheckpointError, ChoixgradeError, ConfigMismatch, DataError, EmptyDataset,
                     InsufficientData, InvalidConfig, KeyFormatError, MissingCheckpoint,
                     UnexpectedCheckpoint)
from .grade import grade, read_answer_key
from .nn.model import MiniResNetConfig
from .optim import TrainStrategy
from .train import (TrainConfig, dump_misclassified, evaluate, format_percent, run_comparison,
                    run_strategy, write_metrics)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
SEED_ENV = "CHOIXGRADE_SEED"


class UsageError(ChoixgradeError):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


def _need_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _need_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


def _widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"widths must be comma-separated integers, got {text!r}") from None


def _variant(text: str) -> MiniResNetConfig:
    """``16,32,64x2`` -> widths (16, 32, 64), two blocks per stage."""
    widths, _, blocks = text.partition("x")
    try:
        return MiniResNetConfig(widths=_widths(widths), blocks_per_stage=int(blocks or 2))
    except ValueError:
        raise argparse.ArgumentTypeError(f"variant must look like 16,32,64x2, got {text!r}") from None


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- subcommands --------------------------------------------------------------

def cmd_build_dataset(args) -> int:
    if len(args.images) != len(args.labels):
        raise UsageError("--images and --labels need the same number of files")
    for p in args.images:
        _need_file(p, "image file")
    for p in args.labels:
        _need_file(p, "label file")
    images, labels = load_source_pool(args.images, args.labels)
    ds = build_five_class_dataset(images, labels, _seed(args), args.scale)
    save_dataset(ds, args.out)
    sys.stdout.write(ds.manifest.to_text())
    return EXIT_OK


def _train_config(args, strategy: TrainStrategy, model_cfg: MiniResNetConfig, scale: float) -> TrainConfig:
    return TrainConfig(batch_size=args.batch_size, epochs=args.epochs, seed=_seed(args), strategy=strategy,
                       eta_max=args.lr_max, eta_min=args.lr_min, half_cycle=args.half_cycle,
                       per_batch_schedule=args.per_batch_schedule, momentum=args.momentum,
                       weight_decay=args.weight_decay, scale=scale, model=model_cfg,
                       reset_head=not args.keep_head)


def _print_epoch(prefix: str = ""):
    def hook(m):
        print(f"{prefix}epoch {m.epoch:3d}  loss {m.train_loss:.4f}  val {100 * m.val_accuracy:6.2f}%  "
              f"lr {m.lr:.6f}  {m.seconds:.1f}s", flush=True)
    return hook


def cmd_train(args) -> int:
    strategy = TrainStrategy.parse(args.strategy)
    source = None
    if args.from_checkpoint is not None:
        if not strategy.needs_checkpoint:
            raise UnexpectedCheckpoint("--from-checkpoint cannot be combined with --strategy from-scratch")
        source = read_checkpoint(args.from_checkpoint)
    elif strategy.needs_checkpoint:
        raise MissingCheckpoint(f"--strategy {strategy.value} needs --from-checkpoint")
    if source is not None and args.widths is None and args.blocks is None:
        model_cfg = source.config
    else:
        model_cfg = MiniResNetConfig(widths=args.widths or (16, 32, 64), blocks_per_stage=args.blocks or 2)
    ds = load_dataset(_need_dir(args.data, "dataset directory"))
    cfg = _train_config(args, strategy, model_cfg, ds.manifest.scale)
    result = run_strategy(ds, cfg, source, _print_epoch())
    out = Path(args.out)
    write_checkpoint(result.best, out)
    metrics = Path(args.metrics) if args.metrics else out.with_suffix(".csv")
    write_metrics(result.history, metrics)
    print(f"best val accuracy {result.best_percent} at epoch {result.best.meta['epoch']}; "
          f"checkpoint {out}, metrics {metrics}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(_need_dir(args.data, "dataset directory"))
    res = evaluate(model, ds.val.images, ds.val.labels)
    print(format_percent(res.correct, res.total))
    _err(f"{res.correct}/{res.total} correct, {len(res.records)} misclassified")
    if args.dump is not None:
        dump_misclassified(res.records, ds.val.images_u8, args.dump)
    return EXIT_OK


def cmd_compare(args) -> int:
    ds = load_dataset(_need_dir(args.data, "dataset directory"))
    variants = args.variant or [MiniResNetConfig()]
    configs = [_train_config(args, TrainStrategy.FROM_SCRATCH, v, ds.manifest.scale) for v in variants]
    hook = None
    if args.verbose:
        def hook(name, strategy, m):
            _print_epoch(f"[{name} {strategy.value}] ")(m)
    table = run_comparison(ds, configs, args.out_dir, hook)
    text = table.to_text()
    sys.stdout.write(text)
    if args.out_dir is not None:
        (Path(args.out_dir) / "comparison.txt").write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_grade(args) -> int:
    key = read_answer_key(_need_file(args.key, "answer key"))
    answers = _need_dir(args.answers, "answers directory")
    model = load_checkpoint(args.checkpoint)
    report = grade(model, answers, key, args.min_confidence)
    text = report.to_text()
    if args.report is not None:
        Path(args.report).write_text(text, encoding="utf-8")
        print(report.summary_line())
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory written by build-dataset")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr-max", type=float, default=1e-2)
    p.add_argument("--lr-min", type=float, default=1e-5)
    p.add_argument("--half-cycle", type=int, default=6, help="cosine half cycle in epochs")
    p.add_argument("--per-batch-schedule", action="store_true",
                   help="step the cosine schedule every batch instead of every epoch")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--keep-head", action="store_true",
                   help="transfer-last: keep the loaded classifier instead of redrawing it")
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="choixgrade",
                                     description="Handwritten multiple-choice answer grading.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="assemble the five-class dataset from EMNIST-letters IDX files")
    p.add_argument("--images", nargs="+", required=True, help="EMNIST-letters image IDX file(s)")
    p.add_argument("--labels", nargs="+", required=True, help="matching label IDX file(s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", type=float, default=1.0, help="fraction of the full per-class counts")
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train one strategy and keep the best checkpoint")
    _add_training_flags(p)
    p.add_argument("--strategy", default="from-scratch", choices=[s.value for s in TrainStrategy])
    p.add_argument("--from-checkpoint", default=None)
    p.add_argument("--widths", type=_widths, default=None, help="stage widths, e.g. 16,32,64")
    p.add_argument("--blocks", type=int, default=None, help="residual blocks per stage")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", default=None, help="metrics CSV (default: checkpoint path with .csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="validation accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dump", default=None, help="directory for misclassified images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="transfer-last / retrain-whole / from-scratch table")
    _add_training_flags(p)
    p.add_argument("--variant", type=_variant, action="append",
                   help="model variant as widths x blocks, e.g. 16,32,64x2 (repeatable)")
    p.add_argument("--out-dir", default=None, help="where to keep checkpoints, metrics and the table")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("grade", help="grade a directory of answer images against a key")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--answers", required=True, help="directory of <question id>.pgm files")
    p.add_argument("--key", required=True, help="answer key, one '<question id>,<option>' per line")
    p.add_argument("--report", default=None, help="report path (default: stdout)")
    p.add_argument("--min-confidence", type=float, default=None,
                   help="mark letter predictions below this softmax confidence Unreadable")
    p.set_defaults(func=cmd_grade)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (InsufficientData, EmptyDataset)):
        return EXIT_DATA
    if isinstance(exc, (UsageError, InvalidConfig, KeyFormatError, MissingCheckpoint,
                        UnexpectedCheckpoint, ConfigMismatch, DataError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ChoixgradeError, OSError, MemoryError) as e:
        code = exit_code_for(e)
        kind = "error" if not isinstance(e, CheckpointError) else "checkpoint error"
        _err(f"choixgrade {args.command}: {kind}: {e}")
        return code


if __name__ == "__main__":
    sys.exit(main())
