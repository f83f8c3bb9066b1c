"""Desk-scale training run: default mini residual network, from scratch,
batch 128, 20 epochs, cosine schedule 0.01 -> 1e-5 with a 6-epoch half cycle.

    python3 benchmarks/desk_scale_run.py --emnist DIR --scale 0.25 --out runs/real
    python3 benchmarks/desk_scale_run.py --synthetic --scale 0.25 --out runs/synthetic

``--emnist`` expects the EMNIST-letters train/test IDX files (optionally
gzipped) in DIR.  ``--synthetic`` substitutes procedurally rendered glyphs,
which only checks that the pipeline learns; it says nothing about accuracy on
real handwriting.  Results land in OUT/result.json plus the metrics CSV and the
best checkpoint.
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from choixgrade.checkpoint import write_checkpoint
from choixgrade.data.dataset import build_five_class_dataset, load_source_pool
from choixgrade.data.synthetic import synthetic_letters
from choixgrade.data.idx import emnist_upright
from choixgrade.train import TrainConfig, run_strategy, write_metrics

EMNIST_FILES = [("emnist-letters-train-images-idx3-ubyte", "emnist-letters-train-labels-idx1-ubyte"),
                ("emnist-letters-test-images-idx3-ubyte", "emnist-letters-test-labels-idx1-ubyte")]


def find_emnist(root: Path) -> tuple[list[Path], list[Path]]:
    ims, lbs = [], []
    for im, lb in EMNIST_FILES:
        for suffix in ("", ".gz"):
            if (root / (im + suffix)).is_file() and (root / (lb + suffix)).is_file():
                ims.append(root / (im + suffix))
                lbs.append(root / (lb + suffix))
                break
        else:
            raise FileNotFoundError(f"{im}[.gz] / {lb}[.gz] not found in {root}")
    return ims, lbs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--emnist", type=Path)
    src.add_argument("--synthetic", action="store_true")
    ap.add_argument("--scale", type=float, default=0.25)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.synthetic:
        images, labels = synthetic_letters(5600, seed=1000 + args.seed)
        images = emnist_upright(images)
    else:
        images, labels = load_source_pool(*find_emnist(args.emnist))
    ds = build_five_class_dataset(images, labels, args.seed, args.scale)
    print(f"dataset ready in {time.perf_counter() - t0:.0f}s: "
          f"{len(ds.train)} train / {len(ds.val)} val", flush=True)

    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, scale=args.scale)

    def log(m):
        print(f"epoch {m.epoch:2d} loss {m.train_loss:.4f} val {100 * m.val_accuracy:6.2f}% "
              f"lr {m.lr:.6f} {m.seconds:.0f}s", flush=True)

    res = run_strategy(ds, cfg, on_epoch=log)
    write_checkpoint(res.best, args.out / "best.ckpt")
    write_metrics(res.history, args.out / "metrics.csv")
    result = {"source": "synthetic" if args.synthetic else "emnist", "scale": args.scale,
              "epochs": args.epochs, "seed": args.seed, "best_val_accuracy": res.best_accuracy,
              "best_percent": res.best_percent, "best_epoch": res.best.meta["epoch"],
              "train_examples": len(ds.train), "val_examples": len(ds.val),
              "wall_seconds": time.perf_counter() - t0}
    (args.out / "result.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(result), flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
