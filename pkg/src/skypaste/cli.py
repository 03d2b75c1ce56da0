"""Command-line entry point.

Subcommands: compose, classic, edges, dataset-summary, evaluate, train-toy.
Exit codes: 0 success, 1 usage error, 2 data error (one diagnostic line on
stderr). Every randomized subcommand prints its seed in the run header so
any output can be regenerated.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .classicaug import ClassicOps, augment_classical
from .compose import ComposeConfig, ForegroundAsset, batch_compose
from .core import derive_stream
from .dataset import (
    IMAGE_SUFFIXES,
    NewItem,
    assemble,
    list_split_items,
    load_data_config,
    load_image,
    save_image,
    summarize_split,
    write_yolo_labels,
)
from .errors import SkypasteError
from .evaluation import evaluate, render_matches_csv, render_report, render_report_csv
from .imgproc import canny, ensure_rgb
from .toytrain import TrainConfig, make_toy_data, render_history_csv, train_loop


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _range_pair(text: str) -> tuple[float, float]:
    """Parse a LO:HI flag value."""
    try:
        lo_text, hi_text = text.split(":")
        lo, hi = float(lo_text), float(hi_text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}")
    if lo > hi:
        raise argparse.ArgumentTypeError(f"need LO <= HI, got {text!r}")
    return lo, hi


def _odd_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1 or value % 2 == 0:
        raise argparse.ArgumentTypeError(f"expected an odd kernel size >= 1, got {value}")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="skypaste", description=__doc__)
    parser.add_argument("--version", action="version", version=f"skypaste {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compose", help="paste cutouts onto backgrounds with labels")
    p.add_argument("--fg", type=Path, required=True, help="directory of RGBA cutouts")
    p.add_argument("--bg", type=Path, required=True, help="directory of backgrounds")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, required=True, help="number of composites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-max", type=float, default=10.0)
    p.add_argument("--scale", type=_range_pair, default=(0.15, 0.45), metavar="MIN:MAX",
                   help="pasted width as a fraction of background width")
    p.add_argument("--feather", type=_odd_int, default=3, metavar="K")
    p.add_argument("--class-id", type=int, default=0, help="class of every cutout")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("classic", help="flip/blur/exposure-augment a dataset split")
    p.add_argument("--in", dest="config", type=Path, required=True, metavar="DATASET",
                   help="data.yaml of the source dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", default="train", choices=("train", "val", "test"))
    p.add_argument("--flip", action="store_true", help="mirror horizontally")
    p.add_argument("--blur", type=_odd_int, default=None, metavar="K")
    p.add_argument("--exposure", type=_range_pair, default=None, metavar="LO:HI")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("edges", help="binary edge maps for every image in a directory")
    p.add_argument("--in", dest="src", type=Path, required=True, metavar="DIR")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--low", type=float, required=True)
    p.add_argument("--high", type=float, required=True)

    p = sub.add_parser("dataset-summary", help="image counts per split and class")
    p.add_argument("--config", type=Path, required=True, metavar="FILE")

    p = sub.add_parser("evaluate", help="score predictions against a dataset split")
    p.add_argument("--config", type=Path, required=True, metavar="FILE")
    p.add_argument("--preds", type=Path, required=True, metavar="DIR")
    p.add_argument("--nms-tau", type=float, default=0.5)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report-dir", type=Path, default=None,
                   help="also write report.csv, matches.csv, and pr_curves.png here")

    p = sub.add_parser("train-toy", help="train the toy detector head on synthetic data")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.001667, metavar="ETA")
    p.add_argument("--optimizer", choices=("gd", "adamw"), default="adamw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--train-size", type=int, default=200)
    p.add_argument("--val-size", type=int, default=64)
    p.add_argument("--feat-dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--out", type=Path, default=None,
                   help="also write history.csv and loss_curve.png here")
    return parser


def _scan_images(directory: Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise SkypasteError(f"not a directory: {directory}")
    paths = sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.stem,
    )
    if not paths:
        raise SkypasteError(f"no images found in {directory}")
    return paths


def _cmd_compose(args) -> int:
    fgs = [
        ForegroundAsset(load_image(p), class_id=args.class_id, source_id=p.stem)
        for p in _scan_images(args.fg)
    ]
    bgs = [(p.stem, ensure_rgb(load_image(p))) for p in _scan_images(args.bg)]
    lo, hi = args.scale
    config = ComposeConfig(
        theta_max=args.theta_max, scale_min=lo, scale_max=hi, feather_k=args.feather
    )
    samples = batch_compose(
        fgs, bgs, args.n, root_seed=args.seed, config=config, threads=args.threads
    )
    images_dir = args.out / "images"
    labels_dir = args.out / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)
    print(f"# seed: {args.seed}")
    for i, sample in enumerate(samples):
        stem = f"{sample.provenance[0]}_ic{i:04d}"
        save_image(sample.image, images_dir / f"{stem}.png")
        (labels_dir / f"{stem}.txt").write_text(write_yolo_labels([sample.annotation]))
    print(f"wrote {len(samples)} composites under {args.out}")
    return 0


def _cmd_classic(args) -> int:
    base = load_data_config(args.config)
    if args.flip or args.blur is not None or args.exposure is not None:
        ops = ClassicOps(
            flip=args.flip,
            blur=(args.blur, None) if args.blur is not None else None,
            exposure=args.exposure,
        )
    else:
        ops = ClassicOps()
    items = list_split_items(base.split_dir(args.split), base.num_classes)
    if not items:
        raise SkypasteError(f"split {args.split!r} has no images")

    def build(i: int) -> NewItem:
        item = items[i]
        rng = derive_stream(args.seed, i)
        image, anns = augment_classical(
            load_image(item.image_path), item.annotations, ops, rng
        )
        return NewItem(
            split=args.split,
            stem=f"{item.stem}_cl{i:04d}",
            image=image,
            annotations=tuple(anns),
        )

    if args.threads <= 1:
        new_items = [build(i) for i in range(len(items))]
    else:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            new_items = list(pool.map(build, range(len(items))))

    assemble(base, new_items, args.out)
    print(f"# seed: {args.seed}")
    print(
        f"augmented {len(new_items)} {args.split} images; "
        f"assembled dataset under {args.out}"
    )
    return 0


def _cmd_edges(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    count = 0
    for path in _scan_images(args.src):
        edge_map = canny(load_image(path), args.low, args.high)
        save_image(edge_map, args.out / f"{path.stem}.png")
        count += 1
    print(f"wrote {count} edge maps under {args.out}")
    return 0


def _cmd_dataset_summary(args) -> int:
    config = load_data_config(args.config)
    summary = summarize_split(config)
    name_width = max(12, max(len(n) for n in config.class_names) + 2)
    print(f"{'class':<{name_width}} {'train':>7} {'val':>7} {'test':>7}")
    for class_id, name in enumerate(config.class_names):
        row = [summary.class_counts[s][class_id] for s in ("train", "val", "test")]
        print(f"{name:<{name_width}} {row[0]:>7d} {row[1]:>7d} {row[2]:>7d}")
    totals = [summary.totals[s] for s in ("train", "val", "test")]
    print(f"{'images':<{name_width}} {totals[0]:>7d} {totals[1]:>7d} {totals[2]:>7d}")
    return 0


def _cmd_evaluate(args) -> int:
    config = load_data_config(args.config)
    report = evaluate(
        args.preds,
        config,
        split=args.split,
        tau_nms=args.nms_tau,
        iou_thresh=args.iou,
        threads=args.threads,
    )
    print(render_report(report))
    print(render_report_csv(report), end="")
    if args.report_dir is not None:
        args.report_dir.mkdir(parents=True, exist_ok=True)
        (args.report_dir / "report.csv").write_text(render_report_csv(report))
        (args.report_dir / "matches.csv").write_text(render_matches_csv(report.ledger))
        from .plots import save_pr_curves

        save_pr_curves(report, args.report_dir / "pr_curves.png")
        print(f"report written under {args.report_dir}", file=sys.stderr)
    return 0


def _cmd_train_toy(args) -> int:
    config = TrainConfig(
        epochs=args.epochs,
        patience=args.patience,
        lr=args.lr,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
    )
    train = make_toy_data(
        args.train_size, args.feat_dim, args.classes, derive_stream(args.seed, 0)
    )
    val = make_toy_data(
        args.val_size, args.feat_dim, args.classes, derive_stream(args.seed, 1)
    )
    model, history = train_loop(train, val, config, seed=args.seed)
    print(f"# seed: {args.seed}")
    print(render_history_csv(history), end="")
    best = history.epochs[history.best_epoch - 1]
    print(
        f"best epoch {history.best_epoch}: val_loss {best.val_loss:.4f}"
        f" ({'stopped early' if history.stopped_early else 'ran to completion'}"
        f" after {len(history.epochs)} epochs)"
    )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "history.csv").write_text(render_history_csv(history))
        from .plots import save_loss_curve

        save_loss_curve(history, args.out / "loss_curve.png")
        print(f"history written under {args.out}", file=sys.stderr)
    return 0


_COMMANDS = {
    "compose": _cmd_compose,
    "classic": _cmd_classic,
    "edges": _cmd_edges,
    "dataset-summary": _cmd_dataset_summary,
    "evaluate": _cmd_evaluate,
    "train-toy": _cmd_train_toy,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except SkypasteError as exc:
        print(f"skypaste {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"skypaste {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
