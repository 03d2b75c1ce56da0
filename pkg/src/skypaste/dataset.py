"""Dataset plumbing: YOLO-style label files, a flat data.yaml config, split
inventories, and assembling augmented datasets on disk.

Layout convention for a split directory::

    <split>/images/*.png|jpg|jpeg
    <split>/labels/*.txt        # same stem as the image, optional

Label lines are ``class_id cx cy w h`` with normalized center/size floats;
we serialize with six decimals, which round-trips every coordinate that is a
multiple of 1e-6 and everything our pipelines emit.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .core import Annotation, ImageBuffer, NormBBox
from .errors import (
    ClassOutOfRangeError,
    CoordOutOfRangeError,
    CountMismatchError,
    DanglingLabelError,
    MalformedLineError,
    MissingKeyError,
    NameCollisionError,
    UnreadableFileError,
)

SPLITS = ("train", "val", "test")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class DatasetConfig:
    """Resolved dataset description: one directory per split plus the class list."""

    train_dir: Path
    val_dir: Path
    test_dir: Path
    class_names: tuple[str, ...]

    def __post_init__(self):
        if not self.class_names:
            raise ValueError("class_names must be non-empty")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def split_dir(self, split: str) -> Path:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return {"train": self.train_dir, "val": self.val_dir, "test": self.test_dir}[split]


@dataclass(frozen=True)
class LabeledItem:
    """One image path with its parsed annotations (possibly none)."""

    image_path: Path
    annotations: tuple[Annotation, ...]

    @property
    def stem(self) -> str:
        return self.image_path.stem


@dataclass(frozen=True)
class SplitSummary:
    """Image counts per split, total and broken down by class.

    An image containing several boxes of one class counts once for that
    class; an image with boxes of several classes counts once per class.
    """

    class_names: tuple[str, ...]
    totals: dict[str, int] = field(default_factory=dict)
    class_counts: dict[str, list[int]] = field(default_factory=dict)


def parse_yolo_labels(text: str, num_classes: int) -> list[Annotation]:
    """Parse a label file body; blank lines are skipped, nothing else is."""
    out: list[Annotation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise MalformedLineError(
                f"line {lineno}: expected 5 fields, got {len(fields)}"
            )
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError as exc:
            raise MalformedLineError(f"line {lineno}: {exc}") from exc
        if not 0 <= class_id < num_classes:
            raise ClassOutOfRangeError(
                f"line {lineno}: class {class_id} outside [0, {num_classes})"
            )
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0 and 0.0 < w <= 1.0 and 0.0 < h <= 1.0):
            raise CoordOutOfRangeError(f"line {lineno}: coordinates out of range")
        out.append(Annotation(class_id, NormBBox(cx, cy, w, h)))
    return out


def write_yolo_labels(annotations: Iterable[Annotation]) -> str:
    """Serialize annotations, one per line, six decimals, trailing newline."""
    lines = [
        f"{a.class_id} {a.bbox.cx:.6f} {a.bbox.cy:.6f} {a.bbox.w:.6f} {a.bbox.h:.6f}"
        for a in annotations
    ]
    return "".join(line + "\n" for line in lines)


def parse_data_config(text: str, base_dir: Optional[Path] = None) -> DatasetConfig:
    """Parse the flat data.yaml subset: train/val/test paths, nc, names.

    Comments run from ``#`` to end of line. ``names`` is a bracketed,
    comma-separated list. Relative paths resolve against ``base_dir`` when
    given, else stay relative.
    """
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise MalformedLineError(f"expected 'key: value', got {raw.strip()!r}")
        key, _, value = line.partition(":")
        values[key.strip()] = value.strip()

    for key in ("train", "val", "test", "nc", "names"):
        if key not in values:
            raise MissingKeyError(f"missing required key {key!r}")

    try:
        nc = int(values["nc"])
    except ValueError as exc:
        raise MalformedLineError(f"nc must be an integer: {values['nc']!r}") from exc

    names_field = values["names"]
    if not (names_field.startswith("[") and names_field.endswith("]")):
        raise MalformedLineError(f"names must be a bracketed list: {names_field!r}")
    names = tuple(
        part.strip().strip("'\"")
        for part in names_field[1:-1].split(",")
        if part.strip()
    )
    if len(names) != nc:
        raise CountMismatchError(f"nc={nc} but names lists {len(names)} entries")

    def resolve(p: str) -> Path:
        path = Path(p)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return path

    return DatasetConfig(
        train_dir=resolve(values["train"]),
        val_dir=resolve(values["val"]),
        test_dir=resolve(values["test"]),
        class_names=names,
    )


def load_data_config(path: Path) -> DatasetConfig:
    """Read a data.yaml file, resolving relative split paths against it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc
    return parse_data_config(text, base_dir=path.parent)


def write_data_config(config: DatasetConfig, path: Path) -> None:
    names = ", ".join(config.class_names)
    path.write_text(
        f"train: {config.train_dir}\n"
        f"val: {config.val_dir}\n"
        f"test: {config.test_dir}\n"
        f"nc: {config.num_classes}\n"
        f"names: [{names}]\n"
    )


def _split_images(split_dir: Path) -> list[Path]:
    images_dir = Path(split_dir) / "images"
    if not images_dir.is_dir():
        return []
    return sorted(
        (p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.stem,
    )


def list_split_items(split_dir: Path, num_classes: int) -> list[LabeledItem]:
    """Inventory one split, pairing images with labels by stem.

    A label file without a matching image is an error; an image without a
    label file simply has no annotations. Results are sorted by stem.
    """
    split_dir = Path(split_dir)
    images = _split_images(split_dir)
    stems = {p.stem for p in images}
    labels_dir = split_dir / "labels"
    if labels_dir.is_dir():
        for label_path in sorted(labels_dir.glob("*.txt")):
            if label_path.stem not in stems:
                raise DanglingLabelError(f"{label_path} has no matching image")

    items: list[LabeledItem] = []
    for image_path in images:
        label_path = labels_dir / f"{image_path.stem}.txt"
        annotations: tuple[Annotation, ...] = ()
        if label_path.is_file():
            try:
                annotations = tuple(
                    parse_yolo_labels(label_path.read_text(), num_classes)
                )
            except OSError as exc:
                raise UnreadableFileError(f"{label_path}: {exc}") from exc
            except (MalformedLineError, ClassOutOfRangeError, CoordOutOfRangeError) as exc:
                raise type(exc)(f"{label_path}: {exc}") from exc
        items.append(LabeledItem(image_path, annotations))
    return items


def summarize_split(config: DatasetConfig) -> SplitSummary:
    """Count images per split, total and per class present in the image."""
    totals: dict[str, int] = {}
    class_counts: dict[str, list[int]] = {}
    for split in SPLITS:
        items = list_split_items(config.split_dir(split), config.num_classes)
        counts = [0] * config.num_classes
        for item in items:
            for class_id in sorted({a.class_id for a in item.annotations}):
                counts[class_id] += 1
        totals[split] = len(items)
        class_counts[split] = counts
    return SplitSummary(
        class_names=config.class_names, totals=totals, class_counts=class_counts
    )


# --- image file I/O -------------------------------------------------------

def load_image(path: Path) -> ImageBuffer:
    """Load PNG/JPEG into an ImageBuffer, preserving alpha when present."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                data = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("RGB", "RGBA"):
                data = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("LA", "PA") or (
                im.mode == "P" and "transparency" in im.info
            ):
                data = np.asarray(im.convert("RGBA"), dtype=np.uint8)
            else:
                data = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError, ValueError) as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc
    return ImageBuffer(data)


def save_image(image: ImageBuffer, path: Path) -> None:
    """Write an ImageBuffer to a PNG file."""
    path = Path(path)
    if path.suffix.lower() != ".png":
        raise ValueError(f"images are written as PNG, got {path.suffix!r}")
    data = image.data
    if data.shape[2] == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(data).save(path)


# --- assembling augmented datasets ---------------------------------------

@dataclass(frozen=True)
class NewItem:
    """A generated image destined for one split of an assembled dataset."""

    split: str
    stem: str
    image: ImageBuffer
    annotations: tuple[Annotation, ...]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


def assemble(
    base: DatasetConfig,
    new_items: Sequence[NewItem],
    out_dir: Path,
) -> DatasetConfig:
    """Materialize base + generated items as a fresh dataset tree.

    Base files are copied byte-for-byte; new items are written as PNG plus
    label file. A stem appearing twice within a split (base vs. base, new
    vs. new, or across) is a :class:`NameCollisionError`. Re-running into
    the same ``out_dir`` overwrites files in place, so assembly is
    idempotent.
    """
    out_dir = Path(out_dir)
    seen: dict[str, set[str]] = {split: set() for split in SPLITS}

    for split in SPLITS:
        (out_dir / split / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / split / "labels").mkdir(parents=True, exist_ok=True)

    for split in SPLITS:
        src_dir = base.split_dir(split)
        for item in list_split_items(src_dir, base.num_classes):
            if item.stem in seen[split]:
                raise NameCollisionError(f"duplicate stem {item.stem!r} in {split}")
            seen[split].add(item.stem)
            dst = out_dir / split / "images" / item.image_path.name
            shutil.copyfile(item.image_path, dst)
            src_label = src_dir / "labels" / f"{item.stem}.txt"
            if src_label.is_file():
                shutil.copyfile(src_label, out_dir / split / "labels" / src_label.name)

    for item in new_items:
        if item.stem in seen[item.split]:
            raise NameCollisionError(
                f"duplicate stem {item.stem!r} in {item.split}"
            )
        seen[item.split].add(item.stem)
        save_image(item.image, out_dir / item.split / "images" / f"{item.stem}.png")
        (out_dir / item.split / "labels" / f"{item.stem}.txt").write_text(
            write_yolo_labels(item.annotations)
        )

    assembled = DatasetConfig(
        train_dir=out_dir / "train",
        val_dir=out_dir / "val",
        test_dir=out_dir / "test",
        class_names=base.class_names,
    )
    write_data_config(
        DatasetConfig(
            train_dir=Path("train"),
            val_dir=Path("val"),
            test_dir=Path("test"),
            class_names=base.class_names,
        ),
        out_dir / "data.yaml",
    )
    return assembled
