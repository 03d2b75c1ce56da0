"""Shared helpers: random builders, independent oracles, fixture paths."""

from pathlib import Path

import numpy as np
import pytest

from skypaste.core import Detection, ImageBuffer, NormBBox

FIXTURES = Path(__file__).parent / "fixtures"


def random_image(rng: np.random.Generator, width: int, height: int, channels: int = 3) -> ImageBuffer:
    shape = (height, width) if channels == 1 else (height, width, channels)
    return ImageBuffer(rng.integers(0, 256, size=shape, dtype=np.uint8))


def random_cutout(rng: np.random.Generator, width: int, height: int) -> ImageBuffer:
    """RGBA image with a random opaque blob on a transparent field."""
    data = rng.integers(0, 256, size=(height, width, 4), dtype=np.uint8)
    alpha = np.zeros((height, width), dtype=np.uint8)
    x0 = int(rng.integers(0, width - 1))
    y0 = int(rng.integers(0, height - 1))
    x1 = int(rng.integers(x0 + 1, width + 1))
    y1 = int(rng.integers(y0 + 1, height + 1))
    alpha[y0:y1, x0:x1] = 255
    data[:, :, 3] = alpha
    return ImageBuffer(data)


def random_detections(rng: np.random.Generator, n: int, num_classes: int = 3) -> list[Detection]:
    """Clustered detections: later boxes often jitter earlier ones, so
    suppression actually triggers; confidences on a coarse grid so ties happen."""
    dets: list[Detection] = []
    for _ in range(n):
        if dets and rng.uniform() < 0.5:
            base = dets[int(rng.integers(0, len(dets)))]
            cx = float(base.bbox.cx + rng.uniform(-0.04, 0.04))
            cy = float(base.bbox.cy + rng.uniform(-0.04, 0.04))
            w, h = base.bbox.w, base.bbox.h
            if rng.uniform() < 0.7:
                class_id = base.class_id
            else:
                class_id = int(rng.integers(0, num_classes))
        else:
            cx, cy = (float(v) for v in rng.uniform(0.3, 0.7, size=2))
            w, h = (float(v) for v in rng.uniform(0.05, 0.25, size=2))
            class_id = int(rng.integers(0, num_classes))
        conf = round(float(rng.uniform()), 2)
        dets.append(Detection(class_id, conf, NormBBox(cx, cy, w, h)))
    return dets


def plain_iou(a: NormBBox, b: NormBBox) -> float:
    """Overlap ratio recomputed with bare arithmetic (oracle use only)."""
    iw = min(a.cx + a.w / 2, b.cx + b.w / 2) - max(a.cx - a.w / 2, b.cx - b.w / 2)
    ih = min(a.cy + a.h / 2, b.cy + b.h / 2) - max(a.cy - a.h / 2, b.cy - b.h / 2)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def nms_subset_oracle(dets: list[Detection], tau: float) -> set:
    """Enumerate all 2^n subsets; return the one satisfying the suppression
    fixpoint (kept boxes unsuppressed by kept higher-priority same-class
    boxes, dropped boxes suppressed by at least one). Asserts uniqueness."""
    n = len(dets)
    order = sorted(range(n), key=lambda i: (-dets[i].confidence, i))
    rank = {i: pos for pos, i in enumerate(order)}
    valid = []
    for mask in range(1 << n):
        chosen = {i for i in range(n) if mask >> i & 1}

        def blocked(i):
            return any(
                j != i
                and rank[j] < rank[i]
                and dets[j].class_id == dets[i].class_id
                and plain_iou(dets[j].bbox, dets[i].bbox) > tau
                for j in chosen
            )

        if all(blocked(i) != (i in chosen) for i in range(n)):
            valid.append(chosen)
    assert len(valid) == 1, f"expected a unique fixpoint, found {len(valid)}"
    return valid[0]


def ap_scan_oracle(flags: list, num_gt: int) -> float:
    """All-point interpolated AP recomputed with plain loops and max() scans."""
    precisions, recalls = [], []
    tp = 0
    for k, hit in enumerate(flags, start=1):
        tp += int(hit)
        precisions.append(tp / k)
        recalls.append(tp / num_gt)
    ap, prev = 0.0, 0.0
    for k, hit in enumerate(flags):
        if hit:
            ap += (recalls[k] - prev) * max(precisions[k:])
            prev = recalls[k]
    return ap


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230817)
