"""Cut-and-paste compositing: parameter sampling, pipeline, batching."""

import numpy as np
import pytest

from skypaste.compose import (
    ComposeConfig,
    ComposeParams,
    ForegroundAsset,
    batch_compose,
    composite_sample,
    sample_params,
    scaled_dims,
)
from skypaste.core import ImageBuffer, derive_stream, norm_to_pixel
from skypaste.errors import (
    BatchItemError,
    EmptyMaskError,
    NoAlphaChannelError,
    NoValidPlacementError,
    SkypasteError,
)
from skypaste.imgproc import hflip, resize_bilinear, rotate_rgba


def opaque_square(side=50, color=(200, 0, 0)) -> ForegroundAsset:
    data = np.zeros((side, side, 4), np.uint8)
    data[:, :, 0], data[:, :, 1], data[:, :, 2] = color
    data[:, :, 3] = 255
    return ForegroundAsset(ImageBuffer(data), class_id=0, source_id="square")


def flat_bg(width=640, height=480, value=40) -> ImageBuffer:
    return ImageBuffer(np.full((height, width, 3), value, np.uint8))


def blob_asset(rng, side=24, class_id=0, source_id="blob") -> ForegroundAsset:
    """Irregular opaque blob for oracle tests."""
    data = rng.integers(0, 256, size=(side, side, 4), dtype=np.uint8)
    yy, xx = np.mgrid[0:side, 0:side]
    cx, cy = rng.integers(side // 3, 2 * side // 3, size=2)
    r = int(rng.integers(side // 4, side // 2))
    data[:, :, 3] = np.where((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r, 255, 0)
    return ForegroundAsset(ImageBuffer(data), class_id=class_id, source_id=source_id)


# --- asset validation -----------------------------------------------------

def test_asset_requires_alpha():
    with pytest.raises(NoAlphaChannelError):
        ForegroundAsset(flat_bg(8, 8), class_id=0, source_id="x")


def test_asset_rejects_fully_transparent():
    data = np.zeros((8, 8, 4), np.uint8)
    with pytest.raises(SkypasteError):
        ForegroundAsset(ImageBuffer(data), class_id=0, source_id="x")


def test_config_validation():
    with pytest.raises(ValueError):
        ComposeConfig(theta_max=-1.0)
    with pytest.raises(ValueError):
        ComposeConfig(scale_min=0.5, scale_max=0.4)
    with pytest.raises(ValueError):
        ComposeConfig(feather_k=4)


# --- sample_params --------------------------------------------------------

def test_sample_params_degenerate_origin():
    """Equal min/max scale and a background exactly the asset size pin (0,0)."""
    fg = opaque_square(40)
    bg = flat_bg(40, 40)
    config = ComposeConfig(theta_max=0.0, scale_min=1.0, scale_max=1.0)
    params = sample_params(fg, bg, derive_stream(3, 0), config)
    assert params.origin == (0, 0)
    assert params.theta == 0.0
    assert params.scale == pytest.approx(1.0)


def test_sample_params_deterministic():
    fg, bg = opaque_square(), flat_bg()
    a = sample_params(fg, bg, derive_stream(11, 4))
    b = sample_params(fg, bg, derive_stream(11, 4))
    assert a == b


def test_sample_params_distributions():
    """10^4 per-item streams: theta mean ~5.0 +-0.3, flip rate ~0.5 +-0.05."""
    fg, bg = opaque_square(), flat_bg()
    thetas, flips = [], []
    for i in range(10_000):
        p = sample_params(fg, bg, derive_stream(123, i))
        thetas.append(p.theta)
        flips.append(p.flip)
    assert np.mean(thetas) == pytest.approx(5.0, abs=0.3)
    assert np.mean(flips) == pytest.approx(0.5, abs=0.05)
    assert 0.0 <= min(thetas) and max(thetas) <= 10.0


def test_sample_params_origin_keeps_asset_inside():
    fg, bg = opaque_square(30), flat_bg(200, 160)
    for i in range(100):
        p = sample_params(fg, bg, derive_stream(9, i))
        rot_w, rot_h = 0, 0  # recompute the placed footprint
        from skypaste.imgproc import rotated_canvas_size

        rot_w, rot_h = rotated_canvas_size(30, 30, p.theta)
        out_w, out_h = scaled_dims(rot_w, rot_h, p.scale)
        assert 0 <= p.origin[0] <= 200 - out_w
        assert 0 <= p.origin[1] <= 160 - out_h


def test_sample_params_no_valid_placement():
    fg, bg = opaque_square(50), flat_bg(60, 60)
    config = ComposeConfig(theta_max=0.0, scale_min=2.0, scale_max=2.0)
    with pytest.raises(NoValidPlacementError):
        sample_params(fg, bg, derive_stream(0, 0), config)


# --- composite_sample -----------------------------------------------------

def test_composite_annotation_hand_value():
    """Opaque 50x50, no transforms, at (100, 80) on 640x480."""
    sample = composite_sample(
        opaque_square(50),
        flat_bg(),
        ComposeParams(theta=0.0, flip=False, scale=1.0, origin=(100, 80)),
    )
    b = sample.annotation.bbox
    assert (b.cx, b.cy, b.w) == (0.1953125, 0.21875, 0.078125)
    assert b.h == pytest.approx(0.1041667, abs=5e-7)
    assert sample.annotation.class_id == 0


def test_composite_pastes_pixels():
    sample = composite_sample(
        opaque_square(50),
        flat_bg(),
        ComposeParams(theta=0.0, flip=False, scale=1.0, origin=(100, 80), feather_k=1),
    )
    img = sample.image
    assert tuple(img.data[105, 125]) == (200, 0, 0)  # interior
    assert tuple(img.data[10, 10]) == (40, 40, 40)  # background untouched


def test_composite_scale_one_keeps_size():
    assert scaled_dims(50, 50, 1.0) == (50, 50)
    assert scaled_dims(50, 30, 0.5) == (25, 15)
    assert scaled_dims(3, 3, 0.01) == (1, 1)  # never collapses to zero


def test_composite_transparent_fg_is_empty_mask():
    data = np.zeros((8, 8, 4), np.uint8)
    data[4, 4, 3] = 200  # one visible pixel so the asset constructor passes
    fg = ForegroundAsset(ImageBuffer(data), 0, "dot")
    params = ComposeParams(theta=0.0, flip=False, scale=1.0, origin=(0, 0), alpha_threshold=250)
    with pytest.raises(EmptyMaskError):
        composite_sample(fg, flat_bg(64, 64), params)


def test_composite_feather_does_not_move_annotation():
    """Labels come from the pre-feather mask: k=1 and k=3 agree exactly."""
    fg, bg = opaque_square(30), flat_bg(200, 200)
    base = dict(theta=7.0, flip=True, scale=1.3, origin=(40, 60))
    hard = composite_sample(fg, bg, ComposeParams(**base, feather_k=1))
    soft = composite_sample(fg, bg, ComposeParams(**base, feather_k=3))
    assert hard.annotation == soft.annotation
    assert hard.image != soft.image  # feathering does change pixels


def test_composite_annotation_matches_pixel_scan_oracle(rng):
    """Re-derive every annotation by scanning the transformed alpha plane."""
    bg = flat_bg(240, 200)
    for trial in range(25):
        fg = blob_asset(rng, side=int(rng.integers(16, 33)))
        params = sample_params(
            fg, bg, derive_stream(500, trial), ComposeConfig(scale_min=0.1, scale_max=0.3)
        )
        sample = composite_sample(fg, bg, params)

        work = fg.image
        if params.flip:
            work = hflip(work)
        if params.theta != 0.0:
            work = rotate_rgba(work, params.theta)
        out_w, out_h = scaled_dims(work.width, work.height, params.scale)
        alpha = resize_bilinear(work, out_w, out_h).alpha
        xs = [x for y in range(out_h) for x in range(out_w) if alpha[y, x] > 127]
        ys = [y for y in range(out_h) for x in range(out_w) if alpha[y, x] > 127]
        ox, oy = params.origin
        rect = norm_to_pixel(sample.annotation.bbox, bg.width, bg.height)
        assert abs(rect.x_min - (min(xs) + ox)) <= 1
        assert abs(rect.y_min - (min(ys) + oy)) <= 1
        assert abs(rect.x_max - (max(xs) + 1 + ox)) <= 1
        assert abs(rect.y_max - (max(ys) + 1 + oy)) <= 1


# --- batch_compose --------------------------------------------------------

def small_assets():
    data = np.zeros((8, 8, 4), np.uint8)
    data[:, :, 0] = 90
    data[:, :, 3] = 255
    a = ForegroundAsset(ImageBuffer(data), 0, "a")
    b = ForegroundAsset(ImageBuffer(data), 1, "b")
    return a, b


def test_batch_zero_items():
    a, b = small_assets()
    assert batch_compose([a, b], [("bg", flat_bg(100, 80))], 0, root_seed=1) == []


def test_batch_thread_invariance():
    a, b = small_assets()
    bgs = [("bg0", flat_bg(100, 80)), ("bg1", flat_bg(100, 80, 70))]
    serial = batch_compose([a, b], bgs, 16, root_seed=42, threads=1)
    threaded = batch_compose([a, b], bgs, 16, root_seed=42, threads=8)
    assert len(serial) == 16
    for s, t in zip(serial, threaded):
        assert s.image == t.image
        assert s.annotation == t.annotation
        assert s.params == t.params
        assert s.provenance == t.provenance


def test_batch_round_robin_without_targets():
    a, b = small_assets()
    out = batch_compose([a, b], [("bg", flat_bg(100, 80))], 6, root_seed=3)
    assert [s.annotation.class_id for s in out] == [0, 1, 0, 1, 0, 1]


def test_batch_class_targets_usage_counts():
    """316 composites of one class over 5 assets: each used 63 or 64 times."""
    data = np.zeros((8, 8, 4), np.uint8)
    data[:, :, 3] = 255
    fgs = [ForegroundAsset(ImageBuffer(data), 1, f"m{i}") for i in range(5)]
    config = ComposeConfig(class_targets={1: 316})
    out = batch_compose(fgs, [("bg", flat_bg(120, 90))], 316, root_seed=7, config=config)
    assert len(out) == 316
    assert all(s.annotation.class_id == 1 for s in out)
    usage = {f"m{i}": 0 for i in range(5)}
    for s in out:
        usage[s.provenance[0]] += 1
    assert sorted(usage.values()) == [63, 63, 63, 63, 64]


def test_batch_class_targets_must_sum_to_n():
    a, b = small_assets()
    config = ComposeConfig(class_targets={0: 2, 1: 1})
    with pytest.raises(ValueError):
        batch_compose([a, b], [("bg", flat_bg(100, 80))], 5, root_seed=1, config=config)


def test_batch_class_targets_need_matching_assets():
    a, _ = small_assets()
    config = ComposeConfig(class_targets={3: 4})
    with pytest.raises(SkypasteError):
        batch_compose([a], [("bg", flat_bg(100, 80))], 4, root_seed=1, config=config)


def test_batch_item_error_carries_index():
    fg = opaque_square(50)
    config = ComposeConfig(theta_max=0.0, scale_min=2.0, scale_max=2.0)
    with pytest.raises(BatchItemError) as exc_info:
        batch_compose([fg], [("bg", flat_bg(60, 60))], 3, root_seed=1, config=config)
    assert exc_info.value.item_index == 0
    assert isinstance(exc_info.value.cause, NoValidPlacementError)


def test_batch_rejects_empty_inputs():
    a, _ = small_assets()
    with pytest.raises(ValueError):
        batch_compose([], [("bg", flat_bg(50, 50))], 2, root_seed=0)
    with pytest.raises(ValueError):
        batch_compose([a], [], 2, root_seed=0)
