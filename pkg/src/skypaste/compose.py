"""Cut-and-paste augmentation: place an alpha-matted foreground onto a sky
background with randomized rotation/flip/scale/position, feather the seam, and
synthesize the matching annotation.

The geometry pipeline order is fixed for reproducibility:

    flip -> rotate -> scale -> feather -> paste

The annotation is taken from the alpha mask *before* feathering; feathering is
a cosmetic seam treatment and must not inflate labels.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .core import (
    Annotation,
    Channels,
    ImageBuffer,
    RngStream,
    derive_stream,
    pixel_to_norm,
    round_half_away,
)
from .errors import (
    BatchItemError,
    NoAlphaChannelError,
    NoValidPlacementError,
    SkypasteError,
)
from .imgproc import (
    AlphaMask,
    alpha_composite,
    feather_mask,
    hflip,
    resize_bilinear,
    rotate_rgba,
    rotated_canvas_size,
    tight_bbox,
)


@dataclass(frozen=True)
class ForegroundAsset:
    """An alpha-matted cutout ready for pasting, plus its class."""

    image: ImageBuffer
    class_id: int
    source_id: str

    def __post_init__(self):
        if self.image.channels is not Channels.RGBA:
            raise NoAlphaChannelError(f"foreground {self.source_id!r} must be RGBA")
        if int(self.image.alpha.max()) == 0:
            raise SkypasteError(f"foreground {self.source_id!r} is fully transparent")


@dataclass(frozen=True)
class ComposeConfig:
    """Knobs for randomized placement.

    ``scale_min``/``scale_max`` bound the pasted object's width as a fraction
    of the background width. ``class_targets`` optionally pins how many
    composites each class receives in a batch.
    """

    theta_max: float = 10.0
    scale_min: float = 0.15
    scale_max: float = 0.45
    feather_k: int = 3
    alpha_threshold: int = 127
    flip_prob: float = 0.5
    class_targets: Optional[Mapping[int, int]] = None

    def __post_init__(self):
        if self.theta_max < 0.0:
            raise ValueError("theta_max must be >= 0")
        if not (0.0 < self.scale_min <= self.scale_max):
            raise ValueError("need 0 < scale_min <= scale_max")
        if self.feather_k < 1 or self.feather_k % 2 == 0:
            raise ValueError("feather_k must be odd >= 1")
        if not (0 <= self.alpha_threshold <= 255):
            raise ValueError("alpha_threshold must be an 8-bit value")


@dataclass(frozen=True)
class ComposeParams:
    """Fully determined description of one paste; replayable without RNG."""

    theta: float
    flip: bool
    scale: float
    origin: tuple[int, int]
    feather_k: int = 3
    alpha_threshold: int = 127

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be > 0")


@dataclass(frozen=True)
class ComposedSample:
    """One synthesized training image with its annotation and provenance."""

    image: ImageBuffer
    annotation: Annotation
    params: ComposeParams
    provenance: tuple[str, str] = field(default=("", ""))


def scaled_dims(w: int, h: int, scale: float) -> tuple[int, int]:
    """Integer dimensions after scaling, never collapsing below 1 px."""
    return (
        max(1, int(round_half_away(w * scale))),
        max(1, int(round_half_away(h * scale))),
    )


def sample_params(
    fg: ForegroundAsset,
    bg: ImageBuffer,
    rng: RngStream,
    config: ComposeConfig = ComposeConfig(),
) -> ComposeParams:
    """Draw placement parameters for one paste from a per-item stream.

    Draw order is fixed: rotation angle (uniform on [0, theta_max]), flip
    coin, target width fraction (uniform on [scale_min, scale_max]), then
    origin x and y (uniform over every position that keeps the transformed
    asset fully inside the background). The stored ``scale`` is the concrete
    resize factor realizing the drawn width fraction on this asset.
    """
    theta = rng.uniform(0.0, config.theta_max)
    flip = rng.coin(config.flip_prob)
    width_frac = rng.uniform(config.scale_min, config.scale_max)

    rot_w, rot_h = rotated_canvas_size(fg.image.width, fg.image.height, theta)
    scale = width_frac * bg.width / rot_w
    out_w, out_h = scaled_dims(rot_w, rot_h, scale)
    if out_w > bg.width or out_h > bg.height:
        raise NoValidPlacementError(
            f"scaled asset {out_w}x{out_h} cannot fit in {bg.width}x{bg.height} background"
        )
    origin_x = rng.integer(0, bg.width - out_w)
    origin_y = rng.integer(0, bg.height - out_h)
    return ComposeParams(
        theta=theta,
        flip=flip,
        scale=scale,
        origin=(origin_x, origin_y),
        feather_k=config.feather_k,
        alpha_threshold=config.alpha_threshold,
    )


def composite_sample(
    fg: ForegroundAsset,
    bg: ImageBuffer,
    params: ComposeParams,
    bg_source_id: str = "",
) -> ComposedSample:
    """Deterministically realize one paste from explicit parameters.

    Applies flip -> rotate -> scale to the RGBA asset, extracts the tight
    bbox from the scaled (pre-feather) alpha at ``alpha_threshold``, feathers
    the alpha, composites at ``origin``, and normalizes the bbox against the
    background dimensions.
    """
    work = fg.image
    if params.flip:
        work = hflip(work)
    if params.theta != 0.0:
        work = rotate_rgba(work, params.theta)
    out_w, out_h = scaled_dims(work.width, work.height, params.scale)
    work = resize_bilinear(work, out_w, out_h)

    raw_mask = AlphaMask(work.alpha)
    local_rect = tight_bbox(raw_mask, params.alpha_threshold)

    if params.feather_k > 1:
        soft = feather_mask(raw_mask, params.feather_k)
        rgba = work.data.copy()
        rgba[:, :, 3] = soft.values
        work = ImageBuffer(rgba)

    image = alpha_composite(work, bg, params.origin)
    rect = local_rect.shift(*params.origin)
    annotation = Annotation(fg.class_id, pixel_to_norm(rect, bg.width, bg.height))
    return ComposedSample(
        image=image,
        annotation=annotation,
        params=params,
        provenance=(fg.source_id, bg_source_id),
    )


def _plan_assets(
    fgs: Sequence[ForegroundAsset], n: int, config: ComposeConfig
) -> list[ForegroundAsset]:
    """Assign a foreground to each item index.

    Without class targets, foregrounds cycle in list order. With targets,
    classes rotate round-robin until each quota is met, and within a class
    its foregrounds cycle, so per-foreground usage counts differ by at most
    one.
    """
    if config.class_targets is None:
        return [fgs[i % len(fgs)] for i in range(n)]

    by_class: dict[int, list[ForegroundAsset]] = {}
    for fg in fgs:
        by_class.setdefault(fg.class_id, []).append(fg)
    targets = dict(config.class_targets)
    for class_id in targets:
        if class_id not in by_class:
            raise SkypasteError(f"no foreground asset for target class {class_id}")
    if sum(targets.values()) != n:
        raise ValueError(
            f"class targets sum to {sum(targets.values())} but n={n}"
        )

    plan: list[ForegroundAsset] = []
    used = {c: 0 for c in targets}
    order = sorted(targets)
    while len(plan) < n:
        for class_id in order:
            if used[class_id] < targets[class_id]:
                pool = by_class[class_id]
                plan.append(pool[used[class_id] % len(pool)])
                used[class_id] += 1
    return plan


def batch_compose(
    fgs: Sequence[ForegroundAsset],
    bgs: Sequence[tuple[str, ImageBuffer]],
    n: int,
    root_seed: int,
    config: ComposeConfig = ComposeConfig(),
    threads: int = 1,
) -> list[ComposedSample]:
    """Produce ``n`` composites, byte-identical for any thread count.

    Item ``i`` draws from ``derive_stream(root_seed, i)`` in a fixed order:
    background index first, then the placement draws of
    :func:`sample_params`. Backgrounds are given as ``(source_id, image)``
    pairs. Failures surface as :class:`BatchItemError` carrying the item
    index.
    """
    if n == 0:
        return []
    if not fgs or not bgs:
        raise ValueError("need at least one foreground and one background")
    if n < 0:
        raise ValueError("n must be >= 0")

    plan = _plan_assets(fgs, n, config)

    def build(i: int) -> ComposedSample:
        try:
            rng = derive_stream(root_seed, i)
            bg_id, bg = bgs[rng.integer(0, len(bgs) - 1)]
            params = sample_params(plan[i], bg, rng, config)
            return composite_sample(plan[i], bg, params, bg_source_id=bg_id)
        except BaseException as exc:
            raise BatchItemError(i, exc) from exc

    if threads <= 1:
        return [build(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, range(n)))
