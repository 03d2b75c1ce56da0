"""Classical photometric/geometric augmentation for already-labeled images.

A recipe is a fixed pipeline applied in a fixed order:

    horizontal flip -> gaussian blur -> exposure

Only the flip moves annotations (cx -> 1 - cx); blur and exposure leave
geometry alone. Random pieces (a "random" flip, the exposure gain) draw from
the caller's stream in that same order so runs replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .core import Annotation, ImageBuffer, NormBBox, RngStream
from .errors import EvenKernelError, GainOutOfRangeError
from .imgproc import adjust_exposure, gaussian_blur, hflip

_GAIN_LO, _GAIN_HI = 0.25, 4.0


@dataclass(frozen=True)
class ClassicOps:
    """Which classical ops run and with what settings.

    ``flip`` is True (always mirror), False (never), or "random" (fair coin
    per item). ``blur`` is ``(kernel_size, sigma)`` with ``sigma=None``
    meaning the size-derived default; ``None`` disables. ``exposure`` is a
    ``(lo, hi)`` gain range sampled uniformly; ``None`` disables.
    """

    flip: Union[bool, str] = True
    blur: Optional[tuple[int, Optional[float]]] = (3, None)
    exposure: Optional[tuple[float, float]] = (0.75, 1.25)

    def __post_init__(self):
        if self.flip not in (True, False, "random"):
            raise ValueError('flip must be True, False, or "random"')
        if self.blur is not None:
            k, _sigma = self.blur
            if k < 1 or k % 2 == 0:
                raise EvenKernelError(f"blur kernel size must be odd >= 1, got {k}")
        if self.exposure is not None:
            lo, hi = self.exposure
            if not (_GAIN_LO <= lo <= hi <= _GAIN_HI):
                raise GainOutOfRangeError(
                    f"exposure range [{lo}, {hi}] outside [{_GAIN_LO}, {_GAIN_HI}]"
                )


def flip_annotation(ann: Annotation) -> Annotation:
    """Mirror a normalized box across the vertical image midline."""
    b = ann.bbox
    return Annotation(ann.class_id, NormBBox(1.0 - b.cx, b.cy, b.w, b.h))


def augment_classical(
    image: ImageBuffer,
    annotations: Sequence[Annotation],
    ops: ClassicOps,
    rng: RngStream,
) -> tuple[ImageBuffer, list[Annotation]]:
    """Apply one classical recipe to one labeled image.

    Returns the transformed image and a same-length annotation list. Draws
    from ``rng`` happen only for the random pieces that are enabled, flip
    coin first, then exposure gain, so a given stream replays to the same
    output regardless of which deterministic ops surround them.
    """
    anns = list(annotations)

    if ops.flip == "random":
        do_flip = rng.coin()
    else:
        do_flip = bool(ops.flip)
    if do_flip:
        image = hflip(image)
        anns = [flip_annotation(a) for a in anns]

    if ops.blur is not None:
        k, sigma = ops.blur
        image = gaussian_blur(image, k, sigma)

    if ops.exposure is not None:
        lo, hi = ops.exposure
        gain = rng.uniform(lo, hi)
        image = adjust_exposure(image, gain)

    return image, anns
