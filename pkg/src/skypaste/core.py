"""Domain types, box geometry, and deterministic random streams.

Boxes live in two representations:

* :class:`NormBBox` -- normalized center/size fractions, the on-disk YOLO
  convention and the internal storage format.
* :class:`PixelRect` -- half-open integer pixel corners (``x_max``/``y_max``
  exclusive), used only at raster boundaries so widths and areas are plain
  integer subtractions.

Random draws go through :class:`RngStream`, a counter-based (Philox) stream
derived purely from ``(root_seed, item_index)``. Two calls with the same pair
produce the same draw sequence regardless of thread count or evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import InvalidBoxError, RectOutOfBoundsError


def round_half_away(x):
    """Round to nearest integer with halves away from zero.

    numpy's default rounding is half-to-even; every pixel computation in this
    package uses this rule instead so golden values are portable. Works on
    scalars and arrays; returns float values (cast at the call site).
    """
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


class Channels(IntEnum):
    """Sample count per pixel."""

    GRAY = 1
    RGB = 3
    RGBA = 4


class ImageBuffer:
    """8-bit raster image with an explicit channel layout.

    Wraps a read-only ``(height, width, channels)`` uint8 array. Instances are
    immutable; all pixel operations return new buffers.
    """

    __slots__ = ("width", "height", "channels", "data")

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3, 4):
            raise ValueError(f"expected (h, w, 1|3|4) array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 samples, got {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "height", arr.shape[0])
        object.__setattr__(self, "width", arr.shape[1])
        object.__setattr__(self, "channels", Channels(arr.shape[2]))

    def __setattr__(self, name, value):
        raise AttributeError("ImageBuffer is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.width, self.height, int(self.channels), self.data.tobytes()))

    def __repr__(self) -> str:
        return f"ImageBuffer({self.width}x{self.height} {self.channels.name})"

    @property
    def alpha(self) -> np.ndarray:
        """The alpha plane of an RGBA buffer."""
        if self.channels is not Channels.RGBA:
            raise ValueError("image has no alpha channel")
        return self.data[:, :, 3]

    def plane(self, i: int) -> np.ndarray:
        return self.data[:, :, i]


@dataclass(frozen=True)
class PixelRect:
    """Half-open pixel rectangle: min corner inclusive, max corner exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise InvalidBoxError(f"negative rect corner: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise InvalidBoxError(f"empty rect: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def shift(self, dx: int, dy: int) -> "PixelRect":
        return PixelRect(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


@dataclass(frozen=True)
class NormBBox:
    """Center/size box, each field a fraction of the image dimension."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 < self.w <= 1.0) or not (0.0 < self.h <= 1.0):
            raise InvalidBoxError(f"box size out of (0, 1]: {self}")
        if not (0.0 <= self.cx <= 1.0) or not (0.0 <= self.cy <= 1.0):
            raise InvalidBoxError(f"box center out of [0, 1]: {self}")

    def corners(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) in normalized units, unclamped."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )


@dataclass(frozen=True)
class Annotation:
    """Ground-truth record: a class and its normalized box."""

    class_id: int
    bbox: NormBBox

    def __post_init__(self):
        if self.class_id < 0:
            raise InvalidBoxError(f"negative class_id: {self.class_id}")


@dataclass(frozen=True)
class Detection:
    """Prediction record: class, confidence, normalized box."""

    class_id: int
    confidence: float
    bbox: NormBBox

    def __post_init__(self):
        if self.class_id < 0:
            raise InvalidBoxError(f"negative class_id: {self.class_id}")
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidBoxError(f"confidence out of [0, 1]: {self.confidence}")


def norm_to_pixel(b: NormBBox, width: int, height: int) -> PixelRect:
    """Map a normalized box onto the pixel grid of a ``width`` x ``height`` image.

    Corners are rounded half-away-from-zero and clamped to the image; a box
    that collapses to zero width/height under clamping is widened to 1 px.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    nx0, ny0, nx1, ny1 = b.corners()
    x0 = int(round_half_away(nx0 * width))
    y0 = int(round_half_away(ny0 * height))
    x1 = int(round_half_away(nx1 * width))
    y1 = int(round_half_away(ny1 * height))
    x0, x1 = max(0, x0), min(width, x1)
    y0, y1 = max(0, y0), min(height, y1)
    if x0 >= x1:
        x0 = min(max(0, x0), width - 1)
        x1 = x0 + 1
    if y0 >= y1:
        y0 = min(max(0, y0), height - 1)
        y1 = y0 + 1
    return PixelRect(x0, y0, x1, y1)


def pixel_to_norm(r: PixelRect, width: int, height: int) -> NormBBox:
    """Exact inverse of :func:`norm_to_pixel` up to 0.5-px rounding."""
    if r.x_max > width or r.y_max > height:
        raise RectOutOfBoundsError(f"{r} exceeds {width}x{height} image")
    return NormBBox(
        cx=(r.x_min + r.x_max) / 2.0 / width,
        cy=(r.y_min + r.y_max) / 2.0 / height,
        w=r.width / width,
        h=r.height / height,
    )


@dataclass
class RngStream:
    """Counter-based random stream bound to one (root_seed, item_index) pair.

    Thin wrapper over a Philox generator keyed by the pair, so streams are
    independent per item and reproducible under any parallel schedule. Draw
    methods consume the stream in call order.
    """

    root_seed: int
    item_index: int
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = np.array([self.root_seed, self.item_index], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """One double uniform on [low, high)."""
        return float(self._gen.random() * (high - low) + low)

    def integer(self, low: int, high: int) -> int:
        """One integer uniform on [low, high] inclusive."""
        return int(self._gen.integers(low, high, endpoint=True))

    def coin(self, p: float = 0.5) -> bool:
        """Bernoulli draw; consumes one uniform."""
        return bool(self._gen.random() < p)

    def normals(self, shape: tuple[int, ...]) -> np.ndarray:
        """Array of standard-normal doubles."""
        return self._gen.standard_normal(shape)

    def uniforms(self, shape: tuple[int, ...]) -> np.ndarray:
        """Array of doubles uniform on [0, 1)."""
        return self._gen.random(shape)


def derive_stream(root_seed: int, item_index: int) -> RngStream:
    """Derive the independent stream for one work item.

    Pure function of its arguments: same pair, same draw sequence.
    """
    return RngStream(root_seed=int(root_seed), item_index=int(item_index))
