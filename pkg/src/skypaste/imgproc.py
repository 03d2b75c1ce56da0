"""Pixel-level primitives.

Gaussian kernels and convolution, flips, RGBA rotation, exposure, alpha
compositing, mask feathering, tight-bbox extraction, and a classic edge
detector. All operations are pure: they take immutable buffers and return new
ones.

Conventions fixed across the module:

* border policy for every convolution is edge replication;
* pixel math rounds half-away-from-zero, then clamps to [0, 255];
* rectangles are half-open (see :class:`~skypaste.core.PixelRect`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .core import Channels, ImageBuffer, PixelRect, round_half_away
from .errors import (
    BadThresholdsError,
    EmptyMaskError,
    EvenKernelError,
    ForegroundOutOfBoundsError,
    GainOutOfRangeError,
    NoAlphaChannelError,
    NonPositiveSigmaError,
)


@dataclass(frozen=True)
class Kernel:
    """Square convolution kernel with unit mass.

    ``weights`` is a read-only (size, size) float array summing to 1 within
    1e-9; ``size`` is odd.
    """

    size: int
    weights: np.ndarray

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise EvenKernelError(f"kernel size must be odd >= 1, got {self.size}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.size, self.size):
            raise ValueError(f"weights shape {w.shape} != ({self.size}, {self.size})")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"kernel weights sum to {w.sum()}, expected 1")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class AlphaMask:
    """Per-pixel 8-bit coverage: 0 = background, 255 = full coverage."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.dtype != np.uint8:
            raise ValueError(f"mask must be 2-D uint8, got {v.shape} {v.dtype}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def auto_sigma(k: int) -> float:
    """Default Gaussian sigma for a k x k kernel: 0.3*((k-1)/2 - 1) + 0.8."""
    if k < 1 or k % 2 == 0:
        raise EvenKernelError(f"kernel size must be odd >= 1, got {k}")
    return 0.3 * ((k - 1) / 2.0 - 1.0) + 0.8


def gaussian_kernel(k: int, sigma: float) -> Kernel:
    """Normalized 2-D Gaussian: weights[x, y] ~ exp(-(x^2 + y^2) / (2 sigma^2)).

    Offsets run over [-(k-1)/2, (k-1)/2]; the normalization constant cancels,
    so weights are divided by their sum to reach unit mass.
    """
    if k < 1 or k % 2 == 0:
        raise EvenKernelError(f"kernel size must be odd >= 1, got {k}")
    if not (sigma > 0.0):
        raise NonPositiveSigmaError(f"sigma must be > 0, got {sigma}")
    r = k // 2
    coords = np.arange(-r, r + 1, dtype=np.float64)
    xx, yy = np.meshgrid(coords, coords)
    w = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    w /= w.sum()
    return Kernel(size=k, weights=w)


def _correlate_float(plane: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Float cross-correlation with edge replication, no rounding."""
    k = weights.shape[0]
    r = k // 2
    if r == 0:
        return plane * float(weights[0, 0])
    padded = np.pad(plane, r, mode="edge")
    h, w = plane.shape
    out = np.zeros((h, w), dtype=np.float64)
    for dy in range(k):
        for dx in range(k):
            c = float(weights[dy, dx])
            if c != 0.0:
                out += c * padded[dy : dy + h, dx : dx + w]
    return out


def convolve(
    img: ImageBuffer, kernel: Kernel, border: Literal["replicate"] = "replicate"
) -> ImageBuffer:
    """Per-channel spatial convolution.

    True convolution (the kernel is flipped); for the symmetric kernels this
    package builds, that equals correlation. Output has the input's
    dimensions; samples are rounded half-away-from-zero and clamped.
    """
    if border != "replicate":
        raise ValueError(f"unsupported border mode: {border!r}")
    flipped = kernel.weights[::-1, ::-1]
    planes = [
        _correlate_float(img.data[:, :, c].astype(np.float64), flipped)
        for c in range(img.channels)
    ]
    out = np.stack(planes, axis=-1)
    out = np.clip(round_half_away(out), 0, 255).astype(np.uint8)
    return ImageBuffer(out)


def gaussian_blur(img: ImageBuffer, k: int, sigma: Optional[float] = None) -> ImageBuffer:
    """Convolve with a k x k Gaussian; ``sigma=None`` selects :func:`auto_sigma`."""
    if sigma is None:
        sigma = auto_sigma(k)
    return convolve(img, gaussian_kernel(k, sigma))


def hflip(img: ImageBuffer) -> ImageBuffer:
    """Mirror along the vertical axis: pixel (x, y) -> (width-1-x, y)."""
    return ImageBuffer(img.data[:, ::-1, :])


def ensure_rgb(img: ImageBuffer) -> ImageBuffer:
    """Coerce to RGB: replicate gray, drop alpha, pass RGB through."""
    if img.channels is Channels.RGB:
        return img
    if img.channels is Channels.GRAY:
        return ImageBuffer(np.repeat(img.data, 3, axis=2))
    return ImageBuffer(img.data[:, :, :3])


def adjust_exposure(img: ImageBuffer, gain: float) -> ImageBuffer:
    """Scale color samples by ``gain`` (clamped); the alpha plane is untouched."""
    if not (0.25 <= gain <= 4.0):
        raise GainOutOfRangeError(f"gain must be in [0.25, 4.0], got {gain}")
    out = img.data.astype(np.float64)
    ncolor = 3 if img.channels in (Channels.RGB, Channels.RGBA) else 1
    scaled = np.clip(round_half_away(out[:, :, :ncolor] * gain), 0, 255)
    out[:, :, :ncolor] = scaled
    return ImageBuffer(out.astype(np.uint8))


def rotated_canvas_size(w: int, h: int, theta_deg: float) -> tuple[int, int]:
    """Canvas that tightly bounds a w x h rect rotated by theta degrees."""
    t = math.radians(theta_deg)
    c, s = abs(math.cos(t)), abs(math.sin(t))
    # tiny epsilon so exact-integer extents do not ceil one pixel too far
    new_w = max(1, math.ceil(w * c + h * s - 1e-9))
    new_h = max(1, math.ceil(w * s + h * c - 1e-9))
    return new_w, new_h


def rotate_rgba(img: ImageBuffer, theta: float) -> ImageBuffer:
    """Rotate an RGBA image about its center, expanding the canvas.

    Destination pixel centers are mapped back into the source and sampled
    bilinearly; regions outside the source come out fully transparent, so no
    opaque pixel is ever clipped. Centered coordinates transform by
    (u', v') = (u cos t - v sin t, u sin t + v cos t) with y pointing down;
    theta = 90 sends pixel (x, y) to (h-1-y, x). Multiples of 90 degrees are
    exact array permutations.
    """
    if img.channels is not Channels.RGBA:
        raise NoAlphaChannelError("rotate_rgba requires an RGBA image")
    theta = float(theta) % 360.0
    if theta == 0.0:
        return ImageBuffer(img.data)
    if theta in (90.0, 180.0, 270.0):
        quarter = img.data
        if theta >= 90.0:
            quarter = quarter.transpose(1, 0, 2)[:, ::-1, :]
        if theta >= 180.0:
            quarter = quarter.transpose(1, 0, 2)[:, ::-1, :]
        if theta >= 270.0:
            quarter = quarter.transpose(1, 0, 2)[:, ::-1, :]
        return ImageBuffer(quarter)

    w, h = img.width, img.height
    new_w, new_h = rotated_canvas_size(w, h, theta)
    t = math.radians(theta)
    c, s = math.cos(t), math.sin(t)

    xs = np.arange(new_w, dtype=np.float64) - (new_w - 1) / 2.0
    ys = np.arange(new_h, dtype=np.float64) - (new_h - 1) / 2.0
    uu, vv = np.meshgrid(xs, ys)
    # inverse rotation pulls destination centers back into the source
    sx = c * uu + s * vv + (w - 1) / 2.0
    sy = -s * uu + c * vv + (h - 1) / 2.0

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    src = img.data.astype(np.float64)
    out = np.zeros((new_h, new_w, 4), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            wx = fx if dx == 1 else 1.0 - fx
            wy = fy if dy == 1 else 1.0 - fy
            weight = np.where(valid, wx * wy, 0.0)
            sample = src[yi.clip(0, h - 1), xi.clip(0, w - 1)]
            out += weight[:, :, np.newaxis] * sample
    out = np.clip(round_half_away(out), 0, 255).astype(np.uint8)
    return ImageBuffer(out)


def resize_bilinear(img: ImageBuffer, new_w: int, new_h: int) -> ImageBuffer:
    """Resize with bilinear interpolation (half-pixel center alignment)."""
    if new_w < 1 or new_h < 1:
        raise ValueError("target dimensions must be >= 1")
    if new_w == img.width and new_h == img.height:
        return ImageBuffer(img.data)
    w, h = img.width, img.height
    sx = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    sy = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    sx = sx.clip(0.0, w - 1.0)
    sy = sy.clip(0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[np.newaxis, :, np.newaxis]
    fy = (sy - y0)[:, np.newaxis, np.newaxis]
    src = img.data.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.clip(round_half_away(out), 0, 255).astype(np.uint8)
    return ImageBuffer(out)


def alpha_composite(
    fg: ImageBuffer, bg: ImageBuffer, origin: tuple[int, int]
) -> ImageBuffer:
    """Blend an RGBA foreground over an RGB background at ``origin``.

    out = alpha * fg + (1 - alpha) * bg per pixel; the foreground must fit
    fully inside the background.
    """
    if fg.channels is not Channels.RGBA:
        raise NoAlphaChannelError("foreground must be RGBA")
    if bg.channels is not Channels.RGB:
        raise ValueError("background must be RGB")
    x, y = origin
    if x < 0 or y < 0 or x + fg.width > bg.width or y + fg.height > bg.height:
        raise ForegroundOutOfBoundsError(
            f"{fg.width}x{fg.height} foreground at ({x}, {y}) "
            f"does not fit in {bg.width}x{bg.height} background"
        )
    out = bg.data.copy()
    region = out[y : y + fg.height, x : x + fg.width].astype(np.float64)
    alpha = fg.alpha.astype(np.float64)[:, :, np.newaxis] / 255.0
    fg_rgb = fg.data[:, :, :3].astype(np.float64)
    blended = round_half_away(alpha * fg_rgb + (1.0 - alpha) * region)
    out[y : y + fg.height, x : x + fg.width] = np.clip(blended, 0, 255).astype(np.uint8)
    return ImageBuffer(out)


def feather_mask(mask: AlphaMask, k: int, sigma: Optional[float] = None) -> AlphaMask:
    """Soften mask boundaries with a Gaussian so pasted edges blend.

    Only coverage values change; interior plateaus (pixels whose k x k
    neighborhood is constant) are preserved by kernel normalization.
    """
    if sigma is None:
        sigma = auto_sigma(k)
    kern = gaussian_kernel(k, sigma)
    blurred = _correlate_float(mask.values.astype(np.float64), kern.weights)
    return AlphaMask(np.clip(round_half_away(blurred), 0, 255).astype(np.uint8))


def tight_bbox(mask: AlphaMask, threshold: int = 0) -> PixelRect:
    """Smallest half-open rect containing every pixel with coverage > threshold."""
    ys, xs = np.nonzero(mask.values > threshold)
    if len(xs) == 0:
        raise EmptyMaskError(f"no pixel exceeds threshold {threshold}")
    return PixelRect(
        int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1
    )


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def _to_gray_float(img: ImageBuffer) -> np.ndarray:
    if img.channels is Channels.GRAY:
        return img.data[:, :, 0].astype(np.float64)
    rgb = img.data[:, :, :3].astype(np.float64)
    return 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]


def canny(img: ImageBuffer, low: float, high: float) -> ImageBuffer:
    """Binary edge map via smooth / gradient / thinning / hysteresis.

    Pipeline: 5x5 Gaussian smoothing (sigma 1.4), Sobel gradients, thinning
    along the quantized gradient direction (4 sectors), then double-threshold
    hysteresis: magnitude >= high seeds an edge, > low extends one through
    8-connected neighbors. Thresholds are in gradient-magnitude units.
    Output is GRAY with values in {0, 255}.
    """
    if not (0.0 <= low < high):
        raise BadThresholdsError(f"need 0 <= low < high, got low={low} high={high}")

    gray = _to_gray_float(img)
    smoothed = _correlate_float(gray, gaussian_kernel(5, 1.4).weights)
    gx = _correlate_float(smoothed, _SOBEL_X)
    gy = _correlate_float(smoothed, _SOBEL_Y)
    mag = np.hypot(gx, gy)
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0

    # neighbor pairs along the gradient direction, outside treated as 0
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    east = padded[1 : h + 1, 2 : w + 2]
    west = padded[1 : h + 1, 0:w]
    south = padded[2 : h + 2, 1 : w + 1]
    north = padded[0:h, 1 : w + 1]
    south_east = padded[2 : h + 2, 2 : w + 2]
    north_west = padded[0:h, 0:w]
    south_west = padded[2 : h + 2, 0:w]
    north_east = padded[0:h, 2 : w + 2]

    sector_horiz = (angle < 22.5) | (angle >= 157.5)
    sector_diag1 = (angle >= 22.5) & (angle < 67.5)
    sector_vert = (angle >= 67.5) & (angle < 112.5)

    n1 = np.where(
        sector_horiz, east, np.where(sector_diag1, south_east, np.where(sector_vert, south, south_west))
    )
    n2 = np.where(
        sector_horiz, west, np.where(sector_diag1, north_west, np.where(sector_vert, north, north_east))
    )
    thin = np.where((mag >= n1) & (mag >= n2), mag, 0.0)

    strong = thin >= high
    weak = (thin > low) & ~strong

    # hysteresis: grow strong edges into adjacent weak pixels to fixpoint
    edges = strong.copy()
    while True:
        grown = np.pad(edges, 1, mode="constant")
        neighbor_hit = np.zeros_like(edges)
        for dy in (0, 1, 2):
            for dx in (0, 1, 2):
                if dy == 1 and dx == 1:
                    continue
                neighbor_hit |= grown[dy : dy + h, dx : dx + w]
        promoted = weak & neighbor_hit & ~edges
        if not promoted.any():
            break
        edges |= promoted

    return ImageBuffer((edges.astype(np.uint8) * 255))
