"""Bitmap loading, background detection and letter-region extraction."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from cloudecode import _kernels
from cloudecode.errors import DecodeError

logger = logging.getLogger(__name__)


class Color(NamedTuple):
    r: int
    g: int
    b: int

    @classmethod
    def of(cls, value) -> "Color":
        r, g, b = (int(v) for v in value)
        for v in (r, g, b):
            if not 0 <= v <= 255:
                raise ValueError(f"channel value {v} outside [0, 255]")
        return cls(r, g, b)


WHITE = Color(255, 255, 255)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """An opaque RGB image; `pixels` is a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise DecodeError(f"expected an (h, w, 3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DecodeError("image has a zero dimension")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise DecodeError("pixel values outside [0, 255]")
            object.__setattr__(self, "pixels", px.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, color=WHITE) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = tuple(color)
        return cls(px)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool((self.pixels == other.pixels).all())

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ComponentRegion:
    """A same-colour letter region.

    `mask` is a boolean array over the bbox (height x width); `parts` lists the
    indices of the raw connected components this region was built from.
    """

    bbox: tuple[int, int, int, int]
    mask: np.ndarray
    mean_color: Color
    parts: tuple[int, ...] = field(default=())

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    @property
    def x0(self) -> int:
        return self.bbox[0]

    @property
    def y0(self) -> int:
        return self.bbox[1]

    @property
    def width(self) -> int:
        return self.bbox[2]

    @property
    def height(self) -> int:
        return self.bbox[3]

    def pixels(self) -> set[tuple[int, int]]:
        """Mask as a set of absolute (x, y) coordinates."""
        ys, xs = np.nonzero(self.mask)
        return set(zip((xs + self.x0).tolist(), (ys + self.y0).tolist()))

    def __eq__(self, other):
        if not isinstance(other, ComponentRegion):
            return NotImplemented
        return (self.bbox == other.bbox and self.mean_color == other.mean_color
                and self.parts == other.parts and bool((self.mask == other.mask).all()))

    __hash__ = None


def load_image(path: str | Path) -> RasterImage:
    """Read a PNG file, compositing any alpha channel over opaque white."""
    from PIL import Image, UnidentifiedImageError

    path = Path(path)
    with open(path, "rb") as fh:  # OSError propagates as the I/O failure
        try:
            im = Image.open(fh)
            im.load()
        except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
            raise DecodeError(f"{path}: not a decodable image ({exc})") from exc
        except OSError as exc:
            raise DecodeError(f"{path}: truncated or corrupt PNG ({exc})") from exc
    if im.format != "PNG":
        raise DecodeError(f"{path}: expected PNG, got {im.format}")
    if im.width == 0 or im.height == 0:
        raise DecodeError(f"{path}: zero-dimension image")
    if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
        rgba = im.convert("RGBA")
        base = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        im = Image.alpha_composite(base, rgba)
    return RasterImage(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())


def save_image(image: RasterImage, path: str | Path) -> None:
    from PIL import Image

    Image.fromarray(image.pixels, mode="RGB").save(path, format="PNG")


def detect_background(image: RasterImage) -> Color:
    """Most frequent colour on the outermost pixel ring; ties go to the smallest (r, g, b)."""
    px = image.pixels.astype(np.int64)
    h, w = image.height, image.width
    ring = np.zeros((h, w), dtype=bool)
    ring[0, :] = ring[-1, :] = True
    ring[:, 0] = ring[:, -1] = True
    border = px[ring]
    packed = (border[:, 0] << 16) | (border[:, 1] << 8) | border[:, 2]
    values, counts = np.unique(packed, return_counts=True)
    best = int(values[np.argmax(counts)])  # np.unique sorts, argmax takes the first max
    return Color(best >> 16, (best >> 8) & 255, best & 255)


def foreground_mask(image: RasterImage, background, color_tolerance: float) -> np.ndarray:
    dist = np.abs(image.pixels.astype(np.int16) - np.asarray(background, dtype=np.int16)).max(axis=-1)
    return dist > color_tolerance


def label_image(image: RasterImage, background, connectivity: int = 8,
                color_tolerance: float = 48, use_numba: bool | None = None):
    """Raw label map (-1 = background) and label count, before noise filtering."""
    fg = foreground_mask(image, background, color_tolerance)
    return _kernels.label_pixels(image.pixels, fg, connectivity, color_tolerance, use_numba)


def extract_components(image: RasterImage, background, connectivity: int = 8,
                       color_tolerance: float = 48, min_pixel_count: int = 4,
                       use_numba: bool | None = None) -> list[ComponentRegion]:
    """Connected same-colour foreground regions, sorted by (min_y, min_x).

    Regions with fewer than `min_pixel_count` pixels are dropped as noise.
    """
    if color_tolerance < 0:
        raise ValueError("color_tolerance must be >= 0")
    from scipy import ndimage

    labels, n = label_image(image, background, connectivity, color_tolerance, use_numba)
    if n == 0:
        return []
    slices = ndimage.find_objects(labels + 1, max_label=n)
    found = []
    for lab, (sy, sx) in enumerate(slices):
        mask = labels[sy, sx] == lab
        count = int(mask.sum())
        if count < min_pixel_count:
            continue
        mean = image.pixels[sy, sx][mask].mean(axis=0)
        bbox = (sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start)
        found.append((sy.start, sx.start, lab, bbox, mask, Color.of(np.rint(mean))))
    found.sort(key=lambda t: t[:3])
    logger.debug("extracted %d components (%d raw labels)", len(found), n)
    return [ComponentRegion(bbox, mask, color, (i,))
            for i, (_, _, _, bbox, mask, color) in enumerate(found)]


def color_distance(a, b) -> int:
    return max(abs(int(x) - int(y)) for x, y in zip(a, b))


def union_regions(regions: list[ComponentRegion]) -> ComponentRegion:
    """Merge regions into one: union mask, recomputed bbox, area-weighted mean colour."""
    x0 = min(r.x0 for r in regions)
    y0 = min(r.y0 for r in regions)
    x1 = max(r.x0 + r.width for r in regions)
    y1 = max(r.y0 + r.height for r in regions)
    mask = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    total = 0
    acc = np.zeros(3)
    for r in regions:
        mask[r.y0 - y0:r.y0 - y0 + r.height, r.x0 - x0:r.x0 - x0 + r.width] |= r.mask
        c = r.pixel_count
        total += c
        acc += c * np.asarray(r.mean_color, dtype=float)
    parts = tuple(sorted(p for r in regions for p in r.parts))
    return ComponentRegion((x0, y0, x1 - x0, y1 - y0), mask, Color.of(np.rint(acc / total)), parts)


MARK_FILL = 0.6


def merge_diacritics(components: list[ComponentRegion], max_gap: int, color_tolerance: float = 48,
                     axis: str = "vertical", gap_ratio: float = 0.0, mark_ratio: float | None = None,
                     accept: Callable[[ComponentRegion, ComponentRegion, ComponentRegion], bool] | None = None,
                     ) -> list[ComponentRegion]:
    """Re-attach detached marks (the dots of i and j) to their letter bodies.

    Two regions merge when their extents overlap by >= 50% of the narrower
    across `axis`, they are disjoint along it with a gap of at most
    max(max_gap, gap_ratio * longer extent along axis), and their mean colours
    are within `color_tolerance`. With `mark_ratio` set, the first region
    (above for "vertical", left for "horizontal", i.e. text turned a quarter
    turn counter-clockwise) must be a mark on the second: at most
    `mark_ratio` of its pixels, at most half its extent along the axis and
    three quarters across it, and fill at least MARK_FILL of its own bbox. `accept(first, second, merged)` can veto a
    merge. Repeats until nothing merges.
    """
    if axis not in ("vertical", "horizontal"):
        raise ValueError(f"axis must be 'vertical' or 'horizontal', got {axis!r}")
    regions = list(components)
    while True:
        pairs = _merge_candidates(regions, max_gap, color_tolerance, axis, gap_ratio, mark_ratio)
        taken: set[int] = set()
        merged = []
        for _, i, j in pairs:
            if i in taken or j in taken:
                continue
            union = union_regions([regions[i], regions[j]])
            if accept is not None and not accept(regions[i], regions[j], union):
                continue
            taken.update((i, j))
            merged.append(union)
        if not merged:
            break
        regions = [r for k, r in enumerate(regions) if k not in taken] + merged
    regions.sort(key=lambda r: (r.y0, r.x0, r.parts))
    return regions


def _merge_candidates(regions, max_gap, tol, axis, gap_ratio, mark_ratio):
    n = len(regions)
    if n < 2:
        return []
    b = np.array([r.bbox for r in regions], dtype=np.int64)
    if axis == "vertical":
        lo_a, ext_a, lo_s, ext_s = b[:, 0], b[:, 2], b[:, 1], b[:, 3]
    else:
        lo_a, ext_a, lo_s, ext_s = b[:, 1], b[:, 3], b[:, 0], b[:, 2]
    # overlap across the stacking axis
    hi_a = lo_a + ext_a
    overlap = np.minimum(hi_a[:, None], hi_a[None, :]) - np.maximum(lo_a[:, None], lo_a[None, :])
    narrow = np.minimum(ext_a[:, None], ext_a[None, :])
    ok = overlap * 2 >= narrow
    # gap along it: j strictly after i
    gap = lo_s[None, :] - (lo_s + ext_s)[:, None]
    allowed = np.maximum(max_gap, gap_ratio * np.maximum(ext_s[:, None], ext_s[None, :]))
    ok &= (gap >= 0) & (gap <= allowed)
    colors = np.array([r.mean_color for r in regions], dtype=np.int64)
    cdist = np.abs(colors[:, None, :] - colors[None, :, :]).max(axis=-1)
    ok &= cdist <= tol
    if mark_ratio is not None:
        # i must be a mark on body j: a solid blob, few pixels, short along the axis, narrow across it
        counts = np.array([r.pixel_count for r in regions], dtype=np.float64)
        ok &= (counts >= MARK_FILL * ext_a * ext_s)[:, None]
        ok &= counts[:, None] <= mark_ratio * counts[None, :]
        ok &= 2 * ext_s[:, None] <= ext_s[None, :]
        ok &= 4 * ext_a[:, None] <= 3 * ext_a[None, :]
    ii, jj = np.nonzero(ok)
    return sorted(zip(gap[ii, jj].tolist(), ii.tolist(), jj.tolist()))
