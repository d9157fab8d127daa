"""Labelled 3x3 grid overlay for the region-wise strategy.

The overlay is pure numpy over an RGB byte buffer, with digits drawn from an
embedded bitmap font, so output bytes do not depend on installed fonts.
Pillow is only used at the edges for decoding input files and encoding PNG.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .domain import GRID_CELLS
from .errors import OverlayError

RGB = tuple[int, int, int]
Rect = tuple[int, int, int, int]

# 5x7 digit glyphs, '#' = ink.
_GLYPHS = {
    1: ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    2: (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    3: ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    4: ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    5: ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    6: ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    7: ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    8: (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    9: (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
}
GLYPH_W, GLYPH_H = 5, 7
# Label box = glyph plus one glyph-pixel of padding on every side.
BOX_W, BOX_H = GLYPH_W + 2, GLYPH_H + 2


def glyph_mask(digit: int) -> np.ndarray:
    rows = _GLYPHS[digit]
    return np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)


@dataclass(frozen=True)
class RasterImage:
    width: int
    height: int
    pixels: bytes

    def __post_init__(self) -> None:
        if self.width < 3 or self.height < 3:
            raise ValueError(f"image must be at least 3x3, got {self.width}x{self.height}")
        if len(self.pixels) != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer has {len(self.pixels)} bytes, expected {self.width * self.height * 3}"
            )

    @classmethod
    def from_array(cls, array: np.ndarray) -> RasterImage:
        if array.ndim != 3 or array.shape[2] != 3:
            raise ValueError(f"expected an HxWx3 array, got shape {array.shape}")
        arr = np.ascontiguousarray(array, dtype=np.uint8)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only HxWx3 view of the pixel buffer."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)


@dataclass(frozen=True)
class OverlayStyle:
    line_color: RGB = (255, 0, 0)
    line_thickness: int = 3
    label_color: RGB = (255, 255, 255)
    label_background: RGB = (0, 0, 0)
    label_height_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.line_thickness < 1:
            raise ValueError("line_thickness must be >= 1")
        if not 0 < self.label_height_fraction < 1 / 3:
            raise ValueError("label_height_fraction must be in (0, 1/3)")
        for name in ("line_color", "label_color", "label_background"):
            color = getattr(self, name)
            if len(color) != 3 or not all(0 <= int(c) <= 255 for c in color):
                raise ValueError(f"{name} must be an RGB triple of 0..255 values")


DEFAULT_STYLE = OverlayStyle()


def _boundaries(size: int) -> list[int]:
    return [k * size // 3 for k in range(4)]


def cell_bounds(cell_index: int, width: int, height: int) -> Rect:
    """Half-open ``(x, y, w, h)`` rectangle of a grid cell, numbered row-major from 1."""
    if width < 3 or height < 3:
        raise ValueError(f"image must be at least 3x3, got {width}x{height}")
    if isinstance(cell_index, bool) or cell_index not in GRID_CELLS:
        raise ValueError(f"cell index must be in 1..9, got {cell_index!r}")
    row, col = divmod(cell_index - 1, 3)
    xs, ys = _boundaries(width), _boundaries(height)
    return xs[col], ys[row], xs[col + 1] - xs[col], ys[row + 1] - ys[row]


def line_band(boundary: int, thickness: int, size: int) -> tuple[int, int]:
    """Half-open pixel span covered by a grid line centred on ``boundary``."""
    start = max(0, boundary - thickness // 2)
    return start, min(size, boundary - thickness // 2 + thickness)


def _label_layout(width: int, height: int, style: OverlayStyle) -> tuple[int, list[tuple[int, int]]] | None:
    """Glyph scale and label-box origin per cell, or None if the labels cannot fit."""
    t = style.line_thickness
    into_next = t - t // 2  # how far a line reaches past its boundary
    into_prev = t // 2
    origins: list[tuple[int, int]] = []
    fit_scale = None
    min_cell_h = None
    for idx in GRID_CELLS:
        x, y, w, h = cell_bounds(idx, width, height)
        left = into_next if x > 0 else 0
        top = into_next if y > 0 else 0
        right = into_prev if x + w < width else 0
        bottom = into_prev if y + h < height else 0
        avail_w = w - left - right
        avail_h = h - top - bottom
        # label height must stay strictly below the cell height
        s = min(avail_w // BOX_W, avail_h // BOX_H, (h - 1) // BOX_H)
        fit_scale = s if fit_scale is None else min(fit_scale, s)
        min_cell_h = h if min_cell_h is None else min(min_cell_h, h)
        origins.append((x + left, y + top))
    if fit_scale is None or fit_scale < 1:
        return None
    wanted = int(style.label_height_fraction * min_cell_h) // BOX_H
    return max(1, min(wanted, fit_scale)), origins


def minimum_size(style: OverlayStyle = DEFAULT_STYLE) -> tuple[int, int]:
    """Smallest (width, height) for which every label fits.

    Width and height constrain the layout independently, so each is found
    with the other dimension held large.
    """
    big = 100_000
    w = next(v for v in range(3, big) if _label_layout(v, big, style) is not None)
    h = next(v for v in range(3, big) if _label_layout(big, v, style) is not None)
    return w, h


def label_boxes(width: int, height: int, style: OverlayStyle = DEFAULT_STYLE) -> dict[int, Rect]:
    """Rectangle of each cell's label box."""
    layout = _label_layout(width, height, style)
    if layout is None:
        min_w, min_h = minimum_size(style)
        raise OverlayError(
            f"image {width}x{height} is too small for the overlay labels; "
            f"minimum size is {min_w}x{min_h} pixels"
        )
    scale, origins = layout
    return {idx: (ox, oy, BOX_W * scale, BOX_H * scale) for idx, (ox, oy) in zip(GRID_CELLS, origins)}


def overlay_grid(image: RasterImage, style: OverlayStyle = DEFAULT_STYLE) -> RasterImage:
    """Draw the 3x3 grid lines and a numeral label in each cell's top-left corner."""
    w, h = image.width, image.height
    boxes = label_boxes(w, h, style)
    out = image.to_array().copy()
    t = style.line_thickness
    line = np.array(style.line_color, dtype=np.uint8)
    for b in _boundaries(w)[1:3]:
        x0, x1 = line_band(b, t, w)
        out[:, x0:x1] = line
    for b in _boundaries(h)[1:3]:
        y0, y1 = line_band(b, t, h)
        out[y0:y1, :] = line

    bg = np.array(style.label_background, dtype=np.uint8)
    ink = np.array(style.label_color, dtype=np.uint8)
    for idx, (bx, by, bw, bh) in boxes.items():
        scale = bw // BOX_W
        out[by:by + bh, bx:bx + bw] = bg
        mask = np.kron(glyph_mask(idx), np.ones((scale, scale), dtype=bool))
        gy, gx = by + scale, bx + scale
        region = out[gy:gy + mask.shape[0], gx:gx + mask.shape[1]]
        region[mask] = ink
    return RasterImage.from_array(out)


def decode_image(data: bytes) -> RasterImage:
    """Decode PNG/JPEG bytes to RGB; alpha is composited over black."""
    if not data:
        raise ValueError("empty image payload")
    with Image.open(io.BytesIO(data)) as im:
        im.load()
        if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
            rgba = np.asarray(im.convert("RGBA"), dtype=np.uint16)
            alpha = rgba[..., 3:4]
            rgb = ((rgba[..., :3] * alpha + 127) // 255).astype(np.uint8)
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return RasterImage.from_array(rgb)


def read_image(path: str | Path) -> RasterImage:
    return decode_image(Path(path).read_bytes())


def encode_png(image: RasterImage) -> bytes:
    """Lossless PNG without metadata chunks; fixed settings keep the bytes stable."""
    im = Image.frombytes("RGB", (image.width, image.height), image.pixels)
    buf = io.BytesIO()
    im.save(buf, format="PNG", compress_level=6, optimize=False)
    return buf.getvalue()


def overlay_png(data: bytes, style: OverlayStyle = DEFAULT_STYLE) -> bytes:
    """Decode, overlay and re-encode as PNG; the payload sent for region-wise prompts."""
    return encode_png(overlay_grid(decode_image(data), style))
