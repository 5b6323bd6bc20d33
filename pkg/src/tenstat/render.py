"""Slice rendering: windowing, color lookup, orientation, and PNG export.

Volumes are indexed (i, j, k) with +i toward the subject's right, +j
anterior, +k superior.  Axial and coronal slices are displayed in the
radiological convention: the subject's right appears on the image's left,
with "R" and "L" burned in near the edges so the orientation is explicit
on every exported image.  Sagittal slices show anterior on the left and
superior on top.

Rendering is deterministic: fixed lookup tables, fixed label positions,
and a PNG writer with fixed settings, so one (volume, axis, index, window)
tuple always produces the same bytes.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

AXIS_FOR_NAME = {"sagittal": 0, "coronal": 1, "axial": 2}

# 5x7 bitmap glyphs, drawn as plain white pixel patterns so they survive
# nearest-neighbour scaling and stay legible on grayscale backgrounds.
_GLYPHS = {
    "L": (
        "X....",
        "X....",
        "X....",
        "X....",
        "X....",
        "X....",
        "XXXXX",
    ),
    "R": (
        "XXXX.",
        "X...X",
        "X...X",
        "XXXX.",
        "X.X..",
        "X..X.",
        "X...X",
    ),
}
_GLYPH_W, _GLYPH_H = 5, 7
_LABEL_MARGIN = 2

# Control points (position in [0,1], rgb) interpolated to 256-entry tables.
_COLORMAP_POINTS: dict[str, tuple[tuple[float, tuple[int, int, int]], ...]] = {
    "gray": ((0.0, (0, 0, 0)), (1.0, (255, 255, 255))),
    "gray_r": ((0.0, (255, 255, 255)), (1.0, (0, 0, 0))),
    "hot": (
        (0.0, (10, 0, 0)),
        (0.375, (230, 0, 0)),
        (0.75, (255, 210, 0)),
        (1.0, (255, 255, 255)),
    ),
    "diverging": (
        (0.0, (5, 48, 97)),
        (0.25, (116, 173, 209)),
        (0.5, (247, 247, 247)),
        (0.75, (244, 165, 130)),
        (1.0, (103, 0, 31)),
    ),
}


def colormap_table(name: str) -> np.ndarray:
    """256x3 uint8 lookup table for a named colormap."""
    points = _COLORMAP_POINTS.get(name)
    if points is None:
        raise ValueError(f"unknown colormap {name!r}; available: {sorted(_COLORMAP_POINTS)}")
    xs = np.array([p for p, _ in points])
    rgb = np.array([c for _, c in points], dtype=np.float64)
    grid = np.linspace(0.0, 1.0, 256)
    table = np.stack([np.interp(grid, xs, rgb[:, c]) for c in range(3)], axis=1)
    return np.round(table).astype(np.uint8)


def check_window(window: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(window[0]), float(window[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"window must satisfy lo < hi with finite bounds, got ({lo}, {hi})")
    return lo, hi


def extract_slice(volume: np.ndarray, axis: int, index: int) -> np.ndarray:
    volume = np.asarray(volume)
    if volume.ndim < 3:
        raise ValueError(f"expected a 3-D volume, got shape {volume.shape}")
    if axis not in (0, 1, 2):
        raise ValueError(f"slice axis must be 0, 1, or 2, got {axis}")
    if not 0 <= index < volume.shape[axis]:
        raise ValueError(f"slice index {index} out of range for axis {axis} with size {volume.shape[axis]}")
    return np.take(volume, index, axis=axis)


def orient_slice(slice2d: np.ndarray, axis: int) -> np.ndarray:
    """Index-space slice to display rows/columns.

    For every axis this is a transpose of the two in-plane axes followed by
    flips of both: it puts superior (or anterior, for axial) at the top and
    subject-right (anterior for sagittal) at the image's left.
    """
    if axis not in (0, 1, 2):
        raise ValueError(f"slice axis must be 0, 1, or 2, got {axis}")
    return np.swapaxes(slice2d, 0, 1)[::-1, ::-1]


def scale_image(image: np.ndarray, scale: int) -> np.ndarray:
    if scale < 1 or scale != int(scale):
        raise ValueError(f"scale must be a positive integer, got {scale}")
    if scale == 1:
        return image
    return np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)


def _burn_glyph(image: np.ndarray, glyph: str, top: int, left: int, scale: int) -> None:
    rows = _GLYPHS[glyph]
    for r, row in enumerate(rows):
        for c, cell in enumerate(row):
            if cell == "X":
                y0, x0 = top + r * scale, left + c * scale
                image[y0 : y0 + scale, x0 : x0 + scale, :3] = 255
                if image.shape[2] == 4:
                    image[y0 : y0 + scale, x0 : x0 + scale, 3] = 255


def label_positions(height: int, width: int, scale: int = 1) -> dict[str, tuple[int, int]] | None:
    """(top, left) pixel of each burned glyph, or None when they cannot fit."""
    gh, gw, margin = _GLYPH_H * scale, _GLYPH_W * scale, _LABEL_MARGIN * scale
    if height < gh + 2 * margin or width < 2 * (gw + 2 * margin):
        return None
    top = (height - gh) // 2
    return {"R": (top, margin), "L": (top, width - margin - gw)}


def burn_orientation_labels(image: np.ndarray, axis: int, scale: int = 1) -> np.ndarray:
    """Stamps R (image-left) and L (image-right) on axial/coronal images."""
    if axis == 0:
        return image
    positions = label_positions(image.shape[0], image.shape[1], scale)
    if positions is None:
        return image
    for glyph, (top, left) in positions.items():
        _burn_glyph(image, glyph, top, left, scale)
    return image


def render_scalar_slice(
    volume: np.ndarray,
    axis: int,
    index: int,
    window: tuple[float, float],
    colormap: str = "gray",
    scale: int = 1,
    labels: bool = True,
) -> np.ndarray:
    """Windowed, colored, oriented RGB image (rows, cols, 3) of one slice."""
    lo, hi = check_window(window)
    table = colormap_table(colormap)
    plane = extract_slice(np.asarray(volume, dtype=np.float64), axis, index)
    plane = np.nan_to_num(plane, nan=lo, posinf=hi, neginf=lo)
    normalized = np.clip((plane - lo) / (hi - lo), 0.0, 1.0)
    indices = np.round(normalized * 255).astype(np.intp)
    image = orient_slice(table[indices], axis)
    image = scale_image(np.ascontiguousarray(image), scale)
    if labels:
        burn_orientation_labels(image, axis, scale)
    return image


def encode_png(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] not in (3, 4):
        raise ValueError(f"expected an (rows, cols, 3|4) image, got shape {image.shape}")
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB" if image.shape[2] == 3 else "RGBA").save(buf, format="PNG")
    return buf.getvalue()


def export_slice_png(
    volume: np.ndarray,
    axis: int,
    index: int,
    window: tuple[float, float],
    path: str | Path | None = None,
    colormap: str = "gray",
    scale: int = 1,
    labels: bool = True,
) -> bytes:
    """Renders one scalar slice to PNG bytes, optionally writing them."""
    image = render_scalar_slice(volume, axis, index, window, colormap, scale, labels)
    data = encode_png(image)
    if path is not None:
        Path(path).write_bytes(data)
    return data


def export_composite_png(
    image: np.ndarray,
    axis: int,
    path: str | Path | None = None,
    scale: int = 1,
    labels: bool = True,
) -> bytes:
    """Orients and exports an already-colored index-space slice (rows, cols, 3|4)."""
    oriented = scale_image(np.ascontiguousarray(orient_slice(image, axis)), scale)
    if labels:
        burn_orientation_labels(oriented, axis, scale)
    data = encode_png(oriented)
    if path is not None:
        Path(path).write_bytes(data)
    return data
