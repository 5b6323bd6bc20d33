"""Comparison of up to three binary result masks.

Region statistics follow exact subset membership (a Venn partition of the
union).  Overlap colors are the CIE Lab arithmetic mean of the member
colors with lightness and chroma attenuated by 0.75 per extra mask, so
deeper overlaps read as darker, grayer shades.  Contours trace voxel
edges at pixel resolution.  All color math is display-only; statistics
never pass through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .enhance import ClusterTable, connected_components

MASK_LETTERS = ("A", "B", "C")
REGION_ORDER = ("A", "B", "C", "AB", "AC", "BC", "ABC")

# sRGB <-> CIE Lab, D65 white point.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0
_ATTENUATION = 0.75


def srgb_to_lab(color) -> np.ndarray:
    c = np.asarray(color, dtype=np.float64) / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    t = (_RGB_TO_XYZ @ linear) / _WHITE
    f = np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)
    return np.array([116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])])


def lab_to_srgb(lab) -> tuple[int, int, int]:
    """Back to 8-bit sRGB with out-of-gamut values clamped per channel."""
    lightness, a, b = (float(v) for v in lab)
    fy = (lightness + 16.0) / 116.0
    f = np.array([fy + a / 500.0, fy, fy - b / 200.0])
    t = np.where(f > _DELTA, f**3, 3.0 * _DELTA**2 * (f - 4.0 / 29.0))
    linear = _XYZ_TO_RGB @ (t * _WHITE)
    c = np.where(
        linear <= 0.0031308,
        12.92 * linear,
        1.055 * np.clip(linear, 0.0, None) ** (1.0 / 2.4) - 0.055,
    )
    scaled = np.clip(np.round(c * 255.0), 0.0, 255.0)
    return tuple(int(v) for v in scaled)


def blend_colors(colors) -> tuple[int, int, int]:
    """Lab mean of 1-3 sRGB colors, L and C scaled by 0.75 per extra color."""
    if not 1 <= len(colors) <= 3:
        raise ValueError(f"expected 1 to 3 colors, got {len(colors)}")
    labs = np.array([srgb_to_lab(c) for c in colors])
    lightness, a, b = labs.mean(axis=0)
    chroma = math.hypot(a, b)
    hue = math.atan2(b, a)
    scale = _ATTENUATION ** (len(colors) - 1)
    lightness *= scale
    chroma *= scale
    return lab_to_srgb((lightness, chroma * math.cos(hue), chroma * math.sin(hue)))


def darken_color(color, fraction: float = 0.2) -> tuple[int, int, int]:
    """The same hue at (1 - fraction) of the lightness, for contour strokes."""
    lab = srgb_to_lab(color)
    lab[0] *= 1.0 - fraction
    return lab_to_srgb(lab)


# ---------------------------------------------------------------------------
# Venn partition


def venn_counts(masks) -> dict[str, int]:
    """Voxel count per exact-membership region of up to three masks.

    Keys name the member masks by letter ("A", "AB", ...); a voxel counts
    toward exactly one region, so the values sum to the union size.
    """
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if not 1 <= len(masks) <= 3:
        raise ValueError(f"expected 1 to 3 masks, got {len(masks)}")
    shape = masks[0].shape
    for i, m in enumerate(masks[1:], start=1):
        if m.shape != shape:
            raise ValueError(f"mask {i} grid {m.shape} does not match mask 0 grid {shape}")

    code = np.zeros(shape, dtype=np.int8)
    for i, m in enumerate(masks):
        code |= m.astype(np.int8) << i
    histogram = np.bincount(code.ravel(), minlength=8)
    counts = {}
    for label in _region_labels(len(masks)):
        bits = sum(1 << MASK_LETTERS.index(ch) for ch in label)
        counts[label] = int(histogram[bits])
    return counts


def _region_labels(n_masks: int) -> list[str]:
    return [label for label in REGION_ORDER if all(MASK_LETTERS.index(ch) < n_masks for ch in label)]


# ---------------------------------------------------------------------------
# Comparison container


@dataclass
class MaskLayer:
    name: str
    mask: np.ndarray
    color: tuple[int, int, int]
    visible: bool = True

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 3:
            raise ValueError(f"mask must be a 3-D volume, got shape {self.mask.shape}")
        self.color = tuple(int(v) for v in self.color)
        if len(self.color) != 3 or any(not 0 <= v <= 255 for v in self.color):
            raise ValueError(f"color must be three 8-bit channels, got {self.color}")


@dataclass
class OverlayComparison:
    layers: list[MaskLayer]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if not 1 <= len(self.layers) <= 3:
            raise ValueError(f"expected 1 to 3 mask layers, got {len(self.layers)}")
        shape = self.layers[0].mask.shape
        for layer in self.layers[1:]:
            if layer.mask.shape != shape:
                raise ValueError(
                    f"layer {layer.name!r} grid {layer.mask.shape} does not match {shape}"
                )

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.layers[0].mask.shape

    def region_counts(self) -> dict[str, int]:
        return venn_counts([layer.mask for layer in self.layers])

    def region_color(self, label: str) -> tuple[int, int, int]:
        members = [self.layers[MASK_LETTERS.index(ch)].color for ch in label]
        return blend_colors(members)

    def blended_colors(self) -> dict[str, tuple[int, int, int]]:
        return {label: self.region_color(label) for label in _region_labels(len(self.layers))}

    def consensus_mask(self) -> np.ndarray:
        """Voxels inside every loaded mask (visibility does not matter here)."""
        out = self.layers[0].mask.copy()
        for layer in self.layers[1:]:
            out &= layer.mask
        return out

    def consensus_clusters(self, connectivity: int = 26) -> tuple[np.ndarray, ClusterTable]:
        return connected_components(
            self.consensus_mask(), connectivity=connectivity, spacing=self.spacing
        )

    def to_json_dict(self) -> dict:
        return {
            "masks": [
                {
                    "name": layer.name,
                    "letter": MASK_LETTERS[i],
                    "color": list(layer.color),
                    "voxels": int(layer.mask.sum()),
                    "visible": layer.visible,
                }
                for i, layer in enumerate(self.layers)
            ],
            "regions": self.region_counts(),
            "region_colors": {k: list(v) for k, v in self.blended_colors().items()},
        }


# ---------------------------------------------------------------------------
# Contours: voxel-edge boundary loops of a 2-D mask slice


def _slice_2d(volume: np.ndarray, axis: int, index: int) -> np.ndarray:
    volume = np.asarray(volume)
    if not 0 <= axis <= 2:
        raise ValueError(f"slice axis must be 0, 1, or 2, got {axis}")
    if not 0 <= index < volume.shape[axis]:
        raise ValueError(f"slice index {index} out of range for axis {axis} of size {volume.shape[axis]}")
    return np.take(volume, index, axis=axis)


def extract_contours(mask: np.ndarray, slice_axis: int, slice_index: int) -> list[np.ndarray]:
    """Closed boundary polylines of one mask slice, on voxel-corner points.

    Each polyline is (n, 2) in the slice's own (row, col) coordinates with
    the first point repeated at the end; pixel (u, v) spans corners (u, v)
    to (u+1, v+1).  Loops are directed with the interior on the left, and
    pixels meeting only at a corner produce separate loops.
    """
    grid = _slice_2d(np.asarray(mask, dtype=bool), slice_axis, slice_index)
    return trace_boundary_loops(grid)


def trace_boundary_loops(grid: np.ndarray) -> list[np.ndarray]:
    grid = np.asarray(grid, dtype=bool)
    padded = np.zeros((grid.shape[0] + 2, grid.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = grid

    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    for u, v in np.argwhere(grid):
        u, v = int(u), int(v)
        if not padded[u, v + 1]:       # (u-1, v) outside
            add((u, v + 1), (u, v))
        if not padded[u + 2, v + 1]:   # (u+1, v) outside
            add((u + 1, v), (u + 1, v + 1))
        if not padded[u + 1, v]:       # (u, v-1) outside
            add((u, v), (u + 1, v))
        if not padded[u + 1, v + 2]:   # (u, v+1) outside
            add((u + 1, v + 1), (u, v + 1))

    for outs in edges.values():
        outs.sort()

    loops = []
    for start in sorted(edges):
        while edges.get(start):
            loop = [start]
            current = start
            incoming = None
            while True:
                candidates = edges[current]
                if incoming is None or len(candidates) == 1:
                    nxt = candidates.pop(0)
                else:
                    # Saddle corner: prefer the sharpest left turn so loops
                    # that only touch at this corner stay separate.
                    din = (current[0] - incoming[0], current[1] - incoming[1])
                    def turn(cand):
                        dout = (cand[0] - current[0], cand[1] - current[1])
                        return din[0] * dout[1] - din[1] * dout[0]
                    nxt = max(candidates, key=turn)
                    candidates.remove(nxt)
                loop.append(nxt)
                if not edges[current]:
                    del edges[current]
                if nxt == start:
                    break
                incoming = current
                current = nxt
            loops.append(np.array(loop, dtype=np.float64))
    return loops


# ---------------------------------------------------------------------------
# Slice compositing


def composite_slice(
    comparison: OverlayComparison,
    background: np.ndarray,
    slice_axis: int,
    slice_index: int,
    window: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """RGBA slice image plus its per-pixel membership classes.

    The background scalar slice is windowed to grayscale; visible masks
    fill their exact-membership regions with blended colors and draw
    darkened boundary contours on top.  Hidden masks take no part in fill
    or classification.  The class map holds the visible-membership bit
    code per pixel (bit i = layer i), 0 for background.
    """
    bg = _slice_2d(np.asarray(background, dtype=np.float64), slice_axis, slice_index)
    if bg.shape != _slice_2d(comparison.layers[0].mask, slice_axis, slice_index).shape:
        raise ValueError("background slice grid does not match the mask grid")

    finite = np.isfinite(bg)
    if window is None:
        lo = float(bg[finite].min()) if finite.any() else 0.0
        hi = float(bg[finite].max()) if finite.any() else 1.0
    else:
        lo, hi = (float(w) for w in window)
    if not hi > lo:
        hi = lo + 1.0
    gray = np.clip((np.where(finite, bg, lo) - lo) / (hi - lo), 0.0, 1.0)
    gray8 = np.round(gray * 255.0).astype(np.uint8)

    rgba = np.empty(bg.shape + (4,), dtype=np.uint8)
    rgba[..., 0] = rgba[..., 1] = rgba[..., 2] = gray8
    rgba[..., 3] = 255

    class_map = np.zeros(bg.shape, dtype=np.int8)
    for i, layer in enumerate(comparison.layers):
        if not layer.visible:
            continue
        sl = _slice_2d(layer.mask, slice_axis, slice_index)
        class_map |= sl.astype(np.int8) << i

    for bits in range(1, 8):
        region = class_map == bits
        if not region.any():
            continue
        label = "".join(MASK_LETTERS[i] for i in range(3) if bits & (1 << i))
        fill = comparison.region_color(label)
        rgba[region, 0] = fill[0]
        rgba[region, 1] = fill[1]
        rgba[region, 2] = fill[2]

    for i, layer in enumerate(comparison.layers):
        if not layer.visible:
            continue
        stroke = darken_color(layer.color)
        sl = _slice_2d(layer.mask, slice_axis, slice_index)
        for loop in trace_boundary_loops(sl):
            _draw_loop(rgba, loop, stroke)

    return rgba, class_map


def _draw_loop(rgba: np.ndarray, loop: np.ndarray, color: tuple[int, int, int]) -> None:
    """Stamp the boundary pixels adjacent to each loop edge, inside the mask.

    Loop edges run with the interior on the left, so the interior pixel of
    the edge from (u0, v0) to (u1, v1) is recovered from the edge direction.
    """
    for (u0, v0), (u1, v1) in zip(loop[:-1], loop[1:]):
        du, dv = u1 - u0, v1 - v0
        if du > 0:        # moving +u, interior at +v
            pu, pv = u0, v0
        elif du < 0:      # moving -u, interior at -v
            pu, pv = u1, v1 - 1
        elif dv > 0:      # moving +v, interior at -u
            pu, pv = u0 - 1, v0
        else:             # moving -v, interior at +u
            pu, pv = u1, v1
        iu, iv = int(pu), int(pv)
        if 0 <= iu < rgba.shape[0] and 0 <= iv < rgba.shape[1]:
            rgba[iu, iv, 0] = color[0]
            rgba[iu, iv, 1] = color[1]
            rgba[iu, iv, 2] = color[2]
