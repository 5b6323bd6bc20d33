"""Deterministic streamline tractography on a tensor volume.

Streamlines follow the principal eigenvector of the trilinearly
interpolated embedded coefficients, integrated bidirectionally from each
seed.  The tracker is meant for the group mean field, where detected
clusters seed the search for the fiber bundles passing through them.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fieldtools import TensorVolume

TERMINATION_REASONS = ("low_fa", "sharp_turn", "out_of_bounds", "max_steps")

_MAGIC = b"TSTL"
_VERSION = 1


@dataclass(frozen=True)
class TrackingParams:
    step_size_voxels: float = 0.5
    max_steps: int = 2000
    fa_stop: float = 0.15
    angle_stop_degrees: float = 45.0
    seeds_per_voxel: int = 1
    integration: str = "midpoint"

    def __post_init__(self) -> None:
        if not self.step_size_voxels > 0:
            raise ValueError("step_size_voxels must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0.0 <= self.fa_stop <= 1.0:
            raise ValueError("fa_stop must be in [0, 1]")
        if not 0.0 < self.angle_stop_degrees <= 90.0:
            raise ValueError("angle_stop_degrees must be in (0, 90]")
        if self.seeds_per_voxel < 1:
            raise ValueError("seeds_per_voxel must be at least 1")
        if self.integration not in ("euler", "midpoint"):
            raise ValueError(f"integration must be 'euler' or 'midpoint', got {self.integration!r}")


@dataclass(frozen=True)
class Streamline:
    """One tracked polyline in world millimeters.

    reasons records why each end stopped: (backward end, forward end),
    each one of low_fa, sharp_turn, out_of_bounds, max_steps.  A bare
    seed that failed the FA gate has a single point and low_fa twice.
    """

    points: np.ndarray
    reasons: tuple[str, str]
    seed_index: int

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.points.shape[1] != 3 or self.points.shape[0] < 1:
            raise ValueError("points must be a nonempty (n, 3) array")
        for r in self.reasons:
            if r not in TERMINATION_REASONS:
                raise ValueError(f"unknown termination reason {r!r}")


class _FieldSampler:
    """Trilinear interpolation of embedded coefficients, then eigen data.

    Positions are in voxel units; the valid domain is the box spanned by
    the outermost voxel centers.
    """

    def __init__(self, data: np.ndarray) -> None:
        self.data = data
        self.hi = np.array(data.shape[:3], dtype=np.float64) - 1.0

    def in_bounds(self, pos: np.ndarray) -> bool:
        return bool((pos >= 0.0).all() and (pos <= self.hi).all())

    def coefficients(self, pos: np.ndarray) -> np.ndarray:
        base = np.minimum(np.floor(pos), self.hi - 1.0)
        base = np.maximum(base, 0.0)
        f = pos - base
        i0, j0, k0 = (int(v) for v in base)
        c = self.data[i0 : i0 + 2, j0 : j0 + 2, k0 : k0 + 2]
        wi = np.array([1.0 - f[0], f[0]])
        wj = np.array([1.0 - f[1], f[1]])
        wk = np.array([1.0 - f[2], f[2]])
        return np.einsum("i,j,k,ijkc->c", wi, wj, wk, c)

    def direction_and_fa(self, pos: np.ndarray) -> tuple[np.ndarray, float]:
        v = self.coefficients(pos)
        s = 1.0 / math.sqrt(2.0)
        mat = np.array(
            [
                [v[0], v[3] * s, v[4] * s],
                [v[3] * s, v[1], v[5] * s],
                [v[4] * s, v[5], v[2]],
            ]
        )
        w, vec = np.linalg.eigh(mat)
        norm = math.sqrt(float((w**2).sum()))
        if norm <= 0.0 or not np.isfinite(norm):
            return np.zeros(3), 0.0
        dev = w - w.mean()
        fa = math.sqrt(1.5) * math.sqrt(float((dev**2).sum())) / norm
        return vec[:, 2], fa


def _subvoxel_offsets(count: int) -> np.ndarray:
    """Deterministic seed positions inside one voxel, center first."""
    if count == 1:
        return np.zeros((1, 3))
    per_axis = 1
    while per_axis**3 < count:
        per_axis += 1
    centers = (np.arange(per_axis) + 0.5) / per_axis - 0.5
    grid = np.stack(np.meshgrid(centers, centers, centers, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)[:count]


def track(
    volume: TensorVolume,
    seed_mask: np.ndarray,
    params: TrackingParams = TrackingParams(),
    n_jobs: int = 1,
) -> list[Streamline]:
    """Bidirectional principal-eigenvector streamlines from every seed.

    Output order is fixed by the seed's linear (C-order) voxel index and
    the sub-voxel seed index, independent of worker scheduling.
    """
    seed_mask = np.asarray(seed_mask, dtype=bool)
    if seed_mask.shape != volume.dims:
        raise ValueError(f"seed mask shape {seed_mask.shape} does not match volume {volume.dims}")

    sampler = _FieldSampler(volume.data)
    spacing = np.asarray(volume.spacing, dtype=np.float64)
    step_mm = params.step_size_voxels * float(spacing.min())
    cos_limit = math.cos(math.radians(params.angle_stop_degrees))

    voxels = np.argwhere(seed_mask)
    offsets = _subvoxel_offsets(params.seeds_per_voxel)
    seeds = []
    for voxel in voxels:
        for off in offsets:
            seeds.append(voxel + off)
    if not seeds:
        return []

    def sample(pos_voxel: np.ndarray, ref_dir: np.ndarray):
        """Principal direction aligned with ref_dir, or a stop reason."""
        if not sampler.in_bounds(pos_voxel):
            return None, "out_of_bounds"
        e1, fa = sampler.direction_and_fa(pos_voxel)
        if fa < params.fa_stop or not np.isfinite(e1).all() or not (e1**2).sum() > 0:
            return None, "low_fa"
        if float(e1 @ ref_dir) < 0.0:
            e1 = -e1
        return e1, None

    def half_track(start_world: np.ndarray, direction: np.ndarray) -> tuple[list[np.ndarray], str]:
        points = []
        pos = start_world.copy()
        prev_dir = direction
        for _ in range(params.max_steps):
            d0, reason = sample(pos / spacing, prev_dir)
            if reason is not None:
                return points, reason
            if params.integration == "euler":
                step_dir = d0
            else:
                mid = pos + 0.5 * step_mm * d0
                step_dir, reason = sample(mid / spacing, d0)
                if reason is not None:
                    return points, reason
            if float(step_dir @ prev_dir) < cos_limit:
                return points, "sharp_turn"
            nxt = pos + step_mm * step_dir
            if not sampler.in_bounds(nxt / spacing):
                return points, "out_of_bounds"
            points.append(nxt)
            pos = nxt
            prev_dir = step_dir
        return points, "max_steps"

    def track_one(seed_voxel: np.ndarray) -> Streamline:
        seed_world = seed_voxel * spacing
        host = tuple(int(round(c)) for c in np.clip(seed_voxel, 0, sampler.hi))
        linear = int(np.ravel_multi_index(host, volume.dims))
        if not sampler.in_bounds(seed_voxel):
            return Streamline(points=seed_world[None, :].copy(), reasons=("out_of_bounds", "out_of_bounds"), seed_index=linear)
        e1, fa = sampler.direction_and_fa(seed_voxel)
        if fa < params.fa_stop or not np.isfinite(e1).all() or not (e1**2).sum() > 0:
            return Streamline(points=seed_world[None, :].copy(), reasons=("low_fa", "low_fa"), seed_index=linear)
        backward, r_back = half_track(seed_world, -e1)
        forward, r_fwd = half_track(seed_world, e1)
        pts = backward[::-1] + [seed_world] + forward
        return Streamline(points=np.array(pts), reasons=(r_back, r_fwd), seed_index=linear)

    if n_jobs <= 1:
        return [track_one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(track_one, seeds))


# ---------------------------------------------------------------------------
# Streamline file format: little-endian binary, bit-exact round trips.
# Header {magic "TSTL", version u32, count u32}; per line {n_points u32,
# n_points x 3 f32 world mm}.


def streamlines_to_bytes(lines: "list[Streamline] | list[np.ndarray]") -> bytes:
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(lines))]
    for line in lines:
        pts = line.points if isinstance(line, Streamline) else np.asarray(line)
        pts32 = np.ascontiguousarray(pts, dtype="<f4")
        if pts32.ndim != 2 or pts32.shape[1] != 3:
            raise ValueError(f"streamline points must be (n, 3), got {pts32.shape}")
        parts.append(struct.pack("<I", pts32.shape[0]))
        parts.append(pts32.tobytes())
    return b"".join(parts)


def export_streamlines(lines: "list[Streamline] | list[np.ndarray]", path) -> None:
    with open(path, "wb") as fh:
        fh.write(streamlines_to_bytes(lines))


def read_streamlines(path) -> list[np.ndarray]:
    """Point arrays from a streamline file (float64, f32-exact values)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a streamline file (bad magic {blob[:4]!r})")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported streamline file version {version}")
    lines = []
    offset = 12
    for _ in range(count):
        if offset + 4 > len(blob):
            raise ValueError(f"{path}: truncated streamline file")
        (n,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        nbytes = n * 12
        if offset + nbytes > len(blob):
            raise ValueError(f"{path}: truncated streamline file")
        pts = np.frombuffer(blob, dtype="<f4", count=n * 3, offset=offset).reshape(n, 3)
        lines.append(pts.astype(np.float64))
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes after last streamline")
    return lines
