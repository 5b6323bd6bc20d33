"""Cluster enhancement, clustering, histograms, and permutation FWER.

TFCE integrates cluster extent over a sweep of thresholds so spatially
coherent signal is boosted without picking one cluster-forming threshold.
The permutation machinery relabels subjects (sizes preserved), recomputes
the enhanced map, and collects its maximum; the add-one estimator converts
the observed map into family-wise-error corrected p values.

Determinism contract: each permutation draws its labels from a
counter-based stream keyed by (seed, permutation index), and per-voxel
tallies are integer counts, so results are identical for any thread count
or scheduling order.
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fieldtools import StudyDataset
from .stats import (
    RelabelingStatistic,
    StatisticMap,
    TestConfig,
    project_study,
    statistic_map_from_projection,
)


class PermutationCancelled(RuntimeError):
    """Raised when a cancel event interrupts a permutation run."""


@dataclass(frozen=True)
class TfceParams:
    height_exponent: float = 2.0
    extent_exponent: float = 0.5
    n_steps: int = 100
    connectivity: int = 26

    def __post_init__(self) -> None:
        if self.height_exponent < 0 or self.extent_exponent < 0:
            raise ValueError("TFCE exponents must be nonnegative")
        if self.n_steps < 10:
            raise ValueError("n_steps must be at least 10")
        if self.connectivity not in (6, 18, 26):
            raise ValueError(f"connectivity must be 6, 18, or 26, got {self.connectivity}")


_STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    18: ndimage.generate_binary_structure(3, 2),
    26: ndimage.generate_binary_structure(3, 3),
}


def tfce(values: np.ndarray, params: TfceParams = TfceParams()) -> np.ndarray:
    """Threshold-free cluster enhancement of a nonnegative 3-D map.

    NaN (masked or degenerate voxels) counts as zero.  For every threshold
    h = dh, 2 dh, ..., max each super-threshold voxel accumulates
    (extent ** E) * (h ** H) * dh, where extent is the size of its connected
    component at that threshold.  The accumulation runs in ascending h so
    the result is bitwise reproducible.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ValueError(f"expected a 3-D map, got shape {values.shape}")
    vol = np.where(np.isfinite(values), values, 0.0)
    if (vol < 0).any():
        raise ValueError("TFCE input must be nonnegative (enhance |t| for signed maps)")

    out = np.zeros_like(vol)
    hmax = float(vol.max()) if vol.size else 0.0
    if hmax <= 0.0:
        return out

    structure = _STRUCTURES[params.connectivity]
    dh = hmax / params.n_steps
    # linspace pins the final threshold to hmax exactly; dh * n_steps can
    # round one ulp above it and drop the peak voxel from its own top step
    thresholds = np.linspace(dh, hmax, params.n_steps)
    # All sweeps share the support of the lowest threshold; cropping to its
    # bounding box leaves component sizes unchanged and saves labeling work.
    support = vol >= thresholds[0]
    if not support.any():
        return out
    slices = ndimage.find_objects(support.astype(np.int8), max_label=1)[0]
    sub = vol[slices]
    acc = np.zeros_like(sub)

    for h in thresholds:
        bw = sub >= h
        if not bw.any():
            break
        labels, n = ndimage.label(bw, structure=structure)
        sizes = np.bincount(labels.ravel())
        extent = sizes[labels[bw]].astype(np.float64)
        acc[bw] += (extent**params.extent_exponent * h**params.height_exponent) * dh

    out[slices] = acc
    return out


def enhance_statistic_map(stat_map: StatisticMap, params: TfceParams = TfceParams()) -> np.ndarray:
    """TFCE of a statistic map: |t| for signed maps, T² as-is."""
    base = np.abs(stat_map.stat) if stat_map.kind == "t" else stat_map.stat
    return tfce(base, params)


# ---------------------------------------------------------------------------
# Connected components and cluster tables

CSV_COLUMNS = (
    "id",
    "voxels",
    "volume_mm3",
    "cog_i",
    "cog_j",
    "cog_k",
    "cog_x_mm",
    "cog_y_mm",
    "cog_z_mm",
    "peak_stat",
)


@dataclass(frozen=True)
class ClusterRow:
    id: int
    voxels: int
    volume_mm3: float
    cog_voxel: tuple[float, float, float]
    cog_mm: tuple[float, float, float]
    peak_stat: float
    color: str | None = None


@dataclass
class ClusterTable:
    rows: list[ClusterRow] = field(default_factory=list)

    def __post_init__(self) -> None:
        sizes = [r.voxels for r in self.rows]
        if sizes != sorted(sizes, reverse=True):
            raise ValueError("cluster rows must be sorted by voxel count descending")

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.id,
                    r.voxels,
                    repr(r.volume_mm3),
                    repr(r.cog_voxel[0]),
                    repr(r.cog_voxel[1]),
                    repr(r.cog_voxel[2]),
                    repr(r.cog_mm[0]),
                    repr(r.cog_mm[1]),
                    repr(r.cog_mm[2]),
                    repr(r.peak_stat),
                ]
            )
        return buf.getvalue()


def connected_components(
    mask: np.ndarray,
    connectivity: int = 26,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    values: np.ndarray | None = None,
    peak_mode: str = "max",
) -> tuple[np.ndarray, ClusterTable]:
    """Label a binary volume and summarize each component.

    Labels are renumbered deterministically: decreasing size, ties broken
    by the smallest linear (C-order) voxel index in the component.  The
    peak column is the max of ``values`` over the component (min when
    peak_mode is "min", as for p maps); without values it is the mask
    indicator, 1.0.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"expected a 3-D mask, got shape {mask.shape}")
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 6, 18, or 26, got {connectivity}")
    if peak_mode not in ("max", "min"):
        raise ValueError("peak_mode must be 'max' or 'min'")

    raw, n = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    labels = np.zeros_like(raw, dtype=np.int32)
    if n == 0:
        return labels, ClusterTable(rows=[])

    flat = raw.ravel()
    occupied = np.flatnonzero(flat)
    sizes = np.bincount(flat[occupied], minlength=n + 1)
    # first occurrence in the C-order scan per label
    order_of_first: dict[int, int] = {}
    lab_order, first_pos = np.unique(flat[occupied], return_index=True)
    for lab, pos in zip(lab_order, first_pos):
        order_of_first[int(lab)] = int(occupied[pos])
    ranking = sorted(range(1, n + 1), key=lambda lab: (-int(sizes[lab]), order_of_first[lab]))
    remap = np.zeros(n + 1, dtype=np.int32)
    for new_id, old in enumerate(ranking, start=1):
        remap[old] = new_id
    labels = remap[raw]

    voxel_volume = float(spacing[0] * spacing[1] * spacing[2])
    coords = np.nonzero(labels)
    lab_in = labels[coords]
    rows = []
    counts = np.bincount(lab_in, minlength=len(ranking) + 1)
    cogs = [
        np.bincount(lab_in, weights=coords[axis], minlength=len(ranking) + 1)
        for axis in range(3)
    ]
    if values is not None:
        extreme = ndimage.minimum if peak_mode == "min" else ndimage.maximum
        peaks = np.atleast_1d(
            extreme(np.asarray(values, dtype=np.float64), labels=labels, index=np.arange(1, len(ranking) + 1))
        )
    else:
        peaks = np.ones(len(ranking))

    for new_id in range(1, len(ranking) + 1):
        cnt = int(counts[new_id])
        cog = tuple(float(cogs[axis][new_id] / cnt) for axis in range(3))
        rows.append(
            ClusterRow(
                id=new_id,
                voxels=cnt,
                volume_mm3=cnt * voxel_volume,
                cog_voxel=cog,
                cog_mm=tuple(c * s for c, s in zip(cog, spacing)),
                peak_stat=float(peaks[new_id - 1]),
            )
        )
    return labels, ClusterTable(rows=rows)


def threshold_map(
    volume: np.ndarray,
    threshold: float,
    mask: np.ndarray | None = None,
    direction: str = "ge",
    connectivity: int = 26,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> tuple[np.ndarray, ClusterTable]:
    """Binary mask of super-threshold voxels and its cluster table.

    direction "ge" keeps values >= threshold (stat and TFCE maps); "le"
    keeps values <= threshold (p maps, where the peak column reports the
    smallest p in each cluster).  NaN never passes either way.
    """
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    if direction not in ("ge", "le"):
        raise ValueError("direction must be 'ge' or 'le'")
    volume = np.asarray(volume, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        sel = volume >= threshold if direction == "ge" else volume <= threshold
    sel &= np.isfinite(volume)
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    labels, table = connected_components(
        sel,
        connectivity=connectivity,
        spacing=spacing,
        values=volume,
        peak_mode="max" if direction == "ge" else "min",
    )
    return sel, table


def cumulative_histogram(
    volume: np.ndarray,
    mask: np.ndarray | None = None,
    n_bins: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """(threshold, count of voxels >= threshold) curve over [0, max].

    The count at threshold 0 is the number of strictly positive voxels, so
    the curve starts at the size of the thresholdable set.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    volume = np.asarray(volume, dtype=np.float64)
    values = volume[np.asarray(mask, dtype=bool)] if mask is not None else volume.ravel()
    values = values[np.isfinite(values)]
    vmax = float(values.max()) if values.size and values.max() > 0 else 0.0
    thresholds = np.linspace(0.0, vmax, n_bins)
    sv = np.sort(values)
    counts = values.size - np.searchsorted(sv, thresholds, side="left")
    # At threshold 0 the count is of strictly positive voxels, which also
    # keeps the curve non-increasing when the map has no positive values.
    positive = values.size - np.searchsorted(sv, 0.0, side="right")
    counts = np.where(thresholds > 0, counts, positive)
    return thresholds, counts.astype(np.int64)


# ---------------------------------------------------------------------------
# Permutation testing


@dataclass
class PermutationResult:
    """Null maxima and corrected p values from a label-permutation run.

    corrected_p uses the add-one estimator (1 + #{null max >= observed}) /
    (1 + N) against the family-wide maximum; uncorrected_p applies the same
    estimator voxelwise.  observed is the enhanced (or raw) comparison map
    the p values refer to.  NaN marks degenerate or out-of-mask voxels.
    """

    n_permutations: int
    null_max: np.ndarray
    corrected_p: np.ndarray
    uncorrected_p: np.ndarray
    observed: np.ndarray
    observed_stat: StatisticMap
    seed: int
    elapsed_seconds: float


def _permutation_labels(seed: int, index: int, n1: int, n2: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
    order = rng.permutation(n1 + n2)
    labels = np.empty(n1 + n2, dtype=np.int64)
    labels[order[:n1]] = 0
    labels[order[n1:]] = 1
    return labels


def permutation_test(
    dataset: StudyDataset,
    config: TestConfig,
    n_permutations: int,
    seed: int | None = None,
    tfce_params: TfceParams = TfceParams(),
    n_jobs: int = 1,
    progress: "callable | None" = None,
    cancel: "object | None" = None,
) -> PermutationResult:
    """Family-wise-error corrected p map by group-label permutation.

    Labels are drawn with replacement (the identity labeling may recur).
    Runs are reproducible for a given (dataset, config, N, seed) and
    independent of ``n_jobs``: per-permutation work is keyed by index and
    the merge uses integer tallies and an indexed max array.
    """
    if n_permutations < 100:
        raise ValueError("need at least 100 permutations for a usable null distribution")
    seed = config.seed if seed is None else seed
    n1, n2 = dataset.group_sizes()
    if n1 < 2 or n2 < 2:
        raise ValueError(f"need at least 2 subjects per group, got {n1} and {n2}")
    distinct = math.comb(n1 + n2, n1)
    if distinct < n_permutations:
        warnings.warn(
            f"only {distinct} distinct relabelings exist for group sizes "
            f"{n1}+{n2}; the permutation null is coarse",
            stacklevel=2,
        )

    start = time.perf_counter()
    proj = project_study(dataset, config.axes, config.smoothing_sigma)
    mask = proj.mask
    engine = RelabelingStatistic(proj.coords)

    def comparison_vector(labels: np.ndarray) -> np.ndarray:
        """In-mask comparison values for one labeling: enhanced or raw."""
        stat, degen = engine.statistic(labels)
        degen = degen | proj.axis_degenerate
        raw = np.abs(stat) if proj.k == 1 else stat
        raw = np.where(degen, np.nan, raw)
        if not config.use_tfce:
            return raw
        vol = np.zeros(mask.shape)
        vol[mask] = np.where(np.isnan(raw), 0.0, raw)
        return tfce(vol, tfce_params)[mask]

    observed_map = statistic_map_from_projection(proj)
    obs = comparison_vector(proj.groups)

    null_max = np.empty(n_permutations)
    ge_counts = np.zeros(obs.shape[0], dtype=np.int64)
    obs_filled = np.where(np.isnan(obs), np.inf, obs)  # degenerate: never counted

    def check_cancel() -> None:
        if cancel is not None and getattr(cancel, "is_set", lambda: False)():
            raise PermutationCancelled("permutation run cancelled")

    def one_permutation(index: int) -> tuple[int, float, np.ndarray]:
        check_cancel()
        labels = _permutation_labels(seed, index, n1, n2)
        vec = comparison_vector(labels)
        finite = vec[np.isfinite(vec)]
        peak = float(finite.max()) if finite.size else 0.0
        hits = (np.nan_to_num(vec, nan=-np.inf) >= obs_filled).astype(np.int64)
        return index, peak, hits

    done = 0
    if n_jobs <= 1:
        for i in range(n_permutations):
            _, peak, hits = one_permutation(i)
            null_max[i] = peak
            ge_counts += hits
            done += 1
            if progress is not None and (done % 25 == 0 or done == n_permutations):
                progress(done / n_permutations)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for index, peak, hits in pool.map(one_permutation, range(n_permutations)):
                null_max[index] = peak
                ge_counts += hits
                done += 1
                if progress is not None and (done % 25 == 0 or done == n_permutations):
                    progress(done / n_permutations)

    null_sorted = np.sort(null_max)
    exceed = n_permutations - np.searchsorted(null_sorted, obs_filled, side="left")
    corrected = (1.0 + exceed) / (1.0 + n_permutations)
    uncorrected = (1.0 + ge_counts) / (1.0 + n_permutations)
    corrected = np.where(np.isnan(obs), np.nan, corrected)
    uncorrected = np.where(np.isnan(obs), np.nan, uncorrected)

    def fill(vec: np.ndarray) -> np.ndarray:
        out = np.full(mask.shape, np.nan)
        out[mask] = vec
        return out

    return PermutationResult(
        n_permutations=n_permutations,
        null_max=null_sorted,
        corrected_p=fill(corrected),
        uncorrected_p=fill(uncorrected),
        observed=fill(obs),
        observed_stat=observed_map,
        seed=seed,
        elapsed_seconds=time.perf_counter() - start,
    )
