"""End-to-end analysis steps shared by the command line and the service.

A run bundles the voxelwise statistic map with its optional TFCE surface;
thresholding always operates on one scalar "surface" (the enhanced map
when TFCE is on, |t| or T² when it is off), so the cumulative histogram,
the cluster table, and the default threshold all describe the same
numbers the user is cutting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats as sps

from .enhance import (
    ClusterTable,
    TfceParams,
    connected_components,
    cumulative_histogram,
    enhance_statistic_map,
)
from .fieldtools import StudyDataset
from .igrt import AXIS_NAMES, ClusterCoordinates, cluster_coordinates
from .stats import GroupSample, StatisticMap, TestConfig, project_study, run_voxelwise_test, t_test

DEFAULT_TFCE_QUANTILE = 0.95


@dataclass
class AnalysisRun:
    """One parametric test, optionally TFCE-enhanced."""

    config: TestConfig
    stat_map: StatisticMap
    tfce: np.ndarray | None
    tfce_params: TfceParams

    @property
    def surface(self) -> np.ndarray:
        """The thresholdable scalar field (nonnegative, 0 outside the mask)."""
        if self.tfce is not None:
            return self.tfce
        base = np.abs(self.stat_map.stat) if self.stat_map.kind == "t" else self.stat_map.stat
        return np.where(np.isfinite(base), base, 0.0)

    @property
    def surface_name(self) -> str:
        return "tfce" if self.tfce is not None else "stat"


def run_analysis(
    dataset: StudyDataset,
    config: TestConfig,
    tfce_params: TfceParams = TfceParams(),
) -> AnalysisRun:
    stat_map = run_voxelwise_test(dataset, config)
    tfce = enhance_statistic_map(stat_map, tfce_params) if config.use_tfce else None
    return AnalysisRun(config=config, stat_map=stat_map, tfce=tfce, tfce_params=tfce_params)


def critical_value(alpha: float, kind: str, k: int, n1: int, n2: int) -> float:
    """Statistic value whose parametric two-sided p equals alpha.

    Thresholding the |t| or T² surface at this value selects exactly the
    voxels with p <= alpha, so the stat cut and the p cut agree.
    """
    dof = n1 + n2 - 2
    if kind == "t":
        return float(sps.t.isf(alpha / 2.0, dof))
    dof2 = n1 + n2 - k - 1
    if dof2 < 1:
        raise ValueError(f"{k} axes need at least {k + 2} subjects, got {n1}+{n2}")
    return float(sps.f.isf(alpha, k, dof2) * dof * k / dof2)


def default_threshold(run: AnalysisRun) -> float:
    """TFCE: the 95th percentile of in-mask values; raw stat: the parametric
    critical value at the configured alpha."""
    if run.tfce is not None:
        values = run.tfce[run.stat_map.mask]
        return float(np.percentile(values, 100.0 * DEFAULT_TFCE_QUANTILE))
    return critical_value(run.config.alpha, run.stat_map.kind, run.config.k, run.stat_map.n1, run.stat_map.n2)


@dataclass
class ClusterExtraction:
    """Super-threshold voxels of a run's surface, labeled and tabulated."""

    surface_name: str
    threshold: float
    connectivity: int
    mask: np.ndarray
    labels: np.ndarray
    table: ClusterTable

    def cluster_mask(self, cluster_id: int) -> np.ndarray:
        if not any(row.id == cluster_id for row in self.table.rows):
            known = [row.id for row in self.table.rows]
            raise KeyError(f"no cluster with id {cluster_id}; table has ids {known}")
        return self.labels == cluster_id


def extract_clusters(run: AnalysisRun, threshold: float | None = None, connectivity: int = 26) -> ClusterExtraction:
    if threshold is None:
        threshold = default_threshold(run)
    surface = run.surface
    with np.errstate(invalid="ignore"):
        sel = (surface >= threshold) & np.isfinite(surface) & run.stat_map.mask
    labels, table = connected_components(
        sel,
        connectivity=connectivity,
        spacing=run.stat_map.spacing,
        values=surface,
        peak_mode="max",
    )
    return ClusterExtraction(
        surface_name=run.surface_name,
        threshold=float(threshold),
        connectivity=connectivity,
        mask=sel,
        labels=labels,
        table=table,
    )


def histogram_curve(run: AnalysisRun, n_bins: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative voxel counts over the run's thresholdable surface."""
    return cumulative_histogram(run.surface, mask=run.stat_map.mask, n_bins=n_bins)


# ---------------------------------------------------------------------------
# Scatter-plot-matrix data: one six-axis coordinate vector per subject


@dataclass
class SplomData:
    """Per-subject steerable coordinates at a voxel or over a cluster.

    Rotation coordinates (axes 4-6) are signed for a single voxel and
    absolute-value averages for clusters, where per-voxel eigenvector
    orientations would cancel them.
    """

    subject_ids: list[str]
    groups: np.ndarray
    group_names: tuple[str, str]
    values: np.ndarray
    valid: np.ndarray
    excluded: np.ndarray
    n_voxels: int
    location: str

    def pearson_pairs(self) -> list[dict]:
        """All 15 unordered axis pairs with their correlation across subjects."""
        pairs = []
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.corrcoef(self.values, rowvar=False)
        for a in range(6):
            for b in range(a + 1, 6):
                r = float(corr[a, b]) if self.valid[a] and self.valid[b] else float("nan")
                pairs.append({"axes": [AXIS_NAMES[a], AXIS_NAMES[b]], "r": r})
        return pairs

    def axis_tests(self) -> list[dict]:
        """Two-sample t and p per axis, NaN where the axis is invalid."""
        results = []
        for a in range(6):
            if self.valid[a]:
                g1 = GroupSample.from_observations(self.values[self.groups == 0, a : a + 1])
                g2 = GroupSample.from_observations(self.values[self.groups == 1, a : a + 1])
                t, p = t_test(g1, g2)
            else:
                t, p = float("nan"), float("nan")
            results.append({"axis": AXIS_NAMES[a], "t": t, "p": p})
        return results

    def to_json_dict(self) -> dict:
        return {
            "location": self.location,
            "axes": list(AXIS_NAMES),
            "subjects": [
                {
                    "id": sid,
                    "group": self.group_names[int(g)],
                    "coordinates": [float(v) for v in row],
                }
                for sid, g, row in zip(self.subject_ids, self.groups, self.values)
            ],
            "valid_axes": [bool(v) for v in self.valid],
            "excluded_voxels": [int(e) for e in self.excluded],
            "n_voxels": self.n_voxels,
            "pearson": self.pearson_pairs(),
            "axis_tests": self.axis_tests(),
        }


def _mask_positions(mask: np.ndarray) -> np.ndarray:
    positions = np.full(mask.size, -1, dtype=np.int64)
    positions[mask.ravel()] = np.arange(int(mask.sum()))
    return positions


def voxel_splom(dataset: StudyDataset, voxel: tuple[int, int, int], smoothing_sigma: float = 0.0) -> SplomData:
    """Signed six-axis coordinates of every subject at one in-mask voxel."""
    voxel = tuple(int(v) for v in voxel)
    if len(voxel) != 3 or not all(0 <= v < d for v, d in zip(voxel, dataset.dims)):
        raise ValueError(f"voxel {voxel} is outside the grid {dataset.dims}")
    if not dataset.mask[voxel]:
        raise ValueError(f"voxel {voxel} is outside the mask")
    proj = project_study(dataset, AXIS_NAMES, smoothing_sigma)
    pos = _mask_positions(dataset.mask)[np.ravel_multi_index(voxel, dataset.dims)]
    degenerate = proj.frames_degenerate[pos]
    return SplomData(
        subject_ids=list(dataset.subject_ids),
        groups=dataset.groups.copy(),
        group_names=tuple(dataset.group_names),
        values=proj.coords[:, pos, :].copy(),
        valid=~degenerate,
        excluded=degenerate.astype(np.int64),
        n_voxels=1,
        location=f"voxel ({voxel[0]}, {voxel[1]}, {voxel[2]})",
    )


def cluster_splom(
    dataset: StudyDataset,
    cluster_mask: np.ndarray,
    smoothing_sigma: float = 0.0,
    label: str = "cluster",
) -> SplomData:
    """Cluster-aggregated coordinates: signed means on axes 1-3, absolute
    means on the rotation axes, degenerate voxels excluded per axis."""
    cluster_mask = np.asarray(cluster_mask, dtype=bool)
    if cluster_mask.shape != dataset.dims:
        raise ValueError(f"cluster grid {cluster_mask.shape} does not match dataset grid {dataset.dims}")
    if not cluster_mask.any():
        raise ValueError("cluster is empty: no voxels to aggregate")
    if (cluster_mask & ~dataset.mask).any():
        raise ValueError("cluster extends outside the dataset mask")
    proj = project_study(dataset, AXIS_NAMES, smoothing_sigma)
    pos = _mask_positions(dataset.mask)[np.flatnonzero(cluster_mask.ravel())]
    agg: ClusterCoordinates = cluster_coordinates(proj.coords[:, pos, :], proj.frames_degenerate[pos])
    return SplomData(
        subject_ids=list(dataset.subject_ids),
        groups=dataset.groups.copy(),
        group_names=tuple(dataset.group_names),
        values=agg.values,
        valid=agg.valid,
        excluded=agg.excluded,
        n_voxels=agg.n_voxels,
        location=label,
    )
