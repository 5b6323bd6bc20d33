"""Two-group tests over steerable axis subsets.

Univariate pooled-variance t tests when one axis is selected, Hotelling T²
when several are.  The voxelwise driver projects every subject onto the
frame at the voxel's grand mean, restricts to the configured axes, and
tests group1 against group2; the grand mean does not depend on the group
labels, so permutation schemes can reuse one projection.

Degeneracy never aborts a map: voxels whose frame axes are degenerate, or
whose pooled covariance is singular or has condition number at or above
1e12, are marked and reported as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .fieldtools import StudyDataset, smooth_dataset
from .igrt import AXIS_NAMES, build_frames_array, project_array

COND_LIMIT = 1e12


@dataclass(frozen=True)
class GroupSample:
    """Subject count, mean vector, and unbiased sample covariance."""

    n: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        k = mean.shape[0]
        if cov.shape != (k, k):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {k}")
        if not np.allclose(cov, cov.T, atol=1e-10 * max(1.0, float(np.abs(cov).max()))):
            raise ValueError("covariance must be symmetric")
        w = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if w.min() < -1e-10 * max(1.0, float(w.max())):
            raise ValueError(f"covariance is not PSD (eigenvalue {w.min():.3e})")

    @property
    def k(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_observations(cls, x: np.ndarray) -> "GroupSample":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        mean = x.mean(axis=0)
        if n >= 2:
            cov = np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
        else:
            cov = np.zeros((x.shape[1], x.shape[1]))
        return cls(n=n, mean=mean, cov=cov)


@dataclass(frozen=True)
class TestConfig:
    """What to test and how: axis subset, significance level, options."""

    __test__ = False  # the Test prefix is domain vocabulary, not a test case

    axes: tuple[str, ...]
    alpha: float = 0.05
    use_tfce: bool = False
    smoothing_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not axes:
            raise ValueError("axes must be a nonempty subset of " + ", ".join(AXIS_NAMES))
        unknown = [a for a in axes if a not in AXIS_NAMES]
        if unknown:
            raise ValueError(f"unknown axis names: {', '.join(unknown)}")
        if len(set(axes)) != len(axes):
            raise ValueError("axes must not repeat")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.smoothing_sigma < 0:
            raise ValueError("smoothing_sigma must be nonnegative")

    @property
    def axis_indices(self) -> np.ndarray:
        return np.array([AXIS_NAMES.index(a) for a in self.axes])

    @property
    def k(self) -> int:
        return len(self.axes)


@dataclass
class StatisticMap:
    """Voxelwise statistic and parametric p with degeneracy bookkeeping.

    stat and p are full-grid float64 with NaN outside the mask and at
    degenerate voxels; ``degenerate`` flags the in-mask voxels that could
    not be tested.
    """

    stat: np.ndarray
    p: np.ndarray
    kind: str                     # "t" or "t2"
    axes: tuple[str, ...]
    n1: int
    n2: int
    mask: np.ndarray
    degenerate: np.ndarray
    spacing: tuple[float, float, float]

    @property
    def k(self) -> int:
        return len(self.axes)

    def degenerate_count(self) -> int:
        return int(self.degenerate.sum())


@dataclass
class ProjectedStudy:
    """Per-subject steerable coordinates for the selected axes.

    coords is (n_subjects, n_mask_voxels, k) in C-order mask sequence;
    axis_degenerate marks voxels where any selected axis was degenerate.
    Shared by the direct and the permutation pipeline, which differ only in
    how they relabel subjects.
    """

    coords: np.ndarray
    axis_degenerate: np.ndarray
    groups: np.ndarray
    axes: tuple[str, ...]
    mask: np.ndarray
    spacing: tuple[float, float, float]
    frames_basis: np.ndarray = field(repr=False, default=None)
    frames_degenerate: np.ndarray = field(repr=False, default=None)

    @property
    def k(self) -> int:
        return len(self.axes)


def project_study(dataset: StudyDataset, axes: tuple[str, ...], smoothing_sigma: float = 0.0) -> ProjectedStudy:
    """Smooth, build grand-mean frames, and project all subjects."""
    data = smooth_dataset(dataset, smoothing_sigma)
    coeffs = data.masked_coefficients()
    grand_mean = coeffs.mean(axis=0)
    basis, degen = build_frames_array(grand_mean)
    coords_all = project_array(coeffs - grand_mean, basis, degen)
    sel = np.array([AXIS_NAMES.index(a) for a in axes])
    return ProjectedStudy(
        coords=np.ascontiguousarray(coords_all[..., sel]),
        axis_degenerate=degen[:, sel].any(axis=1),
        groups=dataset.groups.copy(),
        axes=tuple(axes),
        mask=dataset.mask.copy(),
        spacing=dataset.spacing,
        frames_basis=basis,
        frames_degenerate=degen,
    )


def _check_design(n1: int, n2: int, k: int) -> None:
    if n1 < 2 or n2 < 2:
        raise ValueError(f"need at least 2 subjects per group, got {n1} and {n2}")
    if n1 + n2 - 2 < k:
        raise ValueError(
            f"group sizes n1={n1}, n2={n2} are too small for {k} axes: "
            f"need n1+n2-2 >= {k}"
        )


def pooled_statistics(coords: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized per-voxel test of group 0 against group 1.

    coords: (n, V, k) finite values; labels: (n,) of 0/1.  Returns
    (stat, p, degenerate) over voxels: the signed t when k == 1 (direction
    group1 minus group2), T² otherwise.  Degenerate voxels (singular or
    ill-conditioned pooled covariance) carry NaN.
    """
    x1 = coords[labels == 0]
    x2 = coords[labels == 1]
    n1, n2 = x1.shape[0], x2.shape[0]
    k = coords.shape[2]
    dof = n1 + n2 - 2

    m1 = x1.mean(axis=0)
    m2 = x2.mean(axis=0)
    diff = m1 - m2
    d1 = x1 - m1
    d2 = x2 - m2

    if k == 1:
        ss = (d1[..., 0] ** 2).sum(axis=0) + (d2[..., 0] ** 2).sum(axis=0)
        pooled_var = ss / dof
        degen = ~(pooled_var > 0) | ~np.isfinite(pooled_var)
        denom = np.sqrt(np.where(degen, 1.0, pooled_var) * (1.0 / n1 + 1.0 / n2))
        t = np.where(degen, np.nan, diff[..., 0] / denom)
        p = np.where(degen, np.nan, 2.0 * sps.t.sf(np.abs(t), dof))
        return t, p, degen

    sp = (np.einsum("nvk,nvl->vkl", d1, d1) + np.einsum("nvk,nvl->vkl", d2, d2)) / dof
    finite = np.isfinite(sp).all(axis=(1, 2))
    w = np.linalg.eigvalsh(np.where(finite[:, None, None], sp, np.eye(k)))
    cond_ok = (w[:, 0] > 0) & (w[:, -1] < COND_LIMIT * w[:, 0])
    degen = ~(finite & cond_ok)

    valid = ~degen
    t2 = np.full(coords.shape[1], np.nan)
    if valid.any():
        sol = np.linalg.solve(sp[valid], diff[valid][..., None])[..., 0]
        t2[valid] = (n1 * n2 / (n1 + n2)) * np.einsum("vk,vk->v", diff[valid], sol)
        # Clip tiny negative values from roundoff on near-singular systems.
        t2[valid] = np.maximum(t2[valid], 0.0)

    dof2 = n1 + n2 - k - 1
    f_stat = t2 * (dof2 / (dof * k))
    p = np.where(degen, np.nan, sps.f.sf(f_stat, k, dof2))
    return t2, p, degen


class RelabelingStatistic:
    """Group-difference statistic engine for many relabelings of one dataset.

    The total scatter about the grand mean does not depend on the labeling,
    and the within-group scatter of any two-group split is the total minus
    the rank-one term c d d^T (c = n1 n2 / n, d the mean difference).  With
    the total scatter factored once, T² = c dof q / (1 - c q) where
    q = d^T A^{-1} d, so each relabeling costs O(V k²) instead of a fresh
    O(V (n k² + k³)) scatter-and-solve pass.

    Voxels whose total scatter is singular or with condition number at or
    beyond 1e12 are degenerate for every labeling; a labeling additionally
    degenerates a voxel when its within-scatter factor 1 - c q falls to
    roundoff (<= 1e-12), the rank-one analogue of a singular pooled
    covariance.  The observed statistic artifact still goes through
    pooled_statistics, which checks the pooled covariance itself.
    """

    def __init__(self, coords: np.ndarray) -> None:
        self.n, self.n_voxels, self.k = coords.shape
        self.coords = coords
        centered = coords - coords.mean(axis=0)
        if self.k == 1:
            a = (centered[..., 0] ** 2).sum(axis=0)
            self.base_degenerate = ~(a > 0) | ~np.isfinite(a)
            self.a_inv = np.where(self.base_degenerate, np.nan, 1.0 / np.where(self.base_degenerate, 1.0, a))
        else:
            a = np.einsum("nvk,nvl->vkl", centered, centered)
            finite = np.isfinite(a).all(axis=(1, 2))
            w = np.linalg.eigvalsh(np.where(finite[:, None, None], a, np.eye(self.k)))
            ok = finite & (w[:, 0] > 0) & (w[:, -1] < COND_LIMIT * w[:, 0])
            self.base_degenerate = ~ok
            self.a_inv = np.full_like(a, np.nan)
            if ok.any():
                self.a_inv[ok] = np.linalg.inv(a[ok])

    def statistic(self, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(stat, degenerate) for one labeling: signed t when k == 1, else T²."""
        n1 = int((labels == 0).sum())
        n2 = int((labels == 1).sum())
        c = n1 * n2 / (n1 + n2)
        dof = n1 + n2 - 2
        weights = np.where(labels == 0, 1.0 / n1, -1.0 / n2)
        diff = np.einsum("n,nvk->vk", weights, self.coords)

        if self.k == 1:
            q = diff[:, 0] ** 2 * self.a_inv
        else:
            u = np.einsum("vkl,vl->vk", self.a_inv, diff)
            q = np.maximum(np.einsum("vk,vk->v", diff, u), 0.0)
        r = 1.0 - c * q
        degen = self.base_degenerate | ~(r > 1e-12)
        with np.errstate(invalid="ignore", divide="ignore"):
            t2 = np.maximum(c * dof * q / r, 0.0)
            stat = np.sign(diff[:, 0]) * np.sqrt(t2) if self.k == 1 else t2
        return np.where(degen, np.nan, stat), degen


def hotelling_t2(g1: GroupSample, g2: GroupSample) -> tuple[float, float]:
    """Two-sample Hotelling T² with its parametric F-based p value.

    Degenerate pooled covariance (singular or condition number >= 1e12)
    yields (nan, nan) so map-level callers can mark the voxel instead of
    aborting; an impossible design (too few samples for the dimension) is
    a configuration error and raises.
    """
    if g1.k != g2.k:
        raise ValueError(f"dimension mismatch: {g1.k} vs {g2.k}")
    k = g1.k
    n1, n2 = g1.n, g2.n
    if n1 + n2 - 2 < k:
        raise ValueError(f"n1+n2-2 = {n1 + n2 - 2} is smaller than the dimension k = {k}")

    sp = ((n1 - 1) * g1.cov + (n2 - 1) * g2.cov) / (n1 + n2 - 2)
    w = np.linalg.eigvalsh(sp)
    if not (w.min() > 0 and w.max() < COND_LIMIT * w.min()):
        return float("nan"), float("nan")

    diff = g1.mean - g2.mean
    t2 = float((n1 * n2 / (n1 + n2)) * diff @ np.linalg.solve(sp, diff))
    t2 = max(t2, 0.0)
    dof2 = n1 + n2 - k - 1
    f_stat = t2 * dof2 / ((n1 + n2 - 2) * k)
    p = float(sps.f.sf(f_stat, k, dof2))
    return t2, p


def t_test(g1: GroupSample, g2: GroupSample, axis: int = 0) -> tuple[float, float]:
    """Pooled-variance two-sample t on one coordinate, two-sided p.

    Sign convention: group1 minus group2.  Zero pooled variance yields
    (nan, nan).
    """
    if g1.n < 2 or g2.n < 2:
        raise ValueError("t test needs at least 2 subjects per group")
    n1, n2 = g1.n, g2.n
    dof = n1 + n2 - 2
    pooled_var = ((n1 - 1) * g1.cov[axis, axis] + (n2 - 1) * g2.cov[axis, axis]) / dof
    if not pooled_var > 0:
        return float("nan"), float("nan")
    t = float((g1.mean[axis] - g2.mean[axis]) / np.sqrt(pooled_var * (1.0 / n1 + 1.0 / n2)))
    p = float(2.0 * sps.t.sf(abs(t), dof))
    return t, p


def _fill_map(mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.full(mask.shape, np.nan)
    out[mask] = values
    return out


def statistic_map_from_projection(proj: ProjectedStudy) -> StatisticMap:
    """Full-grid statistic map for a projection's own group labels."""
    n1 = int((proj.groups == 0).sum())
    n2 = int((proj.groups == 1).sum())
    stat, p, degen = pooled_statistics(proj.coords, proj.groups)
    degen = degen | proj.axis_degenerate
    stat = np.where(degen, np.nan, stat)
    p = np.where(degen, np.nan, p)

    return StatisticMap(
        stat=_fill_map(proj.mask, stat),
        p=_fill_map(proj.mask, p),
        kind="t" if proj.k == 1 else "t2",
        axes=proj.axes,
        n1=n1,
        n2=n2,
        mask=proj.mask.copy(),
        degenerate=_fill_map(proj.mask, degen.astype(float)) == 1.0,
        spacing=proj.spacing,
    )


def run_voxelwise_test(dataset: StudyDataset, config: TestConfig) -> StatisticMap:
    """Per-voxel t or Hotelling map over the configured axes."""
    n1, n2 = dataset.group_sizes()
    _check_design(n1, n2, config.k)
    proj = project_study(dataset, config.axes, config.smoothing_sigma)
    return statistic_map_from_projection(proj)


def difference_and_variance_maps(
    dataset: StudyDataset,
    axes: tuple[str, ...],
    smoothing_sigma: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Group mean-difference magnitude and pooled covariance trace.

    Both maps are over the selected axes only, NaN outside the mask and at
    voxels with degenerate axes.
    """
    n1, n2 = dataset.group_sizes()
    _check_design(n1, n2, len(axes))
    proj = project_study(dataset, tuple(axes), smoothing_sigma)

    x1 = proj.coords[proj.groups == 0]
    x2 = proj.coords[proj.groups == 1]
    diff = np.linalg.norm(x1.mean(axis=0) - x2.mean(axis=0), axis=-1)
    d1 = x1 - x1.mean(axis=0)
    d2 = x2 - x2.mean(axis=0)
    pooled_trace = ((d1**2).sum(axis=(0, 2)) + (d2**2).sum(axis=(0, 2))) / (n1 + n2 - 2)

    diff = np.where(proj.axis_degenerate, np.nan, diff)
    pooled_trace = np.where(proj.axis_degenerate, np.nan, pooled_trace)
    return _fill_map(dataset.mask, diff), _fill_map(dataset.mask, pooled_trace)
