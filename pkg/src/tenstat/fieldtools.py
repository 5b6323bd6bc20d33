"""Volume-level utilities: smoothing, mean fields, synthetic data.

Hosts the two container types used across the package (TensorVolume for a
single field, StudyDataset for a two-group cohort), masked Gaussian
pre-smoothing of embedded coefficient volumes, the voxelwise Log-Euclidean
mean field, and the synthetic generators used by examples and calibration
tests: a six-region phantom whose regions each perturb exactly one degree
of freedom of a base tensor, and an i.i.d. Gaussian cohort.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import convolve1d
from scipy.optimize import brentq

from .tensor import (
    SymTensor3,
    eigensystem,
    embed,
    embed_array,
    log_euclidean_mean,
    unembed_array,
)


class InfeasibleEffectError(ValueError):
    """A phantom effect asks for an invariant value outside its range."""


@dataclass
class TensorVolume:
    """One tensor field: embedded six-vectors on a regular grid."""

    data: np.ndarray        # (ni, nj, nk, 6) float64
    spacing: tuple[float, float, float]
    mask: np.ndarray        # (ni, nj, nk) bool

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4 or self.data.shape[-1] != 6:
            raise ValueError(f"tensor volume must be (ni, nj, nk, 6), got {self.data.shape}")
        if any(d <= 0 for d in self.data.shape[:3]):
            raise ValueError("grid dimensions must be positive")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.data.shape[:3]:
            raise ValueError("mask grid does not match data grid")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]


@dataclass
class StudyDataset:
    """Coregistered subject volumes with two-group labels.

    groups[i] is 0 or 1, indexing into group_names; all subject volumes
    share one grid, mask, and spacing.
    """

    volumes: np.ndarray      # (n_subjects, ni, nj, nk, 6) float64
    groups: np.ndarray       # (n_subjects,) int, values 0 and 1
    subject_ids: list[str]
    mask: np.ndarray         # (ni, nj, nk) bool
    spacing: tuple[float, float, float]
    group_names: tuple[str, str] = ("group1", "group2")
    background: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.volumes = np.asarray(self.volumes, dtype=np.float64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.spacing = tuple(float(s) for s in self.spacing)
        if self.volumes.ndim != 5 or self.volumes.shape[-1] != 6:
            raise ValueError(f"volumes must be (n, ni, nj, nk, 6), got {self.volumes.shape}")
        n = self.volumes.shape[0]
        if self.groups.shape != (n,) or len(self.subject_ids) != n:
            raise ValueError("groups/subject_ids length must match the subject count")
        if not np.all(np.isin(self.groups, (0, 1))):
            raise ValueError("group labels must be 0 or 1")
        if self.mask.shape != self.volumes.shape[1:4]:
            raise ValueError("mask grid does not match volume grid")
        if len(set(self.subject_ids)) != n:
            raise ValueError("subject ids must be unique")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.volumes.shape[1:4]

    @property
    def n_subjects(self) -> int:
        return self.volumes.shape[0]

    def group_indices(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.groups == g)

    def group_sizes(self) -> tuple[int, int]:
        return int((self.groups == 0).sum()), int((self.groups == 1).sum())

    def masked_coefficients(self) -> np.ndarray:
        """(n_subjects, n_mask_voxels, 6) view in C-order voxel sequence."""
        return self.volumes[:, self.mask, :]

    def with_volumes(self, volumes: np.ndarray) -> "StudyDataset":
        return replace(self, volumes=volumes)


# ---------------------------------------------------------------------------
# Smoothing


def smooth_coefficients(data: np.ndarray, sigma_voxels: float, mask: np.ndarray) -> np.ndarray:
    """Masked, normalized, separable Gaussian on a (ni, nj, nk, c) array.

    Out-of-mask voxels contribute zero weight and read zero in the output;
    in-mask values are renormalized by the smoothed mask so edges do not
    darken.  sigma of 0 returns the input unchanged (copied).
    """
    if sigma_voxels < 0:
        raise ValueError("sigma must be nonnegative")
    data = np.asarray(data, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if sigma_voxels == 0:
        out = data.copy()
        out[~mask] = 0.0
        return out

    radius = math.ceil(3.0 * sigma_voxels)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x**2) / (2.0 * sigma_voxels**2))
    kernel /= kernel.sum()

    weights = mask.astype(np.float64)
    num = data * weights[..., None]
    den = weights
    for axis in range(3):
        num = convolve1d(num, kernel, axis=axis, mode="constant", cval=0.0)
        den = convolve1d(den, kernel, axis=axis, mode="constant", cval=0.0)

    out = np.zeros_like(data)
    safe = den > 0
    np.divide(num, den[..., None], out=out, where=(safe & mask)[..., None])
    return out


def smooth(volume: TensorVolume, sigma_voxels: float) -> TensorVolume:
    return TensorVolume(
        data=smooth_coefficients(volume.data, sigma_voxels, volume.mask),
        spacing=volume.spacing,
        mask=volume.mask.copy(),
    )


def smooth_dataset(dataset: StudyDataset, sigma_voxels: float) -> StudyDataset:
    if sigma_voxels == 0:
        return dataset
    out = np.stack(
        [smooth_coefficients(v, sigma_voxels, dataset.mask) for v in dataset.volumes]
    )
    return dataset.with_volumes(out)


# ---------------------------------------------------------------------------
# Mean field


def mean_field(dataset: StudyDataset, clamp: bool = False, pd_floor: float = 1e-9) -> TensorVolume:
    """Voxelwise Log-Euclidean mean over all subjects of both groups.

    Requires positive definite tensors in-mask; a violation raises with the
    subject id and voxel coordinates unless clamping is enabled.
    """
    mask = dataset.mask
    coeffs = dataset.masked_coefficients()
    mats = unembed_array(coeffs)

    if not clamp:
        w = np.linalg.eigvalsh(mats)
        viol = w[..., 0] <= pd_floor
        if viol.any():
            subj, vox = np.nonzero(viol)
            ijk = np.array(np.nonzero(mask)).T[vox[0]]
            raise ValueError(
                f"subject {dataset.subject_ids[subj[0]]!r} is not positive definite at "
                f"voxel {tuple(int(c) for c in ijk)} "
                f"(smallest eigenvalue {w[subj[0], vox[0], 0]:.3e}); "
                "enable clamping or repair the data"
            )

    mean = log_euclidean_mean(mats, axis=0, pd_floor=pd_floor, clamp=clamp)
    out = np.zeros(dataset.dims + (6,), dtype=np.float64)
    out[mask] = embed_array(mean)
    return TensorVolume(data=out, spacing=dataset.spacing, mask=mask.copy())


# ---------------------------------------------------------------------------
# Phantom generation


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _fa_of_eigs(lam: np.ndarray) -> float:
    r1 = float(np.linalg.norm(lam))
    if r1 == 0:
        return 0.0
    dev = lam - lam.mean()
    return math.sqrt(1.5) * float(np.linalg.norm(dev)) / r1


def _mode_of_eigs(lam: np.ndarray) -> float:
    dev = lam - lam.mean()
    s = float(np.linalg.norm(dev))
    if s == 0:
        return 0.0
    return 3.0 * math.sqrt(6.0) * float(np.prod(dev / s))


_ROOT_TOL = 1e-10


def _solve_fa_target(lam: np.ndarray, target: float) -> np.ndarray:
    """Eigenvalues with fa == target, holding norm and mode fixed.

    Moves along the 1-D family that rescales the deviatoric part while
    compensating the mean so the overall norm stays put; the deviatoric
    direction (hence mode) never changes.
    """
    if not 0.0 <= target <= 1.0:
        raise InfeasibleEffectError(f"fa target {target:.6g} outside [0, 1]")
    r1 = float(np.linalg.norm(lam))
    dev = lam - lam.mean()
    s0 = float(np.linalg.norm(dev))
    if s0 < 1e-12:
        raise InfeasibleEffectError("cannot change fa of an isotropic tensor: deviatoric direction undefined")
    direction = dev / s0
    mean_sign = 1.0 if lam.mean() >= 0 else -1.0

    def lam_at(s: float) -> np.ndarray:
        mu = mean_sign * math.sqrt(max(r1**2 - s**2, 0.0) / 3.0)
        return mu + direction * s

    def f(s: float) -> float:
        return _fa_of_eigs(lam_at(s)) - target

    s_max = r1 * math.sqrt(2.0 / 3.0)
    root = brentq(f, 0.0, s_max, xtol=_ROOT_TOL)
    return lam_at(root)


def _solve_mode_target(lam: np.ndarray, target: float) -> np.ndarray:
    """Eigenvalues with mode == target, holding norm and fa fixed.

    Sweeps the deviatoric angle; the deviatoric magnitude and the mean are
    untouched, so fa and the overall norm are preserved exactly.
    """
    if not -1.0 <= target <= 1.0:
        raise InfeasibleEffectError(f"mode target {target:.6g} outside [-1, 1]")
    mu = float(lam.mean())
    dev = lam - mu
    s = float(np.linalg.norm(dev))
    if s < 1e-12:
        raise InfeasibleEffectError("cannot change mode of an isotropic tensor: deviatoric direction undefined")

    def lam_at(theta: float) -> np.ndarray:
        cs = np.array(
            [
                math.cos(theta),
                math.cos(theta - 2.0 * math.pi / 3.0),
                math.cos(theta + 2.0 * math.pi / 3.0),
            ]
        )
        return mu + math.sqrt(2.0 / 3.0) * s * cs

    def g(theta: float) -> float:
        return _mode_of_eigs(lam_at(theta)) - target

    root = brentq(g, 0.0, math.pi / 3.0, xtol=_ROOT_TOL)
    return lam_at(root)


@dataclass(frozen=True)
class RegionEffect:
    """One region box and the single-degree change applied inside it.

    box is (i0, i1, j0, j1, k0, k1), half-open.  Angles are radians about
    the base tensor's eigenvectors (rot1 about the principal one).
    """

    box: tuple[int, int, int, int, int, int]
    norm_scale: float = 1.0
    fa_delta: float = 0.0
    mode_delta: float = 0.0
    rot1_angle: float = 0.0
    rot2_angle: float = 0.0
    rot3_angle: float = 0.0

    def to_dict(self) -> dict:
        d = {"box": list(self.box)}
        for name in ("norm_scale", "fa_delta", "mode_delta", "rot1_angle", "rot2_angle", "rot3_angle"):
            value = getattr(self, name)
            default = 1.0 if name == "norm_scale" else 0.0
            if value != default:
                d[name] = value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegionEffect":
        return cls(box=tuple(int(v) for v in d["box"]), **{k: float(v) for k, v in d.items() if k != "box"})


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for a two-group synthetic study.

    Group A is the base field plus noise; group B additionally applies each
    region's effect inside its box.  Noise is i.i.d. Gaussian on the
    embedded coefficients, one RNG stream per subject keyed by
    (seed, subject index).
    """

    dims: tuple[int, int, int]
    regions: tuple[RegionEffect, ...]
    base_tensor: SymTensor3
    noise_sigma: float
    subjects_per_group: int
    seed: int
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def to_dict(self) -> dict:
        t = self.base_tensor
        return {
            "kind": "phantom",
            "dims": list(self.dims),
            "spacing_mm": list(self.spacing),
            "base_tensor": [t.d11, t.d22, t.d33, t.d12, t.d13, t.d23],
            "noise_sigma": self.noise_sigma,
            "subjects_per_group": self.subjects_per_group,
            "seed": self.seed,
            "regions": [r.to_dict() for r in self.regions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(
            dims=tuple(int(v) for v in d["dims"]),
            regions=tuple(RegionEffect.from_dict(r) for r in d["regions"]),
            base_tensor=SymTensor3(*(float(v) for v in d["base_tensor"])),
            noise_sigma=float(d["noise_sigma"]),
            subjects_per_group=int(d["subjects_per_group"]),
            seed=int(d["seed"]),
            spacing=tuple(float(v) for v in d.get("spacing_mm", (1.0, 1.0, 1.0))),
        )


def apply_effect(base: SymTensor3, effect: RegionEffect) -> SymTensor3:
    """The modified tensor for one region, built in the base eigenframe.

    Order: norm scaling, fa adjustment, mode adjustment, then rotations
    about the base eigenvectors (principal first).  Each step preserves the
    invariants it does not target.  A no-op effect returns the base tensor
    itself rather than a reconstruction through the eigendecomposition.
    """
    if (
        effect.norm_scale == 1.0
        and effect.fa_delta == 0.0
        and effect.mode_delta == 0.0
        and effect.rot1_angle == 0.0
        and effect.rot2_angle == 0.0
        and effect.rot3_angle == 0.0
    ):
        return base
    es = eigensystem(base)
    lam = es.values.copy()

    if effect.norm_scale != 1.0:
        if effect.norm_scale <= 0:
            raise InfeasibleEffectError(f"norm_scale must be positive, got {effect.norm_scale}")
        lam = lam * effect.norm_scale
    if effect.fa_delta != 0.0:
        lam = _solve_fa_target(lam, _fa_of_eigs(lam) + effect.fa_delta)
    if effect.mode_delta != 0.0:
        lam = _solve_mode_target(lam, _mode_of_eigs(lam) + effect.mode_delta)

    m = (es.vectors * lam) @ es.vectors.T
    for angle, axis_index in ((effect.rot1_angle, 0), (effect.rot2_angle, 1), (effect.rot3_angle, 2)):
        if angle != 0.0:
            r = rotation_matrix(es.vectors[:, axis_index], angle)
            m = r @ m @ r.T
    m = 0.5 * (m + m.T)
    return SymTensor3.from_matrix(m)


def _validate_regions(dims: tuple[int, int, int], regions: tuple[RegionEffect, ...]) -> None:
    occupancy = np.zeros(dims, dtype=bool)
    for idx, region in enumerate(regions):
        i0, i1, j0, j1, k0, k1 = region.box
        if not (0 <= i0 < i1 <= dims[0] and 0 <= j0 < j1 <= dims[1] and 0 <= k0 < k1 <= dims[2]):
            raise ValueError(f"region {idx} box {region.box} exceeds grid {dims}")
        sel = occupancy[i0:i1, j0:j1, k0:k1]
        if sel.any():
            raise ValueError(f"region {idx} overlaps an earlier region")
        occupancy[i0:i1, j0:j1, k0:k1] = True


def _subject_rng(seed: int, subject_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, subject_index], dtype=np.uint64)))


def generate_phantom(spec: PhantomSpec) -> StudyDataset:
    """Build the two-group synthetic study described by ``spec``."""
    _validate_regions(spec.dims, spec.regions)

    base_vec = embed(spec.base_tensor).vec
    field_a = np.broadcast_to(base_vec, spec.dims + (6,)).copy()
    field_b = field_a.copy()
    for region in spec.regions:
        i0, i1, j0, j1, k0, k1 = region.box
        field_b[i0:i1, j0:j1, k0:k1] = embed(apply_effect(spec.base_tensor, region)).vec

    n = spec.subjects_per_group
    if n < 1:
        raise ValueError("subjects_per_group must be at least 1")
    volumes = np.empty((2 * n,) + spec.dims + (6,), dtype=np.float64)
    clamped = 0
    for s in range(2 * n):
        base = field_a if s < n else field_b
        if spec.noise_sigma > 0:
            rng = _subject_rng(spec.seed, s)
            vol = base + rng.normal(0.0, spec.noise_sigma, size=base.shape)
            vol, nfix = _clamp_nonpositive(vol)
            clamped += nfix
        else:
            vol = base.copy()
        volumes[s] = vol
    if clamped:
        warnings.warn(
            f"noise drove {clamped} tensors non-positive-definite; eigenvalues clamped to 1e-9",
            stacklevel=2,
        )

    ids = [f"A{idx:02d}" for idx in range(n)] + [f"B{idx:02d}" for idx in range(n)]
    return StudyDataset(
        volumes=volumes,
        groups=np.array([0] * n + [1] * n),
        subject_ids=ids,
        mask=np.ones(spec.dims, dtype=bool),
        spacing=spec.spacing,
    )


def _clamp_nonpositive(vol: np.ndarray, floor: float = 1e-9) -> tuple[np.ndarray, int]:
    """Floor eigenvalues of non-PD tensors in an embedded volume."""
    mats = unembed_array(vol)
    wmin = np.linalg.eigvalsh(mats)[..., 0]
    bad = wmin <= 0.0
    count = int(bad.sum())
    if count:
        w, q = np.linalg.eigh(mats[bad])
        w = np.maximum(w, floor)
        fixed = np.einsum("...ik,...k,...jk->...ij", q, w, q)
        vol = vol.copy()
        vol[bad] = embed_array(fixed)
    return vol, count


def six_region_phantom_spec(
    subjects_per_group: int = 20,
    noise_sigma: float = 0.05,
    seed: int = 42,
    dims: tuple[int, int, int] = (32, 32, 32),
) -> PhantomSpec:
    """The canonical six-region phantom: one degree of freedom per region.

    Regions sit on a 3 x 2 grid of disjoint boxes separated by gaps, so
    detected clusters cannot merge under 26-connectivity.  Effect sizes are
    calibrated to comparable embedded-space magnitudes (about 0.15 against
    a base norm of 1.9).
    """
    base = np.diag([1.7, 0.8, 0.3])
    r = rotation_matrix(np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0), 0.6)
    base_tensor = SymTensor3.from_matrix(r @ base @ r.T)

    ni, nj, nk = dims
    if ni < 9 or nj < 6 or nk < 2:
        raise ValueError(f"six-region layout needs a grid of at least 9 x 6 x 2, got {dims}")
    si, sj = ni // 3, nj // 2
    mi, mj = max(1, si // 5), max(1, sj // 5)
    i_spans = [(c * si + mi, (c + 1) * si - mi) for c in range(3)]
    j_spans = [(c * sj + mj, (c + 1) * sj - mj) for c in range(2)]
    k_span = (nk // 4, nk - nk // 4)
    boxes = [
        (i0, i1, j0, j1, k_span[0], k_span[1])
        for j0, j1 in j_spans
        for i0, i1 in i_spans
    ]
    effects = (
        {"norm_scale": 0.92},
        {"fa_delta": -0.10},
        {"mode_delta": -0.30},
        {"rot1_angle": 0.20},
        {"rot2_angle": 0.10},
        {"rot3_angle": 0.12},
    )
    regions = tuple(RegionEffect(box=box, **eff) for box, eff in zip(boxes, effects))
    return PhantomSpec(
        dims=dims,
        regions=regions,
        base_tensor=base_tensor,
        noise_sigma=noise_sigma,
        subjects_per_group=subjects_per_group,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Gaussian cohort


def generate_gaussian_cohort(
    mean1: np.ndarray,
    mean2: np.ndarray,
    cov: np.ndarray,
    n1: int,
    n2: int,
    dims: tuple[int, int, int],
    seed: int,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> StudyDataset:
    """I.i.d. multivariate-normal embedded tensors, per voxel per subject."""
    mean1 = np.asarray(mean1, dtype=np.float64).reshape(6)
    mean2 = np.asarray(mean2, dtype=np.float64).reshape(6)
    cov = np.asarray(cov, dtype=np.float64).reshape(6, 6)
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise ValueError(f"covariance is not positive semidefinite (eigenvalue {w.min():.3e})")
    factor = v * np.sqrt(np.maximum(w, 0.0))

    if n1 < 1 or n2 < 1:
        raise ValueError("group sizes must be at least 1")
    nvox = int(np.prod(dims))
    volumes = np.empty((n1 + n2,) + tuple(dims) + (6,), dtype=np.float64)
    for s in range(n1 + n2):
        mean = mean1 if s < n1 else mean2
        rng = _subject_rng(seed, s)
        z = rng.standard_normal(size=(nvox, 6))
        volumes[s] = (mean + z @ factor.T).reshape(tuple(dims) + (6,))

    ids = [f"A{idx:02d}" for idx in range(n1)] + [f"B{idx:02d}" for idx in range(n2)]
    return StudyDataset(
        volumes=volumes,
        groups=np.array([0] * n1 + [1] * n2),
        subject_ids=ids,
        mask=np.ones(tuple(dims), dtype=bool),
        spacing=spacing,
    )
