"""Steerable orthonormal frames in tensor six-vector space.

At a reference tensor (normally the voxel grand mean) the six-dimensional
space of symmetric tensors splits into interpretable directions: the
normalized gradients of the three orthogonal invariants (overall norm,
fractional anisotropy, mode) and three rotation tangents, one per
eigenvector axis.  Projecting group differences onto subsets of these axes
turns an omnibus six-degree test into targeted one-to-six degree tests.

All gradients are evaluated in the eigenframe of the reference tensor,
where the invariant gradients are diagonal and the rotation tangents are
the off-diagonal pair symmetrizations; mutual orthogonality is then exact
by construction.  Axes lose meaning where their defining direction
collapses: anisotropy and mode gradients vanish on isotropic tensors, the
mode gradient also vanishes at mode = +/-1, and a rotation tangent vanishes
when its eigenvalue pair is repeated.  Any axis whose normalizer falls
below ``DEGENERACY_EPS`` is flagged degenerate and excluded downstream
rather than normalized into noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import SymTensor3, eigensystem_array, embed, embed_array

AXIS_NAMES = ("norm", "fa", "mode", "rot1", "rot2", "rot3")
DEGENERACY_EPS = 1e-12

# Rotation tangent k couples eigenvector pair (j, k) and is normalized by
# that pair's eigenvalue gap; with descending eigenvalues the gaps are
# rot1 -> lam2-lam3, rot2 -> lam1-lam3, rot3 -> lam1-lam2.
_ROT_PAIRS = ((1, 2), (0, 2), (0, 1))

_SQRT32 = math.sqrt(1.5)
_3SQRT6 = 3.0 * math.sqrt(6.0)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class IgrtFrame:
    """Orthonormal basis rows b1..b6 at one reference tensor.

    ``basis[i]`` is the embedded six-vector of axis ``AXIS_NAMES[i]``;
    degenerate axes have a zero row and a True flag.
    """

    basis: np.ndarray
    degenerate: np.ndarray

    def axis(self, name: str) -> np.ndarray:
        return self.basis[AXIS_NAMES.index(name)]

    def valid_axis_names(self) -> tuple[str, ...]:
        return tuple(n for n, d in zip(AXIS_NAMES, self.degenerate) if not d)


@dataclass(frozen=True)
class IgrtCoordinates:
    """Projection of one tensor difference onto a frame.

    ``values[i]`` is the signed coordinate along axis i; ``valid[i]`` is
    False (and the value 0) where the frame is degenerate.
    """

    values: np.ndarray
    valid: np.ndarray


def _eigvalue_gradients(lam: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Eigenframe-diagonal gradients of (norm, fa, mode) wrt eigenvalues.

    lam: (..., 3) descending eigenvalues.  Returns (g1, g2, g3, s) where each
    g is (..., 3) and s is the deviatoric norm.  g2/g3 are left unnormalized;
    rows where s < eps contain garbage and must be masked by the caller.
    """
    r1 = np.linalg.norm(lam, axis=-1)
    mu = lam.mean(axis=-1, keepdims=True)
    dev = lam - mu
    s = np.linalg.norm(dev, axis=-1)

    safe_r1 = np.where(r1 < eps, 1.0, r1)[..., None]
    safe_s = np.where(s < eps, 1.0, s)[..., None]

    g1 = lam / safe_r1

    # fa = sqrt(3/2) * s / r1; d s/d lam_i = dev_i / s (dev has zero sum, so
    # the mean-shift term drops), d r1/d lam_i = lam_i / r1.
    g2 = _SQRT32 * (dev / (safe_s * safe_r1) - (safe_s / safe_r1**3) * lam)

    # mode = 3*sqrt(6) * prod(dev) / s^3.  d prod(dev)/d lam_i carries the
    # projection that removes the mean: prod_{k!=i} dev_k - (1/3) sum_j prod_{k!=j} dev_k.
    partial = np.stack(
        [dev[..., (i + 1) % 3] * dev[..., (i + 2) % 3] for i in range(3)],
        axis=-1,
    )
    p = dev[..., 0] * dev[..., 1] * dev[..., 2]
    dprod = partial - partial.sum(axis=-1, keepdims=True) / 3.0
    g3 = _3SQRT6 * (dprod / safe_s**3 - 3.0 * p[..., None] * dev / safe_s**5)
    return g1, g2, g3, s


def build_frames_array(ref: np.ndarray, eps: float = DEGENERACY_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized frame construction at reference six-vectors (..., 6).

    Returns (basis, degenerate): basis (..., 6, 6) with rows b1..b6 and zero
    rows on degenerate axes, degenerate (..., 6) boolean.  A zero reference
    tensor yields an all-degenerate row instead of an error, so masked
    volumes with empty voxels stay processable.
    """
    ref = np.asarray(ref, dtype=np.float64)
    from .tensor import unembed_array  # local import keeps module load cheap

    mats = unembed_array(ref)
    lam, q, _ = eigensystem_array(mats)

    r1 = np.linalg.norm(lam, axis=-1)
    g1, g2, g3, s = _eigvalue_gradients(lam, eps)

    batch = ref.shape[:-1]
    basis = np.zeros(batch + (6, 6), dtype=np.float64)
    degen = np.zeros(batch + (6,), dtype=bool)

    zero_ref = r1 < eps
    iso = s < eps

    # Invariant axes: embed(Q diag(g) Q^T), unit length after normalization.
    for row, g, bad in (
        (0, g1, zero_ref),
        (1, g2, zero_ref | iso),
        (2, g3, zero_ref | iso),
    ):
        norm = np.linalg.norm(g, axis=-1)
        bad = bad | (norm < eps)
        safe = np.where(bad, 1.0, norm)
        unit = g / safe[..., None]
        mat = np.einsum("...ik,...k,...jk->...ij", q, unit, q)
        basis[..., row, :] = np.where(bad[..., None], 0.0, embed_array(mat))
        degen[..., row] = bad

    # Rotation tangents: (e_j e_k^T + e_k e_j^T)/sqrt(2), unit by construction.
    for row, (j, k) in enumerate(_ROT_PAIRS, start=3):
        gap = lam[..., j] - lam[..., k]
        bad = zero_ref | (gap < eps)
        ej = q[..., :, j]
        ek = q[..., :, k]
        outer = np.einsum("...i,...j->...ij", ej, ek)
        mat = _INV_SQRT2 * (outer + np.swapaxes(outer, -1, -2))
        basis[..., row, :] = np.where(bad[..., None], 0.0, embed_array(mat))
        degen[..., row] = bad

    return basis, degen


def build_frame(ref: SymTensor3, eps: float = DEGENERACY_EPS) -> IgrtFrame:
    """Frame at a single reference tensor.  The zero tensor is rejected."""
    if ref.frobenius_norm() < eps:
        raise ValueError("cannot build a frame at the zero tensor: every axis is degenerate")
    basis, degen = build_frames_array(embed(ref).vec, eps=eps)
    return IgrtFrame(basis=basis, degenerate=degen)


def project(diff: np.ndarray, frame: IgrtFrame) -> IgrtCoordinates:
    """Coordinates of an embedded difference vector in a frame.

    Degenerate axes contribute 0 and are marked invalid; energy along them
    is simply not attributed rather than smeared into the valid axes.
    """
    diff = np.asarray(diff, dtype=np.float64)
    if diff.shape != (6,):
        raise ValueError(f"expected a six-vector difference, got shape {diff.shape}")
    values = frame.basis @ diff
    values[frame.degenerate] = 0.0
    return IgrtCoordinates(values=values, valid=~frame.degenerate)


def project_array(diffs: np.ndarray, basis: np.ndarray, degenerate: np.ndarray) -> np.ndarray:
    """Batched projection: diffs (..., V, 6) against per-voxel bases (V, 6, 6)."""
    coords = np.einsum("vab,...vb->...va", basis, diffs)
    return np.where(degenerate, 0.0, coords)


@dataclass(frozen=True)
class ClusterCoordinates:
    """Per-subject frame coordinates aggregated over a cluster of voxels.

    ``values`` is (n_subjects, 6): axes 1-3 (norm, fa, mode) are signed
    means over the cluster, axes 4-6 (rotations) are means of absolute
    values, because rotation tangent signs follow the arbitrary eigenvector
    orientation chosen at each voxel and would cancel if averaged signed.
    ``excluded[i]`` counts cluster voxels dropped from axis i because their
    frame is degenerate there; ``valid[i]`` is False (and the column 0)
    when every voxel was dropped.
    """

    values: np.ndarray
    valid: np.ndarray
    excluded: np.ndarray
    n_voxels: int

    def subject_coordinates(self, index: int) -> IgrtCoordinates:
        return IgrtCoordinates(values=self.values[index].copy(), valid=self.valid.copy())


def cluster_coordinates(coords: np.ndarray, degenerate: np.ndarray) -> ClusterCoordinates:
    """Aggregate per-voxel projections (n_subjects, n_voxels, 6) per subject.

    ``degenerate`` is the (n_voxels, 6) axis-degeneracy of the frames the
    coordinates were projected in; degenerate entries are excluded from the
    average axis by axis rather than zero-filled into it.
    """
    coords = np.asarray(coords, dtype=np.float64)
    degenerate = np.asarray(degenerate, dtype=bool)
    if coords.ndim != 3 or coords.shape[-1] != 6:
        raise ValueError(f"expected coordinates shaped (n_subjects, n_voxels, 6), got {coords.shape}")
    if degenerate.shape != coords.shape[1:]:
        raise ValueError(
            f"degeneracy flags {degenerate.shape} do not match coordinates over {coords.shape[1:]}"
        )
    n_voxels = coords.shape[1]
    if n_voxels == 0:
        raise ValueError("cluster is empty: no voxels to aggregate")

    magnitudes = np.concatenate([coords[..., :3], np.abs(coords[..., 3:])], axis=-1)
    included = (~degenerate).sum(axis=0)
    valid = included > 0
    weights = np.where(degenerate, 0.0, 1.0)
    totals = np.einsum("nvk,vk->nk", magnitudes, weights)
    values = totals / np.where(valid, included, 1)
    values[:, ~valid] = 0.0
    return ClusterCoordinates(
        values=values,
        valid=valid,
        excluded=(n_voxels - included).astype(np.int64),
        n_voxels=n_voxels,
    )


def parseval_check(frame: IgrtFrame, diff: np.ndarray, rtol: float = 1e-9) -> bool:
    """True when |coords|^2 recovers |diff|^2 (valid only with no degeneracy)."""
    coords = project(diff, frame)
    if not np.all(coords.valid):
        raise ValueError("Parseval only holds for a complete (non-degenerate) frame")
    lhs = float(np.sum(coords.values**2))
    rhs = float(np.sum(np.asarray(diff) ** 2))
    return abs(lhs - rhs) <= rtol * max(rhs, 1e-300)
