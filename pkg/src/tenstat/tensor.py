"""Symmetric 3x3 tensor primitives.

A tensor is represented two ways: as its 3x3 symmetric matrix, and as a
six-vector in which the off-diagonal components are scaled by sqrt(2) so
that the Euclidean norm of the vector equals the Frobenius norm of the
matrix.  All multivariate statistics downstream run in the six-vector
space; eigen decompositions, invariants and display paths go back through
the matrix form.

Scalar convenience wrappers operate on single tensors; the ``*_array``
functions are vectorized over arbitrary leading batch dimensions and are
the ones used in volume pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT2 = math.sqrt(2.0)

# Embedded component order: [Dxx, Dyy, Dzz, sqrt2*Dxy, sqrt2*Dxz, sqrt2*Dyz].
_DIAG = (0, 1, 2)
_OFFDIAG = ((0, 1), (0, 2), (1, 2))


class DegenerateTensorError(ValueError):
    """A tensor violates a positivity or conditioning precondition."""


@dataclass(frozen=True)
class SymTensor3:
    """A symmetric 3x3 tensor stored as its six independent components."""

    d11: float
    d22: float
    d33: float
    d12: float
    d13: float
    d23: float

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.d11, self.d12, self.d13],
                [self.d12, self.d22, self.d23],
                [self.d13, self.d23, self.d33],
            ],
            dtype=np.float64,
        )

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SymTensor3":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(m).max()))):
            raise ValueError("matrix is not symmetric")
        return cls(m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2])

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.as_matrix()))


@dataclass(frozen=True)
class EmbeddedTensor:
    """Six-vector form of a symmetric tensor.

    ``vec`` holds [d11, d22, d33, sqrt2*d12, sqrt2*d13, sqrt2*d23].  When the
    value was produced by :func:`embed`, the original tensor rides along in a
    hidden field so that :func:`unembed` can return it bit-for-bit; scaling a
    float by sqrt(2) and dividing back is not an exact round trip for every
    double, so the inverse is kept by construction rather than recomputed.
    """

    vec: np.ndarray
    _source: SymTensor3 | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.vec, dtype=np.float64)
        if v.shape != (6,):
            raise ValueError(f"embedded tensor must have 6 components, got shape {v.shape}")
        object.__setattr__(self, "vec", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


def embed(t: SymTensor3) -> EmbeddedTensor:
    """Map a tensor to its isometric six-vector."""
    v = np.array(
        [t.d11, t.d22, t.d33, SQRT2 * t.d12, SQRT2 * t.d13, SQRT2 * t.d23],
        dtype=np.float64,
    )
    return EmbeddedTensor(v, _source=t)


def unembed(e: EmbeddedTensor) -> SymTensor3:
    """Invert :func:`embed`.

    Exact for values produced by :func:`embed`; for vectors assembled any
    other way the off-diagonals are recovered by division (correctly rounded,
    so at most one ulp from a hypothetical source).
    """
    if e._source is not None:
        return e._source
    v = e.vec
    return SymTensor3(v[0], v[1], v[2], v[3] / SQRT2, v[4] / SQRT2, v[5] / SQRT2)


def embed_array(m: np.ndarray) -> np.ndarray:
    """Vectorized embed: (..., 3, 3) symmetric matrices -> (..., 6)."""
    m = np.asarray(m, dtype=np.float64)
    out = np.empty(m.shape[:-2] + (6,), dtype=np.float64)
    for c, i in enumerate(_DIAG):
        out[..., c] = m[..., i, i]
    for c, (i, j) in enumerate(_OFFDIAG):
        out[..., 3 + c] = SQRT2 * m[..., i, j]
    return out


def unembed_array(v: np.ndarray) -> np.ndarray:
    """Vectorized unembed: (..., 6) -> (..., 3, 3) symmetric matrices."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty(v.shape[:-1] + (3, 3), dtype=np.float64)
    for c, i in enumerate(_DIAG):
        out[..., i, i] = v[..., c]
    for c, (i, j) in enumerate(_OFFDIAG):
        out[..., i, j] = out[..., j, i] = v[..., 3 + c] / SQRT2
    return out


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in descending order with matching unit eigenvectors.

    ``vectors[:, i]`` is the eigenvector for ``values[i]``.  Each vector's
    sign is fixed so its largest-magnitude component is positive, which makes
    the decomposition deterministic away from eigenvalue crossings.
    """

    values: np.ndarray
    vectors: np.ndarray
    degenerate: bool

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def eigensystem_array(m: np.ndarray, gap_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched eigen decomposition of (..., 3, 3) symmetric matrices.

    Returns (values, vectors, degenerate): values descending along the last
    axis, vectors with columns matching values, and a boolean flag per
    matrix set when any eigenvalue gap falls below ``gap_tol``.
    """
    m = np.asarray(m, dtype=np.float64)
    w, q = np.linalg.eigh(m)
    w = w[..., ::-1]
    q = q[..., ::-1]
    # Deterministic sign: make the largest-|.| component of each column positive.
    idx = np.argmax(np.abs(q), axis=-2)
    dominant = np.take_along_axis(q, idx[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(dominant < 0.0, -1.0, 1.0)
    q = q * sign[..., None, :]
    gaps = w[..., :-1] - w[..., 1:]
    degen = np.any(gaps < gap_tol, axis=-1)
    return w, q, degen


def eigensystem(t: SymTensor3 | np.ndarray, gap_tol: float = 1e-12) -> EigenSystem:
    m = t.as_matrix() if isinstance(t, SymTensor3) else np.asarray(t, dtype=np.float64)
    w, q, degen = eigensystem_array(m, gap_tol=gap_tol)
    return EigenSystem(values=w, vectors=q, degenerate=bool(degen))


@dataclass(frozen=True)
class TensorInvariants:
    """Orthogonal invariant set: overall size, anisotropy, and shape.

    norm is the Frobenius norm; fa the fractional anisotropy, in [0, 1] for
    positive semidefinite input; mode the normalized determinant of the
    deviatoric part, in [-1, 1], negative planar and positive linear.
    ``degenerate`` marks the conventional fill-ins (fa of the zero tensor is
    reported as 0, mode of an isotropic tensor as 0).
    """

    norm: float
    fa: float
    mode: float
    degenerate: bool


def invariants_array(v: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Invariants from embedded six-vectors (..., 6).

    Returns (norm, fa, mode, degenerate).  fa and mode are filled with 0
    where their defining quotients collapse (zero or isotropic tensors).
    """
    v = np.asarray(v, dtype=np.float64)
    r1 = np.linalg.norm(v, axis=-1)
    trace = v[..., 0] + v[..., 1] + v[..., 2]
    dev = v.copy()
    for c in range(3):
        dev[..., c] -= trace / 3.0
    s = np.linalg.norm(dev, axis=-1)

    degenerate = (r1 < eps) | (s < eps)
    safe_r1 = np.where(r1 < eps, 1.0, r1)
    safe_s = np.where(s < eps, 1.0, s)

    fa = np.where(r1 < eps, 0.0, math.sqrt(1.5) * s / safe_r1)

    dm = unembed_array(dev / safe_s[..., None])
    mode = np.where(s < eps, 0.0, 3.0 * math.sqrt(6.0) * np.linalg.det(dm))
    return r1, fa, mode, degenerate


def invariants(t: SymTensor3, eps: float = 1e-12) -> TensorInvariants:
    r1, fa, mode, degen = invariants_array(embed(t).vec, eps=eps)
    return TensorInvariants(float(r1), float(fa), float(mode), bool(degen))


def _log_matrices(mats: np.ndarray, pd_floor: float, clamp: bool, label: str) -> np.ndarray:
    w, q = np.linalg.eigh(mats)
    if clamp:
        w = np.maximum(w, pd_floor)
    elif np.any(w <= pd_floor):
        bad = np.nonzero(np.any(w <= pd_floor, axis=-1))
        first = tuple(int(ax[0]) for ax in bad)
        raise DegenerateTensorError(
            f"{label}{first} is not positive definite "
            f"(smallest eigenvalue {w[first].min():.3e} <= {pd_floor:.0e}); "
            "clamp eigenvalues or repair the input"
        )
    logw = np.log(w)
    return np.einsum("...ik,...k,...jk->...ij", q, logw, q)


def _exp_matrices(mats: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(mats)
    return np.einsum("...ik,...k,...jk->...ij", q, np.exp(w), q)


def log_euclidean_mean(
    mats: np.ndarray,
    axis: int = 0,
    pd_floor: float = 1e-9,
    clamp: bool = False,
) -> np.ndarray:
    """Log-Euclidean mean of positive definite matrices along ``axis``.

    Averages matrix logarithms and exponentiates back, which keeps the mean
    positive definite and symmetric.  Tensors whose smallest eigenvalue is
    at or below ``pd_floor`` raise :class:`DegenerateTensorError` naming the
    offending index, unless ``clamp`` is set, in which case eigenvalues are
    floored at ``pd_floor`` before taking logs.
    """
    mats = np.asarray(mats, dtype=np.float64)
    if mats.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) matrices, got shape {mats.shape}")
    mats = np.moveaxis(mats, axis, 0)
    if mats.shape[0] == 0:
        raise ValueError("cannot average an empty set of tensors")
    logs = _log_matrices(mats, pd_floor, clamp, label="tensor ")
    mean_log = logs.mean(axis=0)
    out = _exp_matrices(mean_log)
    return 0.5 * (out + np.swapaxes(out, -1, -2))
