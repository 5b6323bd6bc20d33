"""Tensor embedding, eigen decomposition, invariants, log-Euclidean mean."""

import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.linalg import expm, logm

from tenstat import tensor
from tenstat.tensor import (
    DegenerateTensorError,
    SymTensor3,
    embed,
    embed_array,
    eigensystem,
    eigensystem_array,
    invariants,
    invariants_array,
    log_euclidean_mean,
    unembed,
    unembed_array,
)

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Oracles, written against the definitions rather than the implementation.


def frobenius_direct(m: np.ndarray) -> float:
    """Sum of squares over all nine matrix entries."""
    return math.sqrt(float((np.asarray(m) ** 2).sum()))


def le_mean_scipy(mats) -> np.ndarray:
    """Log-Euclidean mean through scipy's general matrix log/exp."""
    logs = [logm(m) for m in mats]
    return expm(sum(logs) / len(logs)).real


def random_symmetric(rng, scale=1.0):
    a = rng.normal(scale=scale, size=(3, 3))
    return 0.5 * (a + a.T)


def random_spd(rng, jitter=0.05):
    a = rng.normal(size=(3, 3))
    return a @ a.T + jitter * np.eye(3)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------------------
# Embedding


class TestEmbedding:
    def test_identity_tensor(self):
        e = embed(SymTensor3(1, 1, 1, 0, 0, 0))
        npt.assert_array_equal(e.vec, [1, 1, 1, 0, 0, 0])
        assert e.norm() == pytest.approx(math.sqrt(3), rel=1e-15)

    def test_single_offdiagonal_component(self):
        t = SymTensor3(0, 0, 0, 1, 0, 0)
        e = embed(t)
        npt.assert_array_equal(e.vec, [0, 0, 0, SQRT2, 0, 0])
        assert e.norm() == pytest.approx(frobenius_direct(t.as_matrix()), rel=1e-15)
        assert e.norm() == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_isometry_on_random_tensors(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            m = random_symmetric(rng, scale=10.0 ** rng.integers(-3, 4))
            t = SymTensor3.from_matrix(m)
            direct = frobenius_direct(m)
            assert abs(embed(t).norm() - direct) <= 1e-12 * direct

    def test_round_trip_is_bit_identical(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            t = SymTensor3(*rng.normal(size=6))
            back = unembed(embed(t))
            assert back == t  # exact field equality, no tolerance

    def test_unembed_of_foreign_vector_divides_back(self):
        e = tensor.EmbeddedTensor(np.array([1.0, 2.0, 3.0, SQRT2, 2 * SQRT2, 0.0]))
        t = unembed(e)
        assert t.d12 == pytest.approx(1.0, rel=1e-15)
        assert t.d13 == pytest.approx(2.0, rel=1e-15)

    def test_array_paths_match_scalar(self):
        rng = np.random.default_rng(3)
        mats = np.stack([random_symmetric(rng) for _ in range(50)])
        vecs = embed_array(mats)
        for m, v in zip(mats, vecs):
            npt.assert_array_equal(embed(SymTensor3.from_matrix(m)).vec, v)
        npt.assert_allclose(unembed_array(vecs), mats, rtol=0, atol=1e-15)

    def test_array_isometry(self):
        rng = np.random.default_rng(5)
        mats = np.stack([random_symmetric(rng) for _ in range(200)])
        norms = np.linalg.norm(embed_array(mats), axis=-1)
        direct = np.sqrt((mats**2).sum(axis=(-2, -1)))
        npt.assert_allclose(norms, direct, rtol=1e-12)

    def test_rejects_wrong_shapes(self):
        with pytest.raises(ValueError):
            tensor.EmbeddedTensor(np.zeros(5))
        with pytest.raises(ValueError):
            SymTensor3.from_matrix(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            SymTensor3.from_matrix(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0.0]]))


# ---------------------------------------------------------------------------
# Eigen decomposition


class TestEigensystem:
    def test_diagonal_tensor(self):
        es = eigensystem(SymTensor3(3, 2, 1, 0, 0, 0))
        npt.assert_allclose(es.values, [3, 2, 1], rtol=0, atol=0)
        npt.assert_allclose(np.abs(es.vectors), np.eye(3), atol=1e-15)
        assert not es.degenerate
        # sign convention: dominant component positive
        assert all(es.vectors[np.argmax(np.abs(es.vectors[:, i])), i] > 0 for i in range(3))

    def test_isotropic_is_degenerate(self):
        es = eigensystem(SymTensor3(2.5, 2.5, 2.5, 0, 0, 0))
        npt.assert_allclose(es.values, [2.5] * 3, atol=1e-15)
        assert es.degenerate

    def test_reconstruction_error(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            m = random_spd(rng)
            es = eigensystem(m)
            err = np.linalg.norm(es.reconstruct() - m)
            assert err <= 1e-10 * np.linalg.norm(m)

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(17)
        mats = np.stack([random_spd(rng) for _ in range(64)]).reshape(4, 16, 3, 3)
        w, q, degen = eigensystem_array(mats)
        assert w.shape == (4, 16, 3) and q.shape == (4, 16, 3, 3)
        for i in range(4):
            for j in range(16):
                es = eigensystem(mats[i, j])
                npt.assert_array_equal(w[i, j], es.values)
                npt.assert_array_equal(q[i, j], es.vectors)
                assert bool(degen[i, j]) == es.degenerate

    def test_descending_order(self):
        rng = np.random.default_rng(19)
        mats = np.stack([random_symmetric(rng) for _ in range(100)])
        w, _, _ = eigensystem_array(mats)
        assert np.all(np.diff(w, axis=-1) <= 0)


# ---------------------------------------------------------------------------
# Invariants


class TestInvariants:
    def test_isotropic(self):
        inv = invariants(SymTensor3(1, 1, 1, 0, 0, 0))
        assert inv.norm == pytest.approx(math.sqrt(3), rel=1e-15)
        assert inv.fa == 0.0
        assert inv.mode == 0.0
        assert inv.degenerate

    def test_purely_linear(self):
        inv = invariants(SymTensor3(1, 0, 0, 0, 0, 0))
        assert inv.norm == pytest.approx(1.0)
        assert inv.fa == pytest.approx(1.0, abs=1e-12)
        assert inv.mode == pytest.approx(1.0, abs=1e-9)
        assert not inv.degenerate

    def test_purely_planar(self):
        inv = invariants(SymTensor3(1, 1, 0, 0, 0, 0))
        assert inv.norm == pytest.approx(math.sqrt(2), rel=1e-15)
        assert inv.fa == pytest.approx(1 / math.sqrt(2), rel=1e-12)
        assert inv.mode == pytest.approx(-1.0, abs=1e-9)

    def test_zero_tensor_conventions(self):
        inv = invariants(SymTensor3(0, 0, 0, 0, 0, 0))
        assert (inv.norm, inv.fa, inv.mode) == (0.0, 0.0, 0.0)
        assert inv.degenerate

    def test_ranges_on_random_psd(self):
        rng = np.random.default_rng(23)
        mats = np.stack([random_spd(rng, jitter=0.0) for _ in range(500)])
        r1, fa, mode, _ = invariants_array(embed_array(mats))
        assert np.all(r1 > 0)
        assert np.all((fa >= 0) & (fa <= 1 + 1e-12))
        assert np.all((mode >= -1 - 1e-9) & (mode <= 1 + 1e-9))

    def test_rotation_invariance(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            m = random_spd(rng)
            r = random_rotation(rng)
            a = invariants(SymTensor3.from_matrix(m))
            b = invariants(SymTensor3.from_matrix(r @ m @ r.T))
            assert abs(a.norm - b.norm) <= 1e-9 * a.norm
            assert abs(a.fa - b.fa) <= 1e-9
            assert abs(a.mode - b.mode) <= 1e-9

    def test_mode_matches_eigenvalue_formula(self):
        # mode = 3*sqrt(6)*det(deviatoric/|deviatoric|), evaluated from eigenvalues
        rng = np.random.default_rng(31)
        for _ in range(100):
            m = random_spd(rng)
            lam = np.linalg.eigvalsh(m)
            dev = lam - lam.mean()
            s = np.linalg.norm(dev)
            expected = 3 * math.sqrt(6) * np.prod(dev / s)
            assert invariants(SymTensor3.from_matrix(m)).mode == pytest.approx(expected, abs=1e-10)


# ---------------------------------------------------------------------------
# Log-Euclidean mean


class TestLogEuclideanMean:
    def test_mean_of_copies(self):
        rng = np.random.default_rng(37)
        t = random_spd(rng)
        mean = log_euclidean_mean(np.stack([t] * 5))
        assert np.linalg.norm(mean - t) <= 1e-10 * np.linalg.norm(t)

    def test_isotropic_pair_gives_geometric_mean(self):
        a, b = 4.0, 9.0
        mean = log_euclidean_mean(np.stack([a * np.eye(3), b * np.eye(3)]))
        npt.assert_allclose(mean, 6.0 * np.eye(3), rtol=1e-12)

    def test_commuting_pair_oracle(self):
        # Shared eigenbasis: the mean's eigenvalues are per-slot geometric means.
        a = np.diag([2.0, 1.0, 1.0])
        b = np.diag([1.0, 2.0, 1.0])
        mean = log_euclidean_mean(np.stack([a, b]))
        npt.assert_allclose(mean, np.diag([math.sqrt(2), math.sqrt(2), 1.0]), rtol=1e-12)

    def test_against_scipy_logm_expm(self):
        rng = np.random.default_rng(41)
        for _ in range(25):
            mats = np.stack([random_spd(rng) for _ in range(4)])
            npt.assert_allclose(log_euclidean_mean(mats), le_mean_scipy(mats), rtol=1e-9, atol=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(43)
        mats = np.stack([random_spd(rng) for _ in range(6)])
        m1 = log_euclidean_mean(mats)
        m2 = log_euclidean_mean(mats[::-1])
        npt.assert_allclose(m1, m2, rtol=1e-12)

    def test_single_tensor(self):
        rng = np.random.default_rng(47)
        t = random_spd(rng)
        npt.assert_allclose(log_euclidean_mean(t[None]), t, rtol=1e-12)

    def test_non_positive_definite_names_index(self):
        good = np.eye(3)
        bad = np.diag([1.0, 1.0, -0.5])
        with pytest.raises(DegenerateTensorError, match=r"\(2,\)"):
            log_euclidean_mean(np.stack([good, good, bad]))

    def test_clamp_floors_eigenvalues(self):
        bad = np.diag([1.0, 1.0, 0.0])
        mean = log_euclidean_mean(np.stack([bad, np.eye(3)]), clamp=True, pd_floor=1e-9)
        assert np.all(np.isfinite(mean))
        assert np.linalg.eigvalsh(mean).min() > 0

    def test_batched_voxel_axis(self):
        rng = np.random.default_rng(53)
        mats = np.stack([np.stack([random_spd(rng) for _ in range(7)]) for _ in range(3)])
        mean = log_euclidean_mean(mats, axis=0)  # (3, 7, 3, 3) -> (7, 3, 3)
        assert mean.shape == (7, 3, 3)
        for v in range(7):
            npt.assert_allclose(mean[v], le_mean_scipy(mats[:, v]), rtol=1e-9, atol=1e-12)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            log_euclidean_mean(np.zeros((0, 3, 3)))
