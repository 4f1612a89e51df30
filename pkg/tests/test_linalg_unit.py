"""
Unit tests for the dense linear algebra kernels
"""

import numpy as np
import pytest

from repnet.domain.errors import (
    ConvergenceError,
    DegenerateInputError,
    InsufficientSamplesError,
    NumericalError,
    ShapeError,
)
from repnet.numerics.linalg import cross_covariance, matmul, pearson, top_eigenpair


def naive_matmul(a, b):
    out = np.zeros((len(a), len(b[0])))
    for i in range(len(a)):
        for j in range(len(b[0])):
            acc = 0.0
            for t in range(len(b)):
                acc += a[i][t] * b[t][j]
            out[i, j] = acc
    return out


@pytest.mark.unit
class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), m), m)

    def test_column_selection(self):
        out = matmul([[1, 2], [3, 4]], [[0], [1]])
        assert out.tolist() == [[2.0], [4.0]]

    def test_matches_triple_loop(self, rng):
        # small integers keep every partial sum exact
        a = rng.integers(-9, 10, size=(5, 4)).astype(float)
        b = rng.integers(-9, 10, size=(4, 3)).astype(float)
        assert np.array_equal(matmul(a, b), naive_matmul(a, b))

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"2x3 by 2x2"):
            matmul(np.ones((2, 3)), np.ones((2, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            matmul([[np.nan]], [[1.0]])

    def test_associative(self, rng):
        for _ in range(10):
            a, b, c = rng.normal(size=(4, 5)), rng.normal(size=(5, 3)), rng.normal(size=(3, 6))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert np.allclose(left, right, rtol=1e-9, atol=1e-12)


@pytest.mark.unit
class TestCrossCovariance:
    def test_constant_column_gives_zero_row_and_column(self, rng):
        x = rng.normal(size=(20, 3))
        x[:, 1] = 4.2
        cov = cross_covariance(x, x)
        assert not cov[1].any()
        assert not cov[:, 1].any()

    def test_symmetric_for_same_input(self, rng):
        x = rng.normal(size=(30, 4))
        cov = cross_covariance(x, x)
        assert np.allclose(cov, cov.T, atol=1e-15)
        assert np.linalg.eigvalsh(cov).min() >= -1e-12

    def test_hand_summed_oracle(self):
        x = np.array([[1.0, 2.0], [3.0, 0.0], [2.0, 4.0]])
        y = np.array([[0.0, 1.0], [2.0, 1.0], [4.0, 4.0]])
        xm, ym = x.mean(axis=0), y.mean(axis=0)
        expected = sum(np.outer(x[i] - xm, y[i] - ym) for i in range(3)) / 2
        assert np.allclose(cross_covariance(x, y), expected, rtol=0, atol=1e-15)

    def test_needs_two_samples(self):
        with pytest.raises(InsufficientSamplesError):
            cross_covariance(np.ones((1, 2)), np.ones((1, 2)))

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            cross_covariance(np.ones((3, 2)), np.ones((4, 2)))


@pytest.mark.unit
class TestTopEigenpair:
    def test_diagonal(self):
        lam, vec = top_eigenpair(np.diag([3.0, 1.0]))
        assert lam == pytest.approx(3.0, abs=1e-9)
        assert np.allclose(vec, [1.0, 0.0], atol=1e-7)

    def test_symmetric_closed_form(self):
        lam, vec = top_eigenpair([[2.0, 1.0], [1.0, 2.0]])
        assert lam == pytest.approx(3.0, abs=1e-9)
        assert np.allclose(vec, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-7)

    def test_random_symmetric_against_long_power_run(self, rng):
        a = rng.normal(size=(6, 6))
        m = a @ a.T
        v = np.ones(6) / np.sqrt(6)
        for _ in range(10_000):
            v = m @ v
            v /= np.linalg.norm(v)
        oracle = float(v @ m @ v)
        lam, vec = top_eigenpair(m)
        assert abs(lam - oracle) <= 1e-8 * oracle
        assert np.linalg.norm(m @ vec - lam * vec) <= 1e-6 * np.linalg.norm(m)
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_sign_is_canonical(self):
        _, vec = top_eigenpair(np.diag([5.0, 1.0, 2.0]), seed=3)
        assert vec[0] > 0

    def test_zero_matrix(self):
        lam, vec = top_eigenpair(np.zeros((3, 3)))
        assert lam == 0.0
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_non_square(self):
        with pytest.raises(ShapeError):
            top_eigenpair(np.ones((2, 3)))

    def test_iteration_cap_refines_near_equal_pair(self):
        lam, vec = top_eigenpair(np.diag([1.0, 0.999]), max_iter=2)
        assert lam == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(vec, [1.0, 0.0], atol=1e-6)

    def test_iteration_cap_reports_residual(self):
        with pytest.raises(ConvergenceError) as info:
            top_eigenpair([[0.0, -1.0], [1.0, 0.0]], max_iter=2)
        assert info.value.residual is not None and info.value.residual > 0

    def test_clustered_top_eigenvalues(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        m = q @ np.diag([1.0, 1.0 - 1e-5, 1.0 - 2e-5, 0.5, 0.2, 0.1]) @ q.T
        lam, vec = top_eigenpair(m)
        assert lam == pytest.approx(1.0, abs=3e-5)
        assert np.linalg.norm(m @ vec - lam * vec) <= 1e-8 * np.linalg.norm(m)

    def test_ridged_covariance_spectrum(self, rng):
        x = rng.normal(size=(50, 2))
        s = np.cov(x, rowvar=False)
        whitened = np.linalg.solve(s + 1e-4 * np.eye(2), s)
        m = whitened @ whitened.T
        lam, vec = top_eigenpair(0.5 * (m + m.T))
        assert lam == pytest.approx(np.linalg.eigvalsh(m).max(), abs=1e-9)
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_rotation_has_no_real_dominant_pair(self):
        with pytest.raises(ConvergenceError):
            top_eigenpair([[0.0, -1.0], [1.0, 0.0]])


@pytest.mark.unit
class TestPearson:
    def test_perfect(self, rng):
        u = rng.normal(size=10)
        assert pearson(u, u) == pytest.approx(1.0)
        assert pearson(u, -u) == pytest.approx(-1.0)

    def test_orthogonal_zero_mean(self):
        assert pearson([1, -1, 1, -1], [1, 1, -1, -1]) == pytest.approx(0.0, abs=1e-15)

    def test_bounded(self, rng):
        for _ in range(20):
            r = pearson(rng.normal(size=5), rng.normal(size=5))
            assert -1.0 <= r <= 1.0

    def test_positive_affine_invariance(self, rng):
        u, v = rng.normal(size=25), rng.normal(size=25)
        r = pearson(u, v)
        assert pearson(3.0 * u + 7.0, v) == pytest.approx(r, abs=1e-12)
        assert pearson(u, 0.5 * v - 2.0) == pytest.approx(r, abs=1e-12)

    def test_constant_input(self):
        with pytest.raises(DegenerateInputError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])
