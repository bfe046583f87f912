import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balancedmetrics.errors import InvalidInputError, NotPositiveDefiniteError
from balancedmetrics.linalg import (
    HermProduct,
    check_hermitian,
    distance,
    geodesic,
    herm_basis,
    herm_to_vec,
    normalize_det,
    random_hermitian,
    random_unitary,
    vec_to_herm,
)
from support import random_product

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=7)


def _pd(n, seed, spread=1.0):
    return random_product(n, np.random.default_rng(seed), spread)


def _eig_distance(H1, H2):
    # oracle: generalized eigenvalues of H1^{-1} H2, no square roots involved
    w = np.linalg.eigvals(np.linalg.solve(H1.matrix, H2.matrix)).real
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


class TestHermProduct:
    def test_rejects_non_hermitian(self):
        with pytest.raises(InvalidInputError):
            HermProduct(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            HermProduct(np.diag([1.0, -1.0]))

    def test_rejects_relative_tiny_eigenvalue(self):
        with pytest.raises(NotPositiveDefiniteError):
            HermProduct(np.diag([1.0, 1e-13]))

    def test_accepts_small_but_resolved_eigenvalue(self):
        assert HermProduct(np.diag([1.0, 1e-11])).cond == pytest.approx(1e11)

    def test_factors(self, rng):
        H = random_product(6, rng)
        I = np.eye(6)
        assert np.allclose(H.inv @ H.matrix, I, atol=1e-12)
        assert np.allclose(H.sqrt @ H.sqrt, H.matrix, atol=1e-12)
        assert np.allclose(H.invsqrt @ H.matrix @ H.invsqrt, I, atol=1e-12)
        assert H.logdet == pytest.approx(np.log(np.linalg.det(H.matrix).real), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(n=dims, seed=seeds)
    def test_refactor_error(self, n, seed):
        assert _pd(n, seed, 2.0).refactor_error() < 1e-12

    def test_matrix_is_read_only(self):
        H = HermProduct.identity(3)
        with pytest.raises(ValueError):
            H.matrix[0, 0] = 2.0


class TestGeodesic:
    def test_zero_generator(self, rng):
        H = random_product(4, rng)
        for t in (-1.0, 0.3, 2.0):
            assert np.allclose(geodesic(H, np.zeros((4, 4)), t).matrix, H.matrix, atol=1e-12)

    def test_identity_generator_scales(self):
        for t in (-0.7, 0.0, 0.4, 1.5):
            assert np.allclose(geodesic(HermProduct.identity(3), np.eye(3), t).matrix, np.exp(-2 * t) * np.eye(3))

    def test_determinant(self, rng):
        H = random_product(5, rng)
        A = random_hermitian(5, rng)
        G = geodesic(H, A, 1.0)
        assert G.logdet == pytest.approx(H.logdet - 2 * np.trace(A).real, abs=1e-11)

    def test_semigroup_for_diagonal_generator(self):
        H = HermProduct(np.diag([1.0, 2.0, 0.5]))
        A = np.diag([0.3, -0.2, 0.1])
        once = geodesic(H, A, 0.9)
        twice = geodesic(geodesic(H, A, 0.4), A, 0.5)
        assert np.allclose(once.matrix, twice.matrix, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(n=dims, seed=seeds, t=st.floats(min_value=0.0, max_value=1.0))
    def test_distance_linear_in_time(self, n, seed, t):
        rng = np.random.default_rng(seed)
        H = random_product(n, rng)
        A = random_hermitian(n, rng)
        d1 = distance(H, geodesic(H, A, 1.0))
        assert distance(H, geodesic(H, A, t)) == pytest.approx(t * d1, abs=1e-10)


class TestDistance:
    def test_self(self, rng):
        H = random_product(5, rng)
        assert distance(H, H) < 1e-13

    def test_scalar(self):
        c = 0.35
        n = 6
        assert distance(HermProduct.identity(n), HermProduct(np.exp(2 * c) * np.eye(n))) == pytest.approx(
            2 * abs(c) * np.sqrt(n)
        )

    @settings(max_examples=25, deadline=None)
    @given(n=dims, seed=seeds)
    def test_congruence_invariance(self, n, seed):
        rng = np.random.default_rng(seed)
        H1, H2 = random_product(n, rng), random_product(n, rng)
        G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 2 * np.eye(n)
        d = distance(H1.congruence(G), H2.congruence(G))
        assert d == pytest.approx(_eig_distance(H1, H2), rel=1e-8, abs=1e-10)
        assert d == pytest.approx(distance(H1, H2), rel=1e-8, abs=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(n=dims, seed=seeds)
    def test_symmetric(self, n, seed):
        rng = np.random.default_rng(seed)
        H1, H2 = random_product(n, rng), random_product(n, rng)
        assert distance(H1, H2) == pytest.approx(distance(H2, H1), rel=1e-10, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(n=dims, seed=seeds)
    def test_triangle_inequality(self, n, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_product(n, rng) for _ in range(3))
        assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12


class TestNormalizeDet:
    def test_scalar(self):
        assert np.allclose(normalize_det(HermProduct(3.3 * np.eye(4))).matrix, np.eye(4))

    @settings(max_examples=25, deadline=None)
    @given(n=dims, seed=seeds)
    def test_unit_det_and_idempotent(self, n, seed):
        N1 = normalize_det(_pd(n, seed, 2.0))
        assert abs(N1.logdet) < 1e-12
        assert np.allclose(normalize_det(N1).matrix, N1.matrix, atol=1e-14)


class TestHermBasis:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_orthonormal(self, n):
        B = herm_basis(n)
        gram = np.einsum("aij,bji->ab", B, B).real
        assert np.allclose(gram, np.eye(n * n), atol=1e-14)
        assert all(np.allclose(b, b.conj().T) for b in B)

    def test_ordering(self):
        B = herm_basis(2)
        s = 1 / np.sqrt(2)
        assert np.allclose(B[0], [[1, 0], [0, 0]])
        assert np.allclose(B[1], [[0, 0], [0, 1]])
        assert np.allclose(B[2], [[0, s], [s, 0]])
        assert np.allclose(B[3], [[0, 1j * s], [-1j * s, 0]])

    @settings(max_examples=30, deadline=None)
    @given(n=dims, seed=seeds)
    def test_roundtrip_and_inner_product(self, n, seed):
        rng = np.random.default_rng(seed)
        A, B = random_hermitian(n, rng), random_hermitian(n, rng)
        assert np.allclose(vec_to_herm(herm_to_vec(A)), A, atol=1e-14)
        assert herm_to_vec(A) @ herm_to_vec(B) == pytest.approx(np.trace(A @ B).real, abs=1e-12)

    def test_non_square_length(self):
        with pytest.raises(InvalidInputError):
            vec_to_herm(np.zeros(5))


def test_random_helpers(rng):
    A = random_hermitian(5, rng, scale=3.0, traceless=True)
    assert np.linalg.norm(A) == pytest.approx(3.0)
    assert abs(np.trace(A)) < 1e-12
    U = random_unitary(5, rng)
    assert np.allclose(U @ U.conj().T, np.eye(5), atol=1e-12)
    check_hermitian(A)
