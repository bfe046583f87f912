"""Positive-definite Hermitian matrices and the symmetric space they form.

A :class:`HermProduct` stores a Hermitian inner product on the section
space as its Gram matrix in the reference basis, ``H[k, l] = <e_k, e_l>``.
Hermitian observables are plain ``numpy`` arrays checked with
:func:`check_hermitian`.

Derivative convention
---------------------
A Hermitian generator ``A`` (written in an ``H``-orthonormal frame) moves a
product along

    t -> H^{1/2} exp(-2 t A) H^{1/2},

i.e. the curve of products ``H_{exp(tA) s}`` traced by acting on an
orthonormal basis ``s``.  Every closed-form derivative in the package is
stated in this convention, with finite differences as the arbiter.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError

__all__ = [
    "HermProduct",
    "check_hermitian",
    "random_hermitian",
    "random_unitary",
    "geodesic",
    "distance",
    "normalize_det",
    "herm_basis_size",
    "herm_to_vec",
    "vec_to_herm",
    "herm_basis",
]

HERM_ATOL = 1e-12
# eigenvalues below this fraction of the largest are treated as zero
PD_RTOL = 1e-12


def check_hermitian(A, name="matrix", atol=HERM_ATOL) -> np.ndarray:
    """Return ``A`` as a complex square array after checking it is Hermitian.

    The tolerance is relative to the largest entry.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.conj().T), initial=0.0) > atol * scale:
        raise InvalidInputError(f"{name} is not Hermitian")
    return A


def _herm_part(A):
    return 0.5 * (A + A.conj().T)


class HermProduct:
    """Positive-definite Hermitian inner product on ``C^n``.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Gram matrix in the reference basis. It is symmetrized, then checked
        for positive definiteness through its eigendecomposition.

    Notes
    -----
    Instances are immutable; the eigendecomposition is cached and every
    derived quantity (inverse, square roots, log-determinant) is computed
    from it.
    """

    def __init__(self, matrix):
        M = check_hermitian(matrix, "product", atol=1e-9)
        M = _herm_part(M)
        w, Q = np.linalg.eigh(M)
        if not np.all(np.isfinite(w)):
            raise NotPositiveDefiniteError("product has non-finite eigenvalues")
        top = w[-1]
        if top <= 0 or w[0] <= PD_RTOL * top:
            raise NotPositiveDefiniteError(
                f"product is not positive-definite (eigenvalues in [{w[0]:.3e}, {top:.3e}])"
            )
        M.setflags(write=False)
        w.setflags(write=False)
        Q.setflags(write=False)
        self._matrix = M
        self._evals = w
        self._evecs = Q

    @classmethod
    def identity(cls, n: int) -> "HermProduct":
        return cls(np.eye(n, dtype=complex))

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._evals

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def _fn(self, values):
        Q = self._evecs
        return (Q * values) @ Q.conj().T

    @cached_property
    def inv(self) -> np.ndarray:
        return self._fn(1.0 / self._evals)

    @cached_property
    def sqrt(self) -> np.ndarray:
        return self._fn(np.sqrt(self._evals))

    @cached_property
    def invsqrt(self) -> np.ndarray:
        return self._fn(1.0 / np.sqrt(self._evals))

    @cached_property
    def logm(self) -> np.ndarray:
        return self._fn(np.log(self._evals))

    @cached_property
    def logdet(self) -> float:
        return float(np.sum(np.log(self._evals)))

    @property
    def cond(self) -> float:
        return float(self._evals[-1] / self._evals[0])

    def scaled(self, c: float) -> "HermProduct":
        return HermProduct(c * self._matrix)

    def congruence(self, G) -> "HermProduct":
        """The product ``G^* H G``."""
        G = np.asarray(G, dtype=complex)
        return HermProduct(G.conj().T @ self._matrix @ G)

    def refactor_error(self) -> float:
        """Relative error of rebuilding the matrix from the cached factors."""
        R = self._fn(self._evals)
        return float(np.linalg.norm(R - self._matrix) / np.linalg.norm(self._matrix))

    def __array__(self, dtype=None, copy=None):
        return np.array(self._matrix, dtype=dtype)

    def __repr__(self):
        return f"HermProduct(dim={self.dim}, logdet={self.logdet:.6g}, cond={self.cond:.3g})"


def _as_product(H) -> HermProduct:
    return H if isinstance(H, HermProduct) else HermProduct(H)


def _expm_herm(A):
    w, Q = np.linalg.eigh(_herm_part(A))
    return (Q * np.exp(w)) @ Q.conj().T


def geodesic(H, A, t: float) -> HermProduct:
    """Point at time ``t`` on the geodesic from ``H`` generated by ``A``.

    ``A`` is a Hermitian matrix in the frame ``H^{-1/2}``; the curve is
    ``H^{1/2} exp(-2tA) H^{1/2}``, so ``geodesic(I, I, t) = exp(-2t) I``.
    """
    H = _as_product(H)
    A = check_hermitian(A, "generator")
    S = H.sqrt
    return HermProduct(S @ _expm_herm(-2.0 * t * A) @ S)


def distance(H1, H2) -> float:
    """Affine-invariant distance ``|| log(H1^{-1/2} H2 H1^{-1/2}) ||_F``."""
    H1 = _as_product(H1)
    H2 = _as_product(H2)
    R = H1.invsqrt
    M = _herm_part(R @ H2.matrix @ R)
    w = np.linalg.eigvalsh(M)
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def normalize_det(H) -> HermProduct:
    """Rescale ``H`` to unit determinant."""
    H = _as_product(H)
    c = np.exp(-H.logdet / H.dim)
    return HermProduct(c * H.matrix)


def random_hermitian(n: int, rng, scale: float = 1.0, traceless: bool = False) -> np.ndarray:
    """Hermitian matrix with unit Frobenius norm times ``scale``."""
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = _herm_part(X)
    if traceless:
        A = A - np.trace(A).real / n * np.eye(n)
    return scale * A / np.linalg.norm(A)


def random_unitary(n: int, rng) -> np.ndarray:
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(X)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


# Orthonormal basis of Herm(C^n) as a real inner-product space with
# <A, B> = Tr[A B].  Order: the n diagonal units E_jj, then for each pair
# j < k in lexicographic order the symmetric unit (E_jk + E_kj)/sqrt(2)
# followed by the antisymmetric unit i(E_jk - E_kj)/sqrt(2).

def herm_basis_size(n: int) -> int:
    return n * n


def _offdiag_pairs(n):
    return np.triu_indices(n, k=1)


def herm_to_vec(A) -> np.ndarray:
    """Coordinates of a Hermitian matrix in the fixed orthonormal basis.

    Accepts a stack of matrices with shape ``(..., n, n)``.
    """
    A = np.asarray(A)
    n = A.shape[-1]
    j, k = _offdiag_pairs(n)
    diag = np.real(np.diagonal(A, axis1=-2, axis2=-1))
    off = A[..., j, k]
    out = np.empty(A.shape[:-2] + (n * n,))
    out[..., :n] = diag
    out[..., n::2] = np.sqrt(2.0) * off.real
    out[..., n + 1::2] = np.sqrt(2.0) * off.imag
    return out


def vec_to_herm(x) -> np.ndarray:
    """Inverse of :func:`herm_to_vec`."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    n = int(round(np.sqrt(m)))
    if n * n != m:
        raise InvalidInputError(f"vector length {m} is not a square")
    j, k = _offdiag_pairs(n)
    A = np.zeros(x.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    A[..., idx, idx] = x[..., :n]
    off = (x[..., n::2] + 1j * x[..., n + 1::2]) / np.sqrt(2.0)
    A[..., j, k] = off
    A[..., k, j] = off.conj()
    return A


def herm_basis(n: int) -> np.ndarray:
    """The basis matrices themselves, shape ``(n*n, n, n)``."""
    return vec_to_herm(np.eye(n * n))
