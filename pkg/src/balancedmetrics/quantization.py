"""Bergman kernels, coherent states and Berezin-Toeplitz quantization.

Two orthonormal frames appear.  Symbols and projectors attached to a product
``H`` use ``u = H^{-1/2} v``.  Toeplitz operators and the quantum channel
live on ``L^2(FS(H), nu)``, whose orthonormal frame is ``u = Gram^{-1/2} v``
with ``Gram`` the ``L^2`` Gram matrix of the reference basis; in that frame
``T(1) = Id`` and ``E(Id) = Id`` hold for every ``H``, not only balanced ones.
At a balanced product the two frames differ by a scalar.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import InvalidInputError, NotPositiveDefiniteError, QuadratureDegenerateError
from .geometry import EvalTable, Frame, VolumeMap, density_from_frame, product_frame
from .linalg import HermProduct, check_hermitian, herm_to_vec, vec_to_herm

__all__ = [
    "KernelField",
    "L2Data",
    "ChannelOperator",
    "ChannelSpectrum",
    "kernel",
    "coherent_projector",
    "coherent_projectors",
    "berezin_symbol",
    "l2_data",
    "l2_product",
    "rawnsley",
    "toeplitz",
    "channel",
    "channel_spectrum",
    "DENSE_CAP",
]

# largest n_p for which the channel is materialized as a dense matrix
DENSE_CAP = 60
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class KernelField:
    """``log K_H`` at the quadrature nodes together with its product."""

    logK: np.ndarray
    product: HermProduct

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.logK)


def kernel(H: HermProduct, table: EvalTable) -> KernelField:
    """Diagonal Bergman kernel ``K_H(x) = v(x)^* H^{-1} v(x)`` in log form."""
    return KernelField(product_frame(H, table).logK, H)


def coherent_projector(H: HermProduct, i: int, table: EvalTable) -> np.ndarray:
    """Rank-one projector onto the coherent state at node ``i``.

    Written in the ``H``-orthonormal frame ``H^{-1/2} e``.
    """
    if not 0 <= i < table.quadrature.size:
        raise InvalidInputError(f"node index {i} out of range")
    u = table.values[i] @ H.invsqrt.T
    return np.outer(u, u.conj()) / np.vdot(u, u).real


def coherent_projectors(H: HermProduct, table: EvalTable, nodes=None) -> np.ndarray:
    """Stack of coherent projectors, shape ``(len(nodes), n_p, n_p)``."""
    U = table.values if nodes is None else table.values[np.asarray(nodes)]
    U = U @ H.invsqrt.T
    U = U / np.linalg.norm(U, axis=1)[:, None]
    return U[:, :, None] * U[:, None, :].conj()


def _symbol_rows(U, A):
    num = np.einsum("ij,jk,ik->i", U.conj(), A, U).real
    return num / np.einsum("ij,ij->i", U.conj(), U).real


def berezin_symbol(H: HermProduct, A, table: EvalTable) -> np.ndarray:
    """``sigma_H(A)(x) = Tr[A Pi_H(x)]`` at every node."""
    A = check_hermitian(A, "observable")
    return _symbol_rows(product_frame(H, table).U, A)


@dataclass(frozen=True, eq=False)
class L2Data:
    """Everything one ``L^2(FS(H), nu)`` pass produces.

    Attributes
    ----------
    frame : Frame
        ``H``-orthonormal frame at the nodes.
    density, vol : volume-form density at nodes and its total.
    gram : HermProduct
        ``L^2`` Gram matrix of the reference basis.
    coef : (N,) array
        ``w_i nu_i / K_H(x_i)`` in the rescaled-row convention, so that
        ``gram = V^T diag(coef) conj(V)``.
    """

    frame: Frame
    density: np.ndarray
    vol: float
    gram: HermProduct
    coef: np.ndarray

    def l2_frame(self, table: EvalTable) -> np.ndarray:
        """Rows of ``Gram^{-1/2} v`` (rescaled)."""
        return table.values @ self.gram.invsqrt.T

    def rho(self, table: EvalTable) -> np.ndarray:
        U = self.l2_frame(table)
        return np.einsum("ij,ij->i", U.conj(), U).real / self.frame.Kt


def _weighted_outer(V, c):
    return (V.T * c) @ V.conj()


def l2_data(H: HermProduct, volmap: VolumeMap, table: EvalTable) -> L2Data:
    fr = product_frame(H, table)
    dens, vol = density_from_frame(volmap, fr, table)
    coef = table.quadrature.weights * dens / fr.Kt
    M = _weighted_outer(table.values, coef)
    try:
        gram = HermProduct(M)
    except NotPositiveDefiniteError as exc:
        raise QuadratureDegenerateError(
            f"L2 Gram matrix lost positivity ({exc}); increase the quadrature order"
        ) from exc
    return L2Data(fr, dens, vol, gram, coef)


def l2_product(H: HermProduct, volmap: VolumeMap, table: EvalTable) -> HermProduct:
    """``Hilb_nu(FS(H))`` as a Gram matrix in the reference basis (unnormalized)."""
    return l2_data(H, volmap, table).gram


def rawnsley(H: HermProduct, volmap: VolumeMap, table: EvalTable) -> np.ndarray:
    """Density of states ``rho = v^* Gram^{-1} v / K_H`` at the nodes."""
    return l2_data(H, volmap, table).rho(table)


def toeplitz(f, H: HermProduct, volmap: VolumeMap, table: EvalTable) -> np.ndarray:
    """Toeplitz operator ``int f Pi rho dnu`` in the ``L^2`` orthonormal frame."""
    f = np.asarray(f, dtype=float)
    if f.shape != (table.quadrature.size,):
        raise InvalidInputError("function must have one real value per node")
    d = l2_data(H, volmap, table)
    U = d.l2_frame(table)
    T = _weighted_outer(U, d.coef * f)
    return 0.5 * (T + T.conj().T)


class ChannelOperator:
    """Berezin-Toeplitz channel ``E = T o sigma`` on Hermitian matrices.

    ``E(A) = sum_i c_i Tr[A Pi_i] Pi_i`` with ``c_i = w_i nu_i rho_i`` and
    ``Pi_i`` the coherent projectors in the ``L^2`` frame.  The dense matrix
    (in the basis of :func:`~balancedmetrics.linalg.herm_basis`) is built for
    ``n_p <= DENSE_CAP``; otherwise only the matrix-free action is kept.
    """

    def __init__(self, U, weights, p, product, volmap, vol, dense=None):
        self.U = U
        self.weights = weights
        self.p = p
        self.product = product
        self.volmap = volmap
        self.vol = vol
        self.n_p = U.shape[1]
        if dense is None:
            dense = self.n_p <= DENSE_CAP
        self.matrix = self._assemble() if dense else None

    @property
    def dim(self) -> int:
        return self.n_p * self.n_p

    @property
    def is_dense(self) -> bool:
        return self.matrix is not None

    def _assemble(self):
        n = self.n_p
        C = np.zeros((n * n, n * n))
        for lo in range(0, self.U.shape[0], _CHUNK):
            u = self.U[lo:lo + _CHUNK]
            u = u / np.linalg.norm(u, axis=1)[:, None]
            S = herm_to_vec(u[:, :, None] * u[:, None, :].conj())
            C += S.T @ (self.weights[lo:lo + _CHUNK, None] * S)
        return 0.5 * (C + C.T)

    def apply(self, A) -> np.ndarray:
        """``E(A)`` for a Hermitian matrix ``A``."""
        A = check_hermitian(A, "observable", atol=1e-9)
        if self.matrix is not None:
            return vec_to_herm(self.matrix @ herm_to_vec(A))
        norms = np.einsum("ij,ij->i", self.U.conj(), self.U).real
        sigma = _symbol_rows(self.U, A)
        out = _weighted_outer(self.U, self.weights * sigma / norms)
        return 0.5 * (out + out.conj().T)

    def matvec(self, x) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ x
        return herm_to_vec(self.apply(vec_to_herm(x)))

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=float)

    def quadratic_form(self, A) -> float:
        """``Tr[A E(A)]``."""
        return float(np.trace(A @ self.apply(A)).real)


def channel(H: HermProduct, volmap: VolumeMap, table: EvalTable, dense: bool | None = None) -> ChannelOperator:
    """Assemble the quantum channel of ``FS(H)`` and ``nu``."""
    d = l2_data(H, volmap, table)
    U = d.l2_frame(table)
    weights = d.coef * np.einsum("ij,ij->i", U.conj(), U).real
    return ChannelOperator(U, weights, table.p, H, volmap, d.vol, dense)


@dataclass(frozen=True)
class ChannelSpectrum:
    """Leading channel eigenvalues and derived quantities.

    ``eigenvalues`` is sorted in decreasing order; for the matrix-free path
    it holds only the requested top part.
    """

    eigenvalues: np.ndarray
    p: int
    identity_overlap: float
    dense: bool

    @property
    def gamma0(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def gamma1(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def gap(self) -> float:
        return 1.0 - self.gamma1

    @property
    def laplacian_estimate(self) -> float:
        """``4 pi p (1 - gamma_1)``, the first Laplacian eigenvalue estimate."""
        return 4.0 * np.pi * self.p * self.gap

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "gamma": [float(x) for x in self.eigenvalues],
            "gamma1": self.gamma1,
            "gap": self.gap,
            "lambda1_estimate": self.laplacian_estimate,
            "identity_overlap": self.identity_overlap,
            "dense": self.dense,
        }


def channel_spectrum(op: ChannelOperator, k: int | None = None, tol: float = 1e-10) -> ChannelSpectrum:
    """Eigenvalues of the channel, largest first.

    Dense channels use a full symmetric eigensolve; matrix-free ones use
    Lanczos for the ``k`` (default 6) largest eigenvalues.
    """
    ident = herm_to_vec(np.eye(op.n_p)) / np.sqrt(op.n_p)
    if op.is_dense:
        w, V = np.linalg.eigh(op.matrix)
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
        if k is not None:
            w = w[:k]
    else:
        k = min(k or 6, op.dim - 1)
        w, V = eigsh(op.as_linear_operator(), k=k, which="LA", tol=tol, v0=ident.copy())
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
    overlap = float(abs(V[:, 0] @ ident))
    return ChannelSpectrum(np.asarray(w), op.p, overlap, op.is_dense)
