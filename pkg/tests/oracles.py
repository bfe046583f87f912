"""Independent closed forms used as test oracles.

Nothing here touches the package's quadrature or linear algebra.
"""
import math

import numpy as np
from scipy.special import beta, comb


def binomial_kernel(z, p, k=2):
    """``sum_j C(kp, j) |z|^{2j} = (1 + |z|^2)^{kp}``."""
    return (1.0 + np.abs(z) ** 2) ** (k * p)


def round_line_zonal_channel(p):
    """Channel of the round product on the line, restricted to diagonal matrices.

    With ``N = 2p`` the entries are radial integrals
    ``(N + 1) C(N, j) C(N, k) B(j + k + 1, 2N + 1 - j - k)``.
    """
    N = 2 * p
    j = np.arange(N + 1)
    J, K = np.meshgrid(j, j, indexing="ij")
    return (N + 1) * comb(N, J) * comb(N, K) * beta(J + K + 1, 2 * N + 1 - J - K)


def round_line_channel_eigenvalue(p, ell):
    """``N! (N+1)! / ((N-l)! (N+l+1)!)`` with ``N = 2p``."""
    N = 2 * p
    return math.factorial(N) * math.factorial(N + 1) / (math.factorial(N - ell) * math.factorial(N + ell + 1))


def round_line_liouville(z):
    """``omega`` of ``(1 + |z|^2)^2`` as a density: ``2 / (pi (1 + |z|^2)^2)``."""
    return 2.0 / (np.pi * (1.0 + np.abs(z) ** 2) ** 2)


def sphere_laplacian_first_eigenvalue():
    """Round sphere of area 2: Gauss curvature 2 pi, so ``lambda_1 = 2 * 2 pi``."""
    area = 2.0
    gauss = 4.0 * np.pi / area
    return 2.0 * gauss
