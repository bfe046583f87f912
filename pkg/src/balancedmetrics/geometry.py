"""Model manifolds, chart quadrature and volume-map densities.

Sections of ``L^p`` are trivialized on the affine chart ``C^n`` of projective
space; for anticanonical models (degree ``k = n + 1``) the frame is
``(dz_1 ^ ... ^ dz_n)^{-p}``.  In that frame the Bergman kernel of a product
``H`` is ``K_H(z) = v(z)^* H^{-1} v(z)`` with ``v(z)`` the column of basis
values, and the anticanonical volume form of ``FS(H)`` is ``K_H^{-1/p}``
times Lebesgue measure.

Section values can overflow at large ``|z|`` for large ``p``, so every
:class:`EvalTable` stores rows rescaled by a per-node factor ``exp(-c_i)``
together with the log-scale ``c_i``.  Quantities that are homogeneous of
degree zero in the row (projectors, symbols, curvature) use the scaled rows
directly; the kernel itself is kept as ``log K``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as cartesian
from pathlib import Path

import numpy as np

from .errors import BasePointError, CurvatureError, InvalidInputError
from .linalg import HermProduct

__all__ = [
    "PolarizedModel",
    "Quadrature",
    "EvalTable",
    "VolumeMap",
    "Frame",
    "build_model",
    "make_quadrature",
    "eval_frame",
    "monomial_table",
    "frame",
    "volume_density",
    "liouville_density",
    "round_density",
    "round_product",
    "read_custom_table",
    "write_custom_table",
    "DEFAULT_ORDER",
    "DEFAULT_TOL",
]

MODEL_KINDS = ("projective-line", "projective-plane", "custom-table")
_ALIASES = {"p1": "projective-line", "p2": "projective-plane", "table": "custom-table"}
_DIMS = {"projective-line": 1, "projective-plane": 2}

DEFAULT_ORDER = {"projective-line": 64, "projective-plane": 32}
DEFAULT_TOL = {"projective-line": 1e-10, "projective-plane": 1e-7}


@dataclass(frozen=True)
class Quadrature:
    """Chart nodes and positive Lebesgue weights.

    ``nodes`` has shape ``(N, n)`` (complex chart coordinates).
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[0] != self.weights.shape[0]:
            raise InvalidInputError("nodes and weights disagree in length")
        if not np.all(self.weights > 0):
            raise InvalidInputError("quadrature weights must be strictly positive")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def real_nodes(self) -> np.ndarray:
        """Nodes as real ``2n``-tuples ``(Re z_1, Im z_1, ...)``."""
        out = np.empty((self.size, 2 * self.dim))
        out[:, 0::2] = self.nodes.real
        out[:, 1::2] = self.nodes.imag
        return out

    def integrate(self, values) -> float | np.ndarray:
        """Weighted sum over the leading (node) axis."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


@dataclass(frozen=True, eq=False)
class EvalTable:
    """Reference-basis values and first derivatives at quadrature nodes.

    Attributes
    ----------
    values : (N, n_p) complex
        Rows ``e_j(x_i) * exp(-log_scale[i])``.
    log_scale : (N,) float
        Per-node log rescaling; raw values are ``values * exp(log_scale)``.
    derivs : (n, N, n_p) complex or None
        ``d e_j / d z_a`` at the nodes, rescaled by the same factor.
    p : int
        Tensor power the sections belong to.
    """

    quadrature: Quadrature
    values: np.ndarray
    log_scale: np.ndarray
    derivs: np.ndarray | None
    p: int

    def __post_init__(self):
        for arr in (self.values, self.log_scale, self.derivs):
            if arr is not None:
                arr.setflags(write=False)
        if self.values.shape[0] != self.quadrature.size:
            raise InvalidInputError("value table does not match the node count")

    @property
    def n_p(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.quadrature.dim

    def raw_values(self) -> np.ndarray:
        return self.values * np.exp(self.log_scale)[:, None]

    def raw_derivs(self) -> np.ndarray:
        if self.derivs is None:
            raise InvalidInputError("table carries no derivatives")
        return self.derivs * np.exp(self.log_scale)[None, :, None]


@dataclass(frozen=True, eq=False)
class PolarizedModel:
    """A model manifold with an ample line bundle power and a section basis.

    For projective models ``exponents`` lists the monomials ``z^alpha`` with
    ``|alpha| <= k p`` spanning ``H^0(P^n, O(kp))``.  Custom models carry a
    precomputed :class:`EvalTable` instead.
    """

    kind: str
    n: int
    k: int | None
    p: int
    n_p: int
    exponents: np.ndarray | None = None
    table: EvalTable | None = field(default=None, repr=False)

    @property
    def is_anticanonical(self) -> bool:
        return self.k == self.n + 1

    def descriptor(self) -> dict:
        return {"kind": self.kind, "n": self.n, "k": self.k, "p": self.p, "n_p": self.n_p}


def _monomial_exponents(n: int, degree: int) -> np.ndarray:
    # graded-lexicographic, lowest total degree first
    exps = [a for a in cartesian(range(degree + 1), repeat=n) if sum(a) <= degree]
    exps.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return np.array(exps, dtype=int).reshape(-1, n)


def build_model(kind: str, k: int | None = None, p: int = 1, table: EvalTable | None = None) -> PolarizedModel:
    """Construct a :class:`PolarizedModel`.

    ``kind`` is one of ``projective-line`` (``p1``), ``projective-plane``
    (``p2``) or ``custom-table`` (``table``).  ``k`` defaults to the
    anticanonical degree ``n + 1``.
    """
    kind = _ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS:
        raise InvalidInputError(f"unsupported model kind {kind!r}; choose from {MODEL_KINDS}")
    if int(p) != p or p < 1:
        raise InvalidInputError("p must be ≥ 1")
    p = int(p)
    if kind == "custom-table":
        if table is None:
            raise InvalidInputError("custom-table models need a value/derivative table")
        if table.p != p:
            raise InvalidInputError(f"table is for p={table.p}, model asked for p={p}")
        return PolarizedModel(kind, table.dim, k, p, table.n_p, None, table)
    n = _DIMS[kind]
    if k is None:
        k = n + 1
    if int(k) != k or k < 1:
        raise InvalidInputError("k must be ≥ 1")
    k = int(k)
    exps = _monomial_exponents(n, k * p)
    assert exps.shape[0] == math.comb(k * p + n, n)
    return PolarizedModel(kind, n, k, p, exps.shape[0], exps)


def make_quadrature(model: PolarizedModel, order: int | None = None) -> Quadrature:
    """Tensor-product quadrature on the affine chart.

    Each complex coordinate is written ``z = tan(theta/2) exp(i phi)``;
    Gauss-Legendre nodes are placed in ``u = cos(theta)`` and a uniform grid
    in ``phi``, both with ``order`` points.  The Lebesgue weight of one
    coordinate becomes ``du dphi / (1 + u)^2``.

    In several variables the one-dimensional rule is applied to fibred
    coordinates ``w`` with ``z_n = w_n`` and
    ``z_a = w_a sqrt(1 + |z_{a+1}|^2 + ... + |z_n|^2)``, which turns
    ``(1 + |z|^2)^{-m}`` into a product of one-variable round factors.  The
    excluded hyperplane at infinity has measure zero.
    """
    if model.kind == "custom-table":
        return model.table.quadrature
    if order is None:
        order = DEFAULT_ORDER[model.kind]
    if int(order) != order or order < 2:
        raise InvalidInputError("quadrature order must be an integer ≥ 2")
    order = int(order)
    u, wu = np.polynomial.legendre.leggauss(order)
    phi = 2.0 * np.pi * np.arange(order) / order
    wphi = 2.0 * np.pi / order
    r = np.sqrt((1.0 - u) / (1.0 + u))
    z1 = (r[:, None] * np.exp(1j * phi)[None, :]).ravel()
    w1 = np.repeat(wu * wphi / (1.0 + u) ** 2, order)
    n = model.n
    w = np.stack(np.meshgrid(*([z1] * n), indexing="ij"), axis=-1).reshape(-1, n)
    weights = np.prod(np.stack(np.meshgrid(*([w1] * n), indexing="ij"), axis=-1), axis=-1).reshape(-1)
    nodes = np.empty_like(w)
    tail = np.ones(w.shape[0])
    for a in range(n - 1, -1, -1):
        nodes[:, a] = w[:, a] * np.sqrt(tail)
        weights = weights * tail
        tail = tail + np.abs(nodes[:, a]) ** 2
    return Quadrature(nodes, weights, order)


def _log_monomials(logabs, args, exps):
    """log|z^a| and arg(z^a) for every node/exponent pair; zero powers are exact."""
    with np.errstate(invalid="ignore"):
        terms = exps[None, :, :] * logabs[:, None, :]
    terms = np.where(exps[None, :, :] == 0, 0.0, terms)
    phase = (exps[None, :, :] * args[:, None, :]).sum(-1)
    return terms.sum(-1), phase


def monomial_table(points, exponents, p: int, weights=None, order: int = 0, derivatives: bool = True) -> EvalTable:
    """Evaluate monomials and their derivatives at arbitrary chart points.

    Values are formed in log-magnitude/phase form and rescaled per node, so
    large ``|z|`` does not overflow.
    """
    points = np.atleast_2d(np.asarray(points, dtype=complex))
    exps = np.asarray(exponents, dtype=int)
    N, n = points.shape
    if weights is None:
        weights = np.ones(N)
    with np.errstate(divide="ignore"):
        logabs = np.log(np.abs(points))
    args = np.angle(points)
    logmag, phase = _log_monomials(logabs, args, exps)
    scale = np.max(logmag, axis=1)
    values = np.exp(logmag - scale[:, None] + 1j * phase)
    if not derivatives:
        quad = Quadrature(points, np.asarray(weights, dtype=float), order)
        return EvalTable(quad, values, scale, None, p)
    derivs = np.zeros((n, N, exps.shape[0]), dtype=complex)
    for a in range(n):
        lowered = exps.copy()
        has = lowered[:, a] > 0
        lowered[has, a] -= 1
        lm, ph = _log_monomials(logabs, args, lowered)
        d = exps[:, a][None, :] * np.exp(lm - scale[:, None] + 1j * ph)
        derivs[a] = np.where(has[None, :], d, 0.0)
    quad = Quadrature(points, np.asarray(weights, dtype=float), order)
    return EvalTable(quad, values, scale, derivs, p)


def eval_frame(model: PolarizedModel, quadrature: Quadrature, derivatives: bool = True) -> EvalTable:
    """Reference-basis values and derivatives at the quadrature nodes.

    ``derivatives=False`` skips the derivative tensors, which only the
    Liouville volume map needs; on large plane grids they dominate memory.
    """
    if model.kind == "custom-table":
        return model.table
    table = monomial_table(
        quadrature.nodes, model.exponents, model.p, quadrature.weights, quadrature.order, derivatives
    )
    table = EvalTable(quadrature, table.values, table.log_scale, table.derivs, model.p)
    dead = np.flatnonzero(np.max(np.abs(table.values), axis=1) == 0)
    if dead.size:
        raise BasePointError(f"all sections vanish at node {int(dead[0])}")
    return table


@dataclass(frozen=True)
class Frame:
    """Rows of ``G v(x_i)`` for a matrix ``G`` with ``G^* G = H^{-1}``.

    ``U`` and ``dU`` inherit the per-node rescaling of the table; ``logK`` is
    the unscaled log-kernel and ``Kt = |U|^2`` its rescaled value.
    """

    G: np.ndarray
    U: np.ndarray
    dU: np.ndarray | None
    Kt: np.ndarray
    logK: np.ndarray


def frame(table: EvalTable, G) -> Frame:
    """Evaluate the basis ``G e`` at the nodes."""
    G = np.asarray(G, dtype=complex)
    U = table.values @ G.T
    dU = None if table.derivs is None else table.derivs @ G.T
    Kt = np.einsum("ij,ij->i", U.conj(), U).real
    bad = np.flatnonzero(~(Kt > 0) | ~np.isfinite(Kt))
    if bad.size:
        raise BasePointError(f"Bergman kernel vanishes at node {int(bad[0])}")
    logK = 2.0 * table.log_scale + np.log(Kt)
    return Frame(G, U, dU, Kt, logK)


def product_frame(H: HermProduct, table: EvalTable) -> Frame:
    """Frame of the ``H``-orthonormal basis ``H^{-1/2} e``."""
    return frame(table, H.invsqrt)


@dataclass(frozen=True, eq=False)
class VolumeMap:
    """Rule assigning a volume form to each Bergman metric.

    ``kind="power"`` gives densities ``K_H^{exponent/p}`` (exponent -1 is the
    anticanonical map, +1 the canonical one); exponent 0 is a fixed density
    supplied per node.  ``kind="liouville"`` uses ``omega^n / n!``.
    """

    kind: str
    exponent: int = -1
    density: np.ndarray | None = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("power", "liouville"):
            raise InvalidInputError(f"unknown volume map kind {self.kind!r}")
        if self.kind == "power":
            if self.exponent not in (-1, 0, 1):
                raise InvalidInputError("power volume maps take exponent -1, 0 or +1")
            if self.exponent == 0:
                if self.density is None:
                    raise InvalidInputError("constant volume map needs a density table")
                d = np.asarray(self.density, dtype=float)
                if d.ndim != 1 or not np.all(np.isfinite(d)) or not np.all(d > 0):
                    raise InvalidInputError("constant density must be strictly positive at every node")
                object.__setattr__(self, "density", d)

    @classmethod
    def anticanonical(cls):
        return cls("power", -1, label="anticanonical")

    @classmethod
    def canonical(cls):
        return cls("power", 1, label="canonical")

    @classmethod
    def constant(cls, density, label="constant"):
        return cls("power", 0, density, label=label)

    @classmethod
    def liouville(cls):
        return cls("liouville", 0, label="liouville")

    @property
    def linear_factor(self) -> float | None:
        """Coefficient ``1 - exponent/p`` multiplies the channel in every
        first-order formula; ``None`` for the Liouville map."""
        return None if self.kind == "liouville" else float(self.exponent)


def _liouville_from_frame(fr: Frame, p: int) -> np.ndarray:
    if fr.dU is None:
        raise InvalidInputError("Liouville density needs derivative tensors")
    U, dU, K = fr.U, fr.dU, fr.Kt
    M = np.einsum("bij,aij->iab", dU.conj(), dU)
    c = np.einsum("ij,aij->ia", U.conj(), dU)
    g = (K[:, None, None] * M - c[:, :, None] * c[:, None, :].conj()) / (K**2)[:, None, None] / p
    det = np.linalg.det(g).real
    n = dU.shape[0]
    bad = np.flatnonzero(~(det > 0))
    if bad.size:
        raise CurvatureError(f"non-positive curvature determinant at node {int(bad[0])}")
    return det / np.pi**n


def density_from_frame(volmap: VolumeMap, fr: Frame, table: EvalTable) -> tuple[np.ndarray, float]:
    """Density (w.r.t. chart Lebesgue measure) and total volume."""
    if volmap.kind == "liouville":
        dens = _liouville_from_frame(fr, table.p)
    elif volmap.exponent == 0:
        dens = volmap.density
        if dens.shape[0] != table.quadrature.size:
            raise InvalidInputError(
                f"constant density has {dens.shape[0]} entries for {table.quadrature.size} nodes"
            )
    else:
        dens = np.exp((volmap.exponent / table.p) * fr.logK)
        bad = np.flatnonzero(~(dens > 0) | ~np.isfinite(dens))
        if bad.size:
            raise BasePointError(f"volume density degenerates at node {int(bad[0])}")
    vol = float(table.quadrature.integrate(dens))
    return dens, vol


def volume_density(volmap: VolumeMap, H: HermProduct, table: EvalTable) -> tuple[np.ndarray, float]:
    """Node densities of the volume form of ``FS(H)`` and its total volume."""
    return density_from_frame(volmap, product_frame(H, table), table)


def liouville_density(H: HermProduct, table: EvalTable) -> tuple[np.ndarray, float]:
    """``omega^n/n!`` of ``FS(H)^{1/p}`` from the exact first derivatives.

    ``omega = (i/2pi) dd^c (1/p) log K_H`` so the density is
    ``det(d_a dbar_b (1/p) log K_H) / pi^n``.
    """
    return density_from_frame(VolumeMap.liouville(), product_frame(H, table), table)


def round_density(quadrature: Quadrature) -> np.ndarray:
    """``(1 + |z|^2)^{-(n+1)}``: the round (Fubini-Study) volume density."""
    s = np.sum(np.abs(quadrature.nodes) ** 2, axis=1)
    return np.exp(-(quadrature.dim + 1) * np.log1p(s))


def round_product(model: PolarizedModel) -> HermProduct:
    """The ``U(n+1)``-invariant product, ``K_H = (1 + |z|^2)^{kp}``.

    Its inverse is diagonal with the multinomial coefficients of degree
    ``kp``.
    """
    if model.exponents is None:
        raise InvalidInputError("round product is defined for projective models only")
    d = model.k * model.p
    coeffs = []
    for alpha in model.exponents:
        rest = d - int(alpha.sum())
        c = math.factorial(d) // math.prod(math.factorial(int(a)) for a in alpha) // math.factorial(rest)
        coeffs.append(float(c))
    return HermProduct(np.diag(1.0 / np.array(coeffs)).astype(complex))


# custom-table text format ------------------------------------------------

_MAGIC = "# balancedmetrics custom-table v1"


def write_custom_table(path, table: EvalTable) -> None:
    """Write an :class:`EvalTable` in the documented text format.

    Raw (unscaled) values are written; the layout is described in the
    README.
    """
    q = table.quadrature
    vals = table.raw_values()
    ders = table.raw_derivs()
    n, n_p = table.dim, table.n_p
    lines = [_MAGIC, f"{n} {n_p} {table.p} {q.size}"]
    for i in range(q.size):
        nums = list(q.real_nodes[i]) + [q.weights[i]]
        nums += [x for v in vals[i] for x in (v.real, v.imag)]
        nums += [x for a in range(n) for v in ders[a, i] for x in (v.real, v.imag)]
        lines.append(" ".join(f"{x:.17g}" for x in nums))
    Path(path).write_text("\n".join(lines) + "\n")


def read_custom_table(path) -> EvalTable:
    """Parse a custom-table file into an :class:`EvalTable`."""
    text = Path(path).read_text().splitlines()
    rows = [ln for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise InvalidInputError(f"{path}: empty custom table")
    try:
        n, n_p, p, count = (int(x) for x in rows[0].split())
    except ValueError as exc:
        raise InvalidInputError(f"{path}: header must be 'n n_p p node_count'") from exc
    width = 2 * n + 1 + 2 * n_p + 2 * n * n_p
    if len(rows) - 1 != count:
        raise InvalidInputError(f"{path}: header declares {count} nodes, found {len(rows) - 1}")
    data = np.array([[float(x) for x in r.split()] for r in rows[1:]]) if count else np.zeros((0, width))
    if data.ndim != 2 or data.shape[1] != width:
        raise InvalidInputError(f"{path}: each row must hold {width} numbers for n={n}, n_p={n_p}")
    nodes = data[:, 0:2 * n:2] + 1j * data[:, 1:2 * n:2]
    weights = data[:, 2 * n]
    off = 2 * n + 1
    vals = data[:, off:off + 2 * n_p:2] + 1j * data[:, off + 1:off + 2 * n_p:2]
    off += 2 * n_p
    d = data[:, off::2] + 1j * data[:, off + 1::2]
    ders = d.reshape(count, n, n_p).transpose(1, 0, 2)
    mags = np.max(np.abs(vals), axis=1)
    dead = np.flatnonzero(mags == 0)
    if dead.size:
        raise BasePointError(f"{path}: all sections vanish at node {int(dead[0])}")
    scale = np.log(mags)
    quad = Quadrature(nodes, weights, count)
    return EvalTable(quad, vals / mags[:, None], scale, ders / mags[None, :, None], p)
