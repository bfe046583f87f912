"""Donaldson iteration, moment-map flow, energies and linearization.

A basis ``s = G e`` of sections (``G`` invertible) induces the product
``H_s = (G^* G)^{-1}`` making it orthonormal.  The Donaldson map sends ``H``
to ``(n_p / Vol) Gram``, the ``L^2`` Gram matrix of the reference basis for
the Bergman metric of ``H`` and its volume form, rescaled to trace ``n_p``
against ``H``.

Derivatives follow the convention of :mod:`balancedmetrics.linalg`: a
Hermitian generator ``A`` acts on bases as ``s -> exp(tA) s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from .errors import (
    DegenerateStartError,
    FlowStepError,
    InsufficientDataError,
    InvalidInputError,
    NotAFixedPointError,
    NotPositiveDefiniteError,
    QuadratureDegenerateError,
)
from .geometry import (
    EvalTable,
    PolarizedModel,
    VolumeMap,
    density_from_frame,
    eval_frame,
    frame,
    make_quadrature,
)
from .linalg import HermProduct, check_hermitian, distance, herm_to_vec, normalize_det, random_hermitian
from .quantization import channel, l2_data

__all__ = [
    "BasisState",
    "StepRecord",
    "IterationReport",
    "FlowReport",
    "DmuComparison",
    "Linearization",
    "RateEstimate",
    "donaldson_step",
    "iterate",
    "energy",
    "psi",
    "moment_map",
    "gradient_flow",
    "dmu_form",
    "linearized_map",
    "rate_estimate",
    "fixed_point_tolerance",
    "linear_fit",
    "MAX_START_COND",
]

MAX_START_COND = 1e10
_EPS = np.finfo(float).eps


class BasisState:
    """A basis ``s = G e`` of sections.

    Parameters
    ----------
    G : (n_p, n_p) complex array
        Row ``a`` holds the coefficients of ``s_a`` in the reference basis.
    """

    def __init__(self, G):
        G = np.array(G, dtype=complex)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise InvalidInputError("basis matrix must be square")
        sv = np.linalg.svd(G, compute_uv=False)
        if not sv[-1] > 1e-14 * sv[0]:
            raise InvalidInputError("basis matrix is singular")
        G.setflags(write=False)
        self.G = G
        self.cond = float(sv[0] / sv[-1])

    @classmethod
    def from_product(cls, H: HermProduct) -> "BasisState":
        """The basis ``H^{-1/2} e``, orthonormal for ``H``."""
        return cls(H.invsqrt)

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    @property
    def product(self) -> HermProduct:
        return HermProduct(np.linalg.inv(self.G.conj().T @ self.G))

    def gram_in(self, H: HermProduct) -> np.ndarray:
        """Gram matrix ``<s_a, s_b>_H``."""
        return self.G @ H.matrix @ self.G.conj().T

    def act(self, M) -> "BasisState":
        """The basis ``M s``."""
        return BasisState(np.asarray(M) @ self.G)


def _expm_herm(A):
    w, Q = np.linalg.eigh(0.5 * (A + A.conj().T))
    return (Q * np.exp(w)) @ Q.conj().T


def _state_data(state: BasisState, volmap: VolumeMap, table: EvalTable):
    fr = frame(table, state.G)
    dens, vol = density_from_frame(volmap, fr, table)
    c = table.quadrature.weights * dens / fr.Kt
    return fr, c, vol


def moment_map(state: BasisState, volmap: VolumeMap, table: EvalTable) -> np.ndarray:
    """``mu(s) = (int <s_j, s_k> dnu) - (Vol / n_p) Id``."""
    fr, c, vol = _state_data(state, volmap, table)
    M = (fr.U.T * c) @ fr.U.conj()
    M = 0.5 * (M + M.conj().T)
    return M - (vol / state.dim) * np.eye(state.dim)


def _donaldson(H: HermProduct, volmap, table):
    d = l2_data(H, volmap, table)
    try:
        T = HermProduct((table.n_p / d.vol) * d.gram.matrix)
    except NotPositiveDefiniteError as exc:
        raise QuadratureDegenerateError(f"Donaldson image is not positive ({exc}); refine quadrature") from exc
    return T, d


def donaldson_step(H: HermProduct, volmap: VolumeMap, table: EvalTable) -> HermProduct:
    """One application of the Donaldson map ``Hilb_nu o FS``."""
    return _donaldson(H, volmap, table)[0]


def energy(H: HermProduct, volmap: VolumeMap, table: EvalTable) -> float:
    """``-log Vol(dnu)`` of the Bergman metric of ``H``."""
    _, vol = density_from_frame(volmap, frame(table, H.invsqrt), table)
    return -float(np.log(vol))


def psi(H: HermProduct, volmap: VolumeMap, table: EvalTable) -> float:
    """``-log Vol(dnu) + log det H / (p n_p)``."""
    return energy(H, volmap, table) + H.logdet / (table.p * table.n_p)


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics of one iterate ``H_k``.

    ``step_distance`` and ``logdet_ratio`` compare ``H_k`` with its image
    ``T(H_k)``; ``dist_to_final`` is filled once the run ends.
    """

    step: int
    psi: float
    energy: float
    logdet: float
    logdet_ratio: float
    step_distance: float
    rho_dev: float
    mu_norm: float
    vol: float
    dist_to_final: float = float("nan")

    FIELDS = (
        "step", "psi", "energy", "logdet", "logdet_ratio", "step_distance",
        "dist_to_final", "rho_dev", "mu_norm", "vol",
    )

    def as_row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def _diagnose(H: HermProduct, volmap, table, step: int):
    T, d = _donaldson(H, volmap, table)
    n_p = table.n_p
    R = H.invsqrt
    lam = np.linalg.eigvalsh(0.5 * (R @ T.matrix @ R + (R @ T.matrix @ R).conj().T))
    loglam = np.log(lam)
    rho = d.rho(table)
    rec = StepRecord(
        step=step,
        psi=-np.log(d.vol) + H.logdet / (table.p * n_p),
        energy=-np.log(d.vol),
        logdet=H.logdet,
        logdet_ratio=float(np.sum(loglam)),
        step_distance=float(np.linalg.norm(loglam - loglam.mean())),
        rho_dev=float(np.max(np.abs(rho - n_p / d.vol))),
        mu_norm=float(d.vol / n_p * np.linalg.norm(lam - 1.0)),
        vol=d.vol,
    )
    return rec, T


@dataclass
class IterationReport:
    """Trajectory of a Donaldson iteration.

    ``product`` is the last recorded iterate; ``termination`` is
    ``"converged"`` or ``"max_steps"``.
    """

    records: list
    termination: str
    tol: float
    product: HermProduct
    p: int
    n_p: int
    volmap: str
    rate: "RateEstimate | None" = None
    trajectory: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def steps(self) -> int:
        return len(self.records) - 1

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def psi_monotone(self, slack: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.column("psi")) <= slack))

    def logdet_contracting(self, slack: float = 1e-10) -> bool:
        return bool(np.all(self.column("logdet_ratio") <= slack))

    def summary(self) -> dict:
        last = self.records[-1]
        return {
            "termination": self.termination,
            "steps": self.steps,
            "tol": self.tol,
            "p": self.p,
            "n_p": self.n_p,
            "volmap": self.volmap,
            "final": {f: getattr(last, f) for f in StepRecord.FIELDS},
            "psi_monotone": self.psi_monotone(),
            "logdet_contracting": self.logdet_contracting(),
            "rate": None if self.rate is None else self.rate.to_dict(),
            "normalization": "unit determinant",
        }

    def rows(self) -> list:
        return [r.as_row() for r in self.records]


def iterate(
    H0: HermProduct,
    volmap: VolumeMap,
    table: EvalTable,
    max_steps: int = 500,
    tol: float = 1e-9,
    keep_trajectory: bool = False,
) -> IterationReport:
    """Iterate the Donaldson map from ``H0``.

    Stops once the determinant-normalized distance between ``H_k`` and
    ``T(H_k)`` falls below ``tol``, or after ``max_steps`` applications.
    Non-convergence is reported through ``termination``.
    """
    if max_steps < 0:
        raise InvalidInputError("max_steps must be ≥ 0")
    if not tol > 0:
        raise InvalidInputError("tolerance must be positive")
    if H0.dim != table.n_p:
        raise InvalidInputError(f"start product has size {H0.dim}, expected {table.n_p}")
    if H0.cond > MAX_START_COND:
        raise DegenerateStartError(
            f"start product condition number {H0.cond:.3e} exceeds {MAX_START_COND:.0e}"
        )
    H = H0
    records, mats = [], []
    termination = "max_steps"
    for k in range(max_steps + 1):
        rec, T = _diagnose(H, volmap, table, k)
        records.append(rec)
        mats.append(H)
        if rec.step_distance < tol:
            termination = "converged"
            break
        if k == max_steps:
            break
        H = T
    final = normalize_det(H)
    records = [
        StepRecord(**{**r.__dict__, "dist_to_final": distance(normalize_det(M), final)})
        for r, M in zip(records, mats)
    ]
    report = IterationReport(
        records, termination, tol, H, table.p, table.n_p, volmap.label,
        trajectory=mats if keep_trajectory else [],
    )
    try:
        report.rate = rate_estimate(report)
    except InsufficientDataError:
        report.rate = None
    return report


def fixed_point_tolerance(model: PolarizedModel, volmap: VolumeMap, H: HermProduct, order: int) -> float:
    """``max(10 x order-doubling discrepancy of T(H), 1e-9)``.

    The discrepancy compares the working order with half of it, so no grid
    finer than the working one is ever built.  Only defined for models that
    can generate their own quadrature; constant volume maps carry node-bound
    densities and fall back to the floor.
    """
    if model.kind == "custom-table" or (volmap.kind == "power" and volmap.exponent == 0):
        return 1e-9
    imgs = []
    for m in (max(2, order // 2), order):
        t = eval_frame(model, make_quadrature(model, m), derivatives=volmap.kind == "liouville")
        imgs.append(normalize_det(donaldson_step(H, volmap, t)))
    return max(10.0 * distance(*imgs), 1e-9)


@dataclass
class FlowReport:
    """Samples of the moment-map flow at accepted steps."""

    times: np.ndarray
    mu_norms: np.ndarray
    psi: np.ndarray
    dt_used: np.ndarray
    dist_to_start: np.ndarray
    state: BasisState
    termination: str
    rejected: int

    FIELDS = ("t", "mu_norm", "psi", "dt", "dist_to_start")

    def decay_fit(self, tail_fraction: float = 0.5):
        """Linear fit of ``log ||mu||`` against ``t`` over the tail.

        Returns ``(slope, intercept, r_squared)``.
        """
        n = len(self.times)
        lo = int(n * (1.0 - tail_fraction))
        keep = np.arange(lo, n)
        keep = keep[self.mu_norms[keep] > 0]
        if keep.size < 3:
            raise InsufficientDataError("too few flow samples for a decay fit")
        return linear_fit(self.times[keep], np.log(self.mu_norms[keep]))

    def summary(self) -> dict:
        out = {
            "termination": self.termination,
            "t_final": float(self.times[-1]),
            "accepted_steps": len(self.times) - 1,
            "rejected_steps": self.rejected,
            "mu_norm_start": float(self.mu_norms[0]),
            "mu_norm_final": float(self.mu_norms[-1]),
            "basis_condition": self.state.cond,
        }
        try:
            slope, _, r2 = self.decay_fit()
            out["decay_rate"] = -slope
            out["decay_r2"] = r2
        except InsufficientDataError:
            out["decay_rate"] = None
        return out

    def rows(self) -> list:
        return [list(r) for r in zip(self.times, self.mu_norms, self.psi, self.dt_used, self.dist_to_start)]


def gradient_flow(
    state0: BasisState,
    volmap: VolumeMap,
    table: EvalTable,
    dt: float = 0.25,
    t_final: float = 20.0,
    integrator: str = "rk4",
    dt_min: float = 1e-6,
    mu_tol: float = 1e-11,
) -> FlowReport:
    """Integrate ``dG/dt = -mu(G) G``.

    A step is rejected and ``dt`` halved when ``||mu||_F`` would increase;
    below ``dt_min`` a :class:`FlowStepError` is raised.  Integration also
    stops once ``||mu||_F < mu_tol``.
    """
    if not dt > 0 or not t_final >= 0:
        raise InvalidInputError("dt must be positive and the horizon non-negative")
    if integrator not in ("rk4", "euler"):
        raise InvalidInputError(f"unknown integrator {integrator!r}")

    def rhs(G):
        return -moment_map(BasisState(G), volmap, table) @ G

    def advance(G, h):
        if integrator == "euler":
            return G + h * rhs(G)
        k1 = rhs(G)
        k2 = rhs(G + 0.5 * h * k1)
        k3 = rhs(G + 0.5 * h * k2)
        k4 = rhs(G + h * k3)
        return G + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def sample(G):
        mu = moment_map(BasisState(G), volmap, table)
        H = BasisState(G).product
        return float(np.linalg.norm(mu)), psi(H, volmap, table), H

    G = state0.G.copy()
    norm, ps, H = sample(G)
    start = normalize_det(H)
    times, norms, psis, dts, dists = [0.0], [norm], [ps], [0.0], [0.0]
    t, h, rejected = 0.0, dt, 0
    termination = "horizon"
    while t < t_final - 1e-12:
        if norm < mu_tol:
            termination = "converged"
            break
        step = min(h, t_final - t)
        Gn = advance(G, step)
        n_new, ps_new, H_new = sample(Gn)
        if not np.isfinite(n_new) or n_new > norm:
            rejected += 1
            h *= 0.5
            if h < dt_min:
                raise FlowStepError(f"flow step fell below dt_min={dt_min:g} at t={t:.6g}")
            continue
        G, norm, t = Gn, n_new, t + step
        times.append(t)
        norms.append(norm)
        psis.append(ps_new)
        dts.append(step)
        dists.append(distance(start, normalize_det(H_new)))
    return FlowReport(
        np.array(times), np.array(norms), np.array(psis), np.array(dts), np.array(dists),
        BasisState(G), termination, rejected,
    )


@dataclass(frozen=True)
class DmuComparison:
    lhs: float
    rhs: float
    rel_gap: float


def dmu_form(A, state: BasisState, volmap: VolumeMap, table: EvalTable, step: float = 1e-4) -> DmuComparison:
    """Compare ``(n_p / 2Vol) Tr[A Dmu(A)]`` with its channel expression.

    The left side is a central finite difference of
    ``t -> Tr[A mu(exp(tA) s)]``.  The right side is
    ``Tr[A^2] - (1 - e/p) Tr[A' E(A')]`` for a power volume map with
    exponent ``e``, where ``A'`` is ``A`` transported to the frame in which
    the channel is assembled.  Valid at balanced states for traceless ``A``.
    """
    if volmap.kind != "power":
        raise InvalidInputError("closed-form moment-map derivative needs a power volume map")
    A = check_hermitian(A, "direction")
    n_p = state.dim

    def f(t):
        return float(np.trace(A @ moment_map(state.act(_expm_herm(t * A)), volmap, table)).real)

    _, _, vol = _state_data(state, volmap, table)
    lhs = n_p / (2.0 * vol) * (f(step) - f(-step)) / (2.0 * step)
    H = state.product
    W = state.G @ H.sqrt
    Ap = W.conj().T @ A @ W
    op = channel(H, volmap, table)
    factor = 1.0 - volmap.exponent / table.p
    rhs = float(np.trace(A @ A).real) - factor * op.quadratic_form(0.5 * (Ap + Ap.conj().T))
    scale = max(abs(rhs), abs(lhs))
    gap = 0.0 if scale == 0 else abs(lhs - rhs) / scale
    return DmuComparison(lhs, rhs, gap)


@dataclass(frozen=True)
class Linearization:
    """Spectrum of the derivative of the Donaldson map at a fixed point.

    ``eigenvalues`` act on Hermitian generators ``A`` in the frame
    ``H^{-1/2}``, i.e. on curves ``H^{1/2} exp(tA) H^{1/2}``.  They come from
    the channel formula when ``closed_form`` is true and from finite
    differences otherwise.
    """

    eigenvalues: np.ndarray
    identity_eigenvalue: float
    top_traceless: float
    top_contracting: float
    fd_rel_gaps: np.ndarray
    closed_form: bool
    fixed_point_residual: float

    @property
    def max_rel_gap(self) -> float:
        return float(np.max(self.fd_rel_gaps)) if self.fd_rel_gaps.size else 0.0

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "identity_eigenvalue": self.identity_eigenvalue,
            "top_traceless": self.top_traceless,
            "top_contracting": self.top_contracting,
            "fd_max_rel_gap": self.max_rel_gap,
            "closed_form": self.closed_form,
            "fixed_point_residual": self.fixed_point_residual,
        }


def _fd_derivative(H: HermProduct, A, volmap, table, step):
    S, R = H.sqrt, H.invsqrt
    plus = donaldson_step(HermProduct(S @ _expm_herm(step * A) @ S), volmap, table).matrix
    minus = donaldson_step(HermProduct(S @ _expm_herm(-step * A) @ S), volmap, table).matrix
    D = R @ (plus - minus) @ R / (2.0 * step)
    return 0.5 * (D + D.conj().T)


def linearized_map(
    Hstar: HermProduct,
    volmap: VolumeMap,
    table: EvalTable,
    n_directions: int = 20,
    step: float = 1e-4,
    tol: float = 1e-9,
    rng=None,
) -> Linearization:
    """Derivative of the Donaldson map at a fixed point.

    For power volume maps with exponent ``e`` the closed form is
    ``DT(A) = (1 - e/p) E(A) + (e/p) (Tr A / n_p) Id``; it is checked against
    central finite differences on ``n_directions`` random generators.  For
    the Liouville map the full derivative is built by finite differences.

    Raises :class:`NotAFixedPointError` when ``Hstar`` is not fixed to within
    ``10 * tol``.
    """
    residual = distance(normalize_det(Hstar), normalize_det(donaldson_step(Hstar, volmap, table)))
    if residual > 10.0 * tol:
        raise NotAFixedPointError(
            f"fixed point required: product moves by {residual:.3e} under one step (limit {10 * tol:.1e})"
        )
    rng = np.random.default_rng(rng)
    n_p, p = table.n_p, table.p
    ident_vec = herm_to_vec(np.eye(n_p)) / np.sqrt(n_p)
    if volmap.kind == "power":
        e = volmap.exponent
        op = channel(Hstar, volmap, table, dense=True)
        L = (1.0 - e / p) * op.matrix + (e / p) * np.outer(ident_vec, ident_vec)

        def closed(A):
            return (1.0 - e / p) * op.apply(A) + (e / p) * (np.trace(A).real / n_p) * np.eye(n_p)

        gaps = []
        for _ in range(n_directions):
            A = random_hermitian(n_p, rng)
            ref = closed(A)
            fd = _fd_derivative(Hstar, A, volmap, table, step)
            gaps.append(np.linalg.norm(fd - ref) / np.linalg.norm(ref))
        w, V = np.linalg.eigh(L)
        closed_form = True
    else:
        from .linalg import herm_basis

        basis = herm_basis(n_p)
        L = np.stack([herm_to_vec(_fd_derivative(Hstar, B, volmap, table, step)) for B in basis], axis=1)
        w, V = np.linalg.eig(L)
        w, V = w.real, V.real
        gaps = []
        closed_form = False
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    id_idx = int(np.argmax(np.abs(V.T @ ident_vec)))
    Did = _fd_derivative(Hstar, np.eye(n_p), volmap, table, step)
    id_eig = float(np.trace(Did).real / n_p)
    traceless = np.delete(w, id_idx)
    contracting = w[w < 1.0 - 1e-6]
    return Linearization(
        eigenvalues=w,
        identity_eigenvalue=id_eig,
        top_traceless=float(traceless[0]) if traceless.size else float("nan"),
        top_contracting=float(contracting[0]) if contracting.size else float("nan"),
        fd_rel_gaps=np.array(gaps),
        closed_form=closed_form,
        fixed_point_residual=residual,
    )


@dataclass(frozen=True)
class RateEstimate:
    """Geometric-mean contraction ratio over the tail of a distance sequence.

    ``spread`` is the standard deviation of the log-ratios; ``predicted`` is
    the linearized contraction factor when one was supplied.
    """

    beta: float
    spread: float
    n_used: int
    predicted: float | None = None

    def to_dict(self) -> dict:
        return {"beta": self.beta, "log_ratio_std": self.spread, "n_used": self.n_used, "predicted": self.predicted}


def rate_estimate(source, min_tail: int = 10, linearization: Linearization | None = None) -> RateEstimate:
    """Estimate the contraction factor of an iteration.

    Parameters
    ----------
    source : IterationReport or sequence of float
        For a report, the determinant-normalized step distances
        ``dist(N(H_k), N(H_{k+1}))`` are used.
    min_tail : int
        Minimum number of distances in the tail, which is the last half of
        the usable prefix (distances above ``100 * eps``).
    """
    if isinstance(source, IterationReport):
        d = source.column("step_distance")
    else:
        d = np.asarray(source, dtype=float)
    small = np.flatnonzero(~(d > 100 * _EPS))
    usable = d[: small[0]] if small.size else d
    n = usable.size
    if n < min_tail:
        raise InsufficientDataError(f"only {n} usable distances, need at least {min_tail}")
    tail = usable[-max(min_tail, n - n // 2):]
    logs = np.diff(np.log(tail))
    predicted = None if linearization is None else linearization.top_contracting
    return RateEstimate(float(np.exp(logs.mean())), float(logs.std()), int(tail.size), predicted)


def linear_fit(x, y):
    """Least-squares line; returns ``(slope, intercept, r_squared)``."""
    res = linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.slope), float(res.intercept), float(res.rvalue**2)
