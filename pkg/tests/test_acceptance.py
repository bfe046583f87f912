"""End-to-end acceptance criteria, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import time

import numpy as np
import pytest
from scipy.linalg import expm

from balancedmetrics.dynamics import (
    BasisState,
    dmu_form,
    gradient_flow,
    iterate,
    linear_fit,
    linearized_map,
    moment_map,
)
from balancedmetrics.geometry import (
    VolumeMap,
    build_model,
    eval_frame,
    liouville_density,
    make_quadrature,
    round_density,
)
from balancedmetrics.linalg import HermProduct, geodesic, random_hermitian, random_unitary
from balancedmetrics.quantization import (
    channel,
    channel_spectrum,
    coherent_projectors,
    l2_data,
    toeplitz,
)
from support import balanced_line, line, random_product

ANTI = VolumeMap.anticanonical()
SWEEP = range(4, 13)


def _balanced(p, vm=ANTI, t=None):
    model, _, table = line(p)
    rep = iterate(HermProduct.identity(model.n_p), vm, table if t is None else t, max_steps=2000, tol=1e-11)
    assert rep.converged
    return rep.product


@pytest.mark.criterion(1, "balanced fixed point from the identity, line p=4")
def test_balanced_fixed_point():
    start = time.perf_counter()
    model = build_model("projective-line", 2, 4)
    table = eval_frame(model, make_quadrature(model))
    rep = iterate(HermProduct.identity(model.n_p), ANTI, table)
    elapsed = time.perf_counter() - start
    last = rep.records[-1]
    print(f"steps={rep.steps} rho_dev={last.rho_dev:.2e} mu={last.mu_norm:.2e} time={elapsed:.2f}s")
    assert rep.converged
    assert last.rho_dev < 1e-7
    assert last.mu_norm < 1e-7
    assert elapsed < 10


@pytest.mark.criterion(2, "p(1-gamma1) = a + b/p with |a - 1| <= 0.05 over p = 4..12")
def test_channel_gap_asymptotics():
    start = time.perf_counter()
    ps, pgap = [], []
    for p in SWEEP:
        model = build_model("projective-line", 2, p)
        table = eval_frame(model, make_quadrature(model))
        rep = iterate(HermProduct.identity(model.n_p), ANTI, table, max_steps=2000, tol=1e-10)
        assert rep.converged
        spec = channel_spectrum(channel(rep.product, ANTI, table))
        ps.append(p)
        pgap.append(p * spec.gap)
    slope, intercept, r2 = linear_fit(1 / np.array(ps, float), pgap)
    elapsed = time.perf_counter() - start
    print(f"a={intercept:.4f} b={slope:.4f} r2={r2:.6f} time={elapsed:.1f}s")
    assert abs(intercept - 1.0) <= 0.05
    assert elapsed < 120


@pytest.mark.criterion(3, "finite-difference DT matches the closed form to 1e-5, p=4")
def test_linearization_identity():
    _, _, t = line(4)
    lin = linearized_map(balanced_line(4), ANTI, t, n_directions=20, step=1e-4, rng=3)
    print(f"max rel gap={lin.max_rel_gap:.2e}")
    assert len(lin.fd_rel_gaps) == 20
    assert lin.max_rel_gap < 1e-5


@pytest.mark.criterion(4, "moment-map derivative identity to 1e-5, p=4")
def test_moment_map_derivative():
    _, _, t = line(4)
    s = BasisState.from_product(balanced_line(4))
    rng = np.random.default_rng(4)
    gaps = [dmu_form(random_hermitian(9, rng, traceless=True), s, ANTI, t, step=1e-4).rel_gap for _ in range(20)]
    print(f"max rel gap={max(gaps):.2e}")
    assert max(gaps) < 1e-5


@pytest.mark.criterion(5, "Psi non-increasing and log det contracting over 50 random starts")
def test_energy_monotonicity():
    model, _, t = line(4)
    rng = np.random.default_rng(5)
    worst_psi, worst_det = -np.inf, -np.inf
    for _ in range(50):
        rep = iterate(random_product(model.n_p, rng, rng.uniform(0.2, 2.0)), ANTI, t, max_steps=200, tol=1e-9)
        psi = rep.column("psi")
        worst_psi = max(worst_psi, np.max(np.diff(psi)))
        worst_det = max(worst_det, np.max(rep.column("logdet_ratio")[1:]))
    print(f"max psi increase={worst_psi:.2e} max logdet ratio={worst_det:.2e}")
    assert worst_psi <= 1e-12
    assert worst_det <= 1e-10


@pytest.mark.criterion(6, "log|mu| decreases monotonically and its tail is linear (R^2 > 0.99)")
def test_flow_decay():
    _, _, t = line(4)
    rng = np.random.default_rng(6)
    Hb = balanced_line(4)
    for _ in range(5):
        H0 = geodesic(Hb, random_hermitian(9, rng, scale=0.3), 1.0)
        rep = gradient_flow(BasisState.from_product(H0), ANTI, t, dt=0.5, t_final=30.0)
        logmu = np.log(rep.mu_norms)
        slope, _, r2 = rep.decay_fit()
        print(f"slope={slope:.4f} r2={r2:.6f}")
        assert np.all(np.diff(logmu) < 0)
        assert r2 > 0.99


@pytest.mark.criterion(7, "constant-map rate within 15% of 1 - 1/p and 5% of the linearization, p=6")
def test_constant_map_rate():
    p = 6
    model, q, t = line(p)
    vm = VolumeMap.constant(round_density(q), label="constant:round")
    rng = np.random.default_rng(7)
    H0 = HermProduct(expm(random_hermitian(model.n_p, rng, scale=0.5)))
    rep = iterate(H0, vm, t, max_steps=2000, tol=1e-10)
    lin = linearized_map(rep.product, vm, t, n_directions=2)
    beta = rep.rate.beta
    print(f"beta={beta:.6f} 1-1/p={1 - 1 / p:.6f} linearized={lin.top_traceless:.6f}")
    assert rep.converged
    assert abs(beta / (1 - 1 / p) - 1) < 0.15
    assert abs(beta / lin.top_traceless - 1) < 0.05


@pytest.mark.criterion(8, "|(1+1/p) gamma1 - 1| decays like p^-2 (log-log slope -2 +/- 0.3), p = 4..12")
def test_borderline_rate():
    devs = []
    for p in SWEEP:
        _, _, t = line(p)
        spec = channel_spectrum(channel(_balanced(p), ANTI, t))
        devs.append(abs((1 + 1 / p) * spec.gamma1 - 1))
    devs = np.array(devs)
    with np.errstate(divide="ignore"):
        slope, _, r2 = linear_fit(np.log(list(SWEEP)), np.log(devs))
    print("deviations:", " ".join(f"{d:.1e}" for d in devs), f"slope={slope:.3f}")
    assert abs(slope + 2) <= 0.3, f"log-log slope {slope} from deviations {devs.tolist()}"


@pytest.mark.criterion(9, "max deviation of rho nu / (Liouville p^n) from 1 decays like 1/p, p = 4..12")
def test_bergman_leading_term():
    devs = []
    for p in SWEEP:
        _, _, t = line(p)
        H = _balanced(p)
        d = l2_data(H, ANTI, t)
        liou, _ = liouville_density(H, t)
        devs.append(np.max(np.abs(d.rho(t) * d.density / liou / p - 1)))
    slope, _, r2 = linear_fit(np.log(list(SWEEP)), np.log(devs))
    print(f"slope={slope:.4f} r2={r2:.6f}")
    assert abs(slope + 1) <= 0.1


@pytest.mark.criterion(10, "quantization sanity suite")
def test_quantization_sanity():
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    for p in (1, 2, 4, 8):
        model, q, t = line(p)
        n = model.n_p
        for _ in range(3):
            H = random_product(n, rng, 0.7)
            d = l2_data(H, ANTI, t)
            assert np.allclose(toeplitz(np.ones(q.size), H, ANTI, t), np.eye(n), atol=1e-9)
            assert np.allclose(channel(H, ANTI, t).apply(np.eye(n)), np.eye(n), atol=1e-9)
            P = coherent_projectors(H, t)
            assert np.allclose(np.trace(P, axis1=1, axis2=2).real, 1.0, atol=1e-12)
            assert np.max(np.abs(P @ P - P)) < 1e-12
            assert q.integrate(d.rho(t) * d.density) == pytest.approx(n, abs=1e-8)
            s = BasisState.from_product(H)
            mu = moment_map(s, ANTI, t)
            assert abs(np.trace(mu)) < 1e-10
            U = random_unitary(n, rng)
            assert np.allclose(moment_map(s.act(U), ANTI, t), U @ mu @ U.conj().T, atol=1e-10)
    elapsed = time.perf_counter() - start
    print(f"time={elapsed:.1f}s")
    assert elapsed < 300
