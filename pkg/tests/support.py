"""Cached problem builders shared by the test modules."""
from functools import lru_cache

import numpy as np

from balancedmetrics.dynamics import iterate
from balancedmetrics.geometry import (
    VolumeMap,
    build_model,
    eval_frame,
    make_quadrature,
    round_density,
    round_product,
)
from balancedmetrics.linalg import HermProduct


@lru_cache(maxsize=None)
def line(p, order=64):
    model = build_model("projective-line", 2, p)
    quad = make_quadrature(model, order)
    return model, quad, eval_frame(model, quad)


@lru_cache(maxsize=None)
def plane(p, order=12):
    model = build_model("projective-plane", 3, p)
    quad = make_quadrature(model, order)
    return model, quad, eval_frame(model, quad)


def volmap(kind, quad):
    if kind == "anticanonical":
        return VolumeMap.anticanonical()
    if kind == "liouville":
        return VolumeMap.liouville()
    if kind == "round":
        return VolumeMap.constant(round_density(quad), label="constant:round")
    raise ValueError(kind)


@lru_cache(maxsize=None)
def balanced_line(p, kind="anticanonical", order=64):
    """Balanced product on the line, reached by iterating from the identity."""
    model, quad, table = line(p, order)
    vm = volmap(kind, quad)
    rep = iterate(HermProduct.identity(model.n_p), vm, table, max_steps=2000, tol=1e-11)
    assert rep.converged
    return rep.product


def round_line(p):
    return round_product(line(p)[0])


def random_product(n, rng, spread=1.0):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = 0.5 * (X + X.conj().T)
    w, Q = np.linalg.eigh(A / np.linalg.norm(A) * spread * np.sqrt(n))
    return HermProduct((Q * np.exp(w)) @ Q.conj().T)
