"""Report, table and snapshot serialization.

JSON files are written with sorted keys and no timestamps so identical runs
produce identical bytes.  Complex matrices are stored row-major as
``[[re, im], ...]`` pairs.  CSV files start with ``# key: value`` comment
lines carrying the configuration hash.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .linalg import HermProduct

__all__ = [
    "matrix_to_pairs",
    "pairs_to_matrix",
    "write_json",
    "write_rows_csv",
    "read_csv_header",
    "Snapshot",
    "save_snapshot",
    "load_snapshot",
]


def matrix_to_pairs(M) -> list:
    """Row-major list of ``[re, im]`` pairs for a complex matrix."""
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def pairs_to_matrix(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise InvalidInputError("matrix pairs must have shape (rows, cols, 2)")
    return arr[..., 0] + 1j * arr[..., 1]


def _clean(obj):
    # JSON has no NaN/inf; map them to null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def write_rows_csv(path, columns, rows, header: dict | None = None) -> None:
    """CSV with optional ``# key: value`` preamble; floats use ``repr``."""
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def read_csv_header(path) -> dict:
    """The ``# key: value`` preamble of a CSV written by this package."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].partition(":")
            out[key.strip()] = val.strip()
    return out


@dataclass(frozen=True)
class Snapshot:
    """A saved product with the facts needed to resume or linearize."""

    product: HermProduct
    config_hash: str
    converged: bool
    residual: float
    tol: float
    p: int
    model: str
    volmap: str


def save_snapshot(path, H: HermProduct, *, config_hash: str, converged: bool, residual: float,
                  tol: float, p: int, model: str, volmap: str) -> None:
    """Write a ``.npz`` snapshot (product matrix plus metadata)."""
    with open(path, "wb") as fh:
        np.savez(
            fh,
            matrix=np.asarray(H.matrix),
            config_hash=np.array(config_hash),
            converged=np.array(bool(converged)),
            residual=np.array(float(residual)),
            tol=np.array(float(tol)),
            p=np.array(int(p)),
            model=np.array(model),
            volmap=np.array(volmap),
        )


def load_snapshot(path) -> Snapshot:
    try:
        with np.load(path, allow_pickle=False) as z:
            return Snapshot(
                product=HermProduct(z["matrix"]),
                config_hash=str(z["config_hash"]),
                converged=bool(z["converged"]),
                residual=float(z["residual"]),
                tol=float(z["tol"]),
                p=int(z["p"]),
                model=str(z["model"]),
                volmap=str(z["volmap"]),
            )
    except (OSError, KeyError, ValueError) as exc:
        raise InvalidInputError(f"cannot read snapshot {path}: {exc}") from exc
