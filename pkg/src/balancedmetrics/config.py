"""Run configuration shared by every CLI subcommand.

Configurations are JSON objects whose keys are the fields of
:class:`RunConfig`.  Command-line flags override file values; fields given
in neither place keep their defaults.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .geometry import (
    DEFAULT_ORDER,
    EvalTable,
    PolarizedModel,
    Quadrature,
    VolumeMap,
    build_model,
    eval_frame,
    make_quadrature,
    read_custom_table,
    round_density,
)

__all__ = ["RunConfig", "load_config", "parse_p_range", "resolve_volmap", "build_problem"]

MODELS = ("p1", "p2", "table")
VOLMAP_KEYWORDS = ("anticanonical", "canonical", "liouville", "constant:round")
# fields that do not influence numerical results and stay out of the hash
_UNHASHED = ("out", "jobs")


@dataclass
class RunConfig:
    """All knobs of a run.

    ``tol=None`` selects the automatic fixed-point tolerance;
    ``order=None`` the model's default quadrature order.
    """

    model: str = "p1"
    table: str | None = None
    k: int | None = None
    p: int = 4
    p_range: list | None = None
    volmap: str = "anticanonical"
    order: int | None = None
    tol: float | None = None
    max_steps: int = 500
    dt: float = 0.25
    t_final: float = 20.0
    n_directions: int = 20
    seed: int = 0
    perturb: float = 0.0
    snapshot: str | None = None
    out: str = "out"
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise InvalidInputError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == "table" and not self.table:
            raise InvalidInputError("model 'table' needs a table file")
        if not isinstance(self.p, int) or self.p < 1:
            raise InvalidInputError("p must be ≥ 1")
        if self.k is not None and (not isinstance(self.k, int) or self.k < 1):
            raise InvalidInputError("k must be ≥ 1")
        if self.p_range is not None:
            if not self.p_range:
                raise InvalidInputError("p-range is empty")
            if any(not isinstance(q, int) or q < 1 for q in self.p_range):
                raise InvalidInputError("p must be ≥ 1")
        if not (self.volmap in VOLMAP_KEYWORDS or self.volmap.startswith("constant:")):
            raise InvalidInputError(
                f"volmap must be one of {VOLMAP_KEYWORDS} or constant:FILE, got {self.volmap!r}"
            )
        if self.order is not None and (not isinstance(self.order, int) or self.order < 2):
            raise InvalidInputError("order must be an integer ≥ 2")
        if self.tol is not None and not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if not isinstance(self.max_steps, int) or self.max_steps < 0:
            raise InvalidInputError("max-steps must be a non-negative integer")
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if not self.t_final >= 0:
            raise InvalidInputError("t-final must be non-negative")
        if self.n_directions < 1:
            raise InvalidInputError("n-directions must be ≥ 1")
        if self.perturb < 0:
            raise InvalidInputError("perturb must be non-negative")
        if self.jobs < 1:
            raise InvalidInputError("jobs must be ≥ 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if isinstance(cfg.p_range, str):
            cfg.p_range = parse_p_range(cfg.p_range)
        return cfg

    def hash(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical JSON form."""
        payload = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def effective_order(self) -> int | None:
        if self.model == "table":
            return None
        return self.order if self.order is not None else DEFAULT_ORDER[_KIND[self.model]]


_KIND = {"p1": "projective-line", "p2": "projective-plane", "table": "custom-table"}


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidInputError("config file must hold a JSON object")
    return RunConfig.from_dict(data)


def parse_p_range(text: str) -> list[int]:
    """Parse ``"4..12"``, ``"4-12"`` or ``"4,6,8"`` into a list of powers."""
    text = text.strip()
    if not text:
        return []
    m = re.fullmatch(r"(\d+)\s*(?:\.\.|-)\s*(\d+)", text)
    try:
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse p-range {text!r}") from exc


def resolve_volmap(name: str, quadrature: Quadrature) -> VolumeMap:
    """Turn a volume-map keyword into a :class:`VolumeMap` for this grid.

    ``constant:round`` uses the Fubini-Study density; ``constant:FILE`` reads
    one positive number per node (``#`` comments allowed).
    """
    if name == "anticanonical":
        return VolumeMap.anticanonical()
    if name == "canonical":
        return VolumeMap.canonical()
    if name == "liouville":
        return VolumeMap.liouville()
    if name == "constant:round":
        return VolumeMap.constant(round_density(quadrature), label="constant:round")
    if name.startswith("constant:"):
        path = name.split(":", 1)[1]
        try:
            dens = np.loadtxt(path, dtype=float, ndmin=1)
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot read density file {path}: {exc}") from exc
        if dens.shape != (quadrature.size,):
            raise InvalidInputError(f"density file has {dens.size} values for {quadrature.size} nodes")
        return VolumeMap.constant(dens, label="constant:file")
    raise InvalidInputError(f"unknown volume map {name!r}")


@dataclass
class Problem:
    model: PolarizedModel
    table: EvalTable
    volmap: VolumeMap


def build_problem(cfg: RunConfig, p: int | None = None) -> Problem:
    """Model, evaluation table and volume map for one power ``p``."""
    p = cfg.p if p is None else p
    if cfg.model == "table":
        table = read_custom_table(cfg.table)
        model = build_model("custom-table", cfg.k, p, table)
    else:
        model = build_model(_KIND[cfg.model], cfg.k, p)
    quad = make_quadrature(model, cfg.effective_order())
    if cfg.volmap == "canonical" and model.kind != "custom-table":
        # K^{1/p} grows like |z|^{2kp/p}: no finite volume on a projective chart
        raise InvalidInputError(
            "canonical volume map is not integrable on a projective model (the anticanonical bundle is ample)"
        )
    need_derivs = cfg.volmap == "liouville"
    table = eval_frame(model, quad, derivatives=need_derivs)
    return Problem(model, table, resolve_volmap(cfg.volmap, quad))
