"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 non-convergence, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_problem, load_config, parse_p_range
from .dynamics import BasisState, fixed_point_tolerance, gradient_flow, iterate, linear_fit, linearized_map
from .errors import InvalidInputError, NotAFixedPointError, NumericalError
from .geometry import round_product
from .io import load_snapshot, matrix_to_pairs, save_snapshot, write_json, write_rows_csv
from .linalg import HermProduct, geodesic, normalize_det, random_hermitian
from .quantization import DENSE_CAP, channel, channel_spectrum, l2_data

log = logging.getLogger("balancedmetrics")

EXIT_OK, EXIT_INVALID, EXIT_NOCONV, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON config file; flags override its fields")
    p.add_argument("--model", nargs="+", metavar="KIND", default=S, help="p1 | p2 | table FILE")
    p.add_argument("--k", type=int, default=S, help="line-bundle degree (default: anticanonical)")
    p.add_argument("--p", type=int, default=S, help="tensor power")
    p.add_argument("--p-range", dest="p_range", default=S, help="powers, e.g. 4..12 or 4,6,8")
    p.add_argument("--volmap", default=S,
                   help="anticanonical | canonical | liouville | constant:round | constant:FILE")
    p.add_argument("--order", type=int, default=S, help="quadrature points per real direction")
    p.add_argument("--tol", type=float, default=S, help="fixed-point tolerance (default: automatic)")
    p.add_argument("--max-steps", dest="max_steps", type=int, default=S)
    p.add_argument("--dt", type=float, default=S, help="initial flow step")
    p.add_argument("--t-final", dest="t_final", type=float, default=S, help="flow horizon")
    p.add_argument("--n-directions", dest="n_directions", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--perturb", type=float, default=S, help="size of a random start perturbation")
    p.add_argument("--snapshot", default=S, help=".npz product snapshot to start from")
    p.add_argument("--jobs", type=int, default=S, help="parallel workers for p-sweeps")
    p.add_argument("--out", default=S, help="output directory")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="balancedmetrics", description="Balanced metrics on model Fano manifolds.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "iterate": "iterate the Donaldson map to a balanced product",
        "gap": "channel spectral gap over a range of powers",
        "flow": "integrate the moment-map gradient flow",
        "linearize": "spectrum of the Donaldson map at a saved fixed point",
        "rawnsley": "density-of-states field of a product",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text, description=text))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if hasattr(args, "config") else RunConfig()
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if "model" in given:
        toks = given.pop("model")
        if len(toks) > 2 or (toks[0] == "table") != (len(toks) == 2):
            raise InvalidInputError("--model takes p1, p2 or 'table FILE'")
        cfg.model = toks[0]
        if len(toks) == 2:
            cfg.table = toks[1]
    if "p_range" in given:
        given["p_range"] = parse_p_range(given["p_range"])
    for k, v in given.items():
        setattr(cfg, k, v)
    return cfg.validate()


def _start_product(cfg: RunConfig, problem, snapshot=None) -> HermProduct:
    n_p = problem.table.n_p
    if snapshot is not None:
        H = snapshot.product
        if H.dim != n_p:
            raise InvalidInputError(f"snapshot has size {H.dim}, model needs {n_p}")
    else:
        H = HermProduct.identity(n_p)
    if cfg.perturb > 0:
        rng = np.random.default_rng(cfg.seed)
        H = geodesic(H, random_hermitian(n_p, rng, scale=cfg.perturb), 1.0)
    return H


def _tolerance(cfg, problem, H) -> float:
    if cfg.tol is not None:
        return cfg.tol
    return fixed_point_tolerance(problem.model, problem.volmap, H, cfg.effective_order() or 2)


def _header(cfg, command):
    return {"config_hash": cfg.hash(), "command": command}


def _summary(cfg, command, result, code):
    return {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "exit_code": code,
        "result": result,
    }


def _snapshot_arg(cfg):
    return load_snapshot(cfg.snapshot) if cfg.snapshot else None


def cmd_iterate(cfg: RunConfig, out: Path) -> int:
    problem = build_problem(cfg)
    H0 = _start_product(cfg, problem, _snapshot_arg(cfg))
    tol = _tolerance(cfg, problem, H0)
    report = iterate(H0, problem.volmap, problem.table, cfg.max_steps, tol)
    code = EXIT_OK if report.converged else EXIT_NOCONV
    result = report.summary()
    result["product"] = matrix_to_pairs(normalize_det(report.product).matrix)
    write_json(out / "iterate.json", _summary(cfg, "iterate", result, code))
    write_rows_csv(out / "iterate.csv", report.records[0].FIELDS, report.rows(), _header(cfg, "iterate"))
    save_snapshot(
        out / "iterate.npz", report.product, config_hash=cfg.hash(), converged=report.converged,
        residual=report.records[-1].step_distance, tol=tol, p=cfg.p, model=problem.model.kind,
        volmap=problem.volmap.label,
    )
    if not report.converged:
        log.warning("no convergence within %d steps (last step distance %.3e)",
                    cfg.max_steps, report.records[-1].step_distance)
    return code


def _gap_row(cfg: RunConfig, p: int):
    problem = build_problem(cfg, p)
    model = problem.model
    H0 = round_product(model) if model.exponents is not None else HermProduct.identity(model.n_p)
    tol = cfg.tol if cfg.tol is not None else 1e-9
    report = iterate(H0, problem.volmap, problem.table, cfg.max_steps, tol)
    if model.n_p > DENSE_CAP:
        log.info("p=%d: n_p=%d above dense cap %d, using matrix-free channel", p, model.n_p, DENSE_CAP)
    spec = channel_spectrum(channel(report.product, problem.volmap, problem.table))
    return report.converged, [p, spec.gamma1, spec.gap, p * spec.gap, spec.laplacian_estimate]


def cmd_gap(cfg: RunConfig, out: Path) -> int:
    ps = cfg.p_range if cfg.p_range is not None else [cfg.p]
    if not ps:
        raise InvalidInputError("p-range is empty")
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(lambda q: _gap_row(cfg, q), ps))
    rows = [r for _, r in results]
    converged = all(c for c, _ in results)
    columns = ["p", "gamma1", "gap", "p_gap", "lambda1_estimate"]
    write_rows_csv(out / "gap.csv", columns, rows, _header(cfg, "gap"))
    result = {"rows": [dict(zip(columns, r)) for r in rows], "fit": None, "all_converged": converged}
    if len(rows) >= 2:
        slope, intercept, r2 = linear_fit([1.0 / r[0] for r in rows], [r[3] for r in rows])
        result["fit"] = {"model": "p_gap = a + b/p", "a": intercept, "b": slope, "r2": r2}
    else:
        log.warning("single p value: no asymptotic fit")
    code = EXIT_OK if converged else EXIT_NOCONV
    write_json(out / "gap.json", _summary(cfg, "gap", result, code))
    return code


def cmd_flow(cfg: RunConfig, out: Path) -> int:
    problem = build_problem(cfg)
    H0 = _start_product(cfg, problem, _snapshot_arg(cfg))
    rep = gradient_flow(BasisState.from_product(H0), problem.volmap, problem.table, cfg.dt, cfg.t_final)
    H = rep.state.product
    result = rep.summary()
    result["product"] = matrix_to_pairs(normalize_det(H).matrix)
    write_json(out / "flow.json", _summary(cfg, "flow", result, EXIT_OK))
    write_rows_csv(out / "flow.csv", rep.FIELDS, rep.rows(), _header(cfg, "flow"))
    save_snapshot(
        out / "flow.npz", H, config_hash=cfg.hash(), converged=rep.termination == "converged",
        residual=float(rep.mu_norms[-1]), tol=cfg.tol or 0.0, p=cfg.p, model=problem.model.kind,
        volmap=problem.volmap.label,
    )
    return EXIT_OK


def cmd_linearize(cfg: RunConfig, out: Path) -> int:
    if not cfg.snapshot:
        raise NotAFixedPointError("fixed point required: pass --snapshot from a converged iterate run")
    snap = load_snapshot(cfg.snapshot)
    if not snap.converged:
        raise NotAFixedPointError("fixed point required: snapshot comes from a run that did not converge")
    problem = build_problem(cfg)
    if snap.product.dim != problem.table.n_p:
        raise InvalidInputError(f"snapshot has size {snap.product.dim}, model needs {problem.table.n_p}")
    tol = cfg.tol if cfg.tol is not None else max(snap.tol, 1e-9)
    lin = linearized_map(snap.product, problem.volmap, problem.table, cfg.n_directions, tol=tol, rng=cfg.seed)
    write_json(out / "linearize.json", _summary(cfg, "linearize", lin.to_dict(), EXIT_OK))
    write_rows_csv(out / "linearize.csv", ["index", "eigenvalue"],
                   [[i, float(x)] for i, x in enumerate(lin.eigenvalues)], _header(cfg, "linearize"))
    return EXIT_OK


def cmd_rawnsley(cfg: RunConfig, out: Path) -> int:
    problem = build_problem(cfg)
    H = _start_product(cfg, problem, _snapshot_arg(cfg))
    table = problem.table
    d = l2_data(H, problem.volmap, table)
    rho = d.rho(table)
    target = table.n_p / d.vol
    q = table.quadrature
    cols = [f"{part}_z{a + 1}" for a in range(q.dim) for part in ("re", "im")] + ["weight", "rho"]
    rows = [list(x) + [w, r] for x, w, r in zip(q.real_nodes, q.weights, rho)]
    write_rows_csv(out / "rawnsley.csv", cols, rows, _header(cfg, "rawnsley"))
    result = {
        "n_p": table.n_p,
        "vol": d.vol,
        "target": target,
        "rho_min": float(rho.min()),
        "rho_max": float(rho.max()),
        "sup_deviation": float(np.max(np.abs(rho - target))),
        "integral": float(q.integrate(rho * d.density)),
    }
    write_json(out / "rawnsley.json", _summary(cfg, "rawnsley", result, EXIT_OK))
    return EXIT_OK


COMMANDS = {
    "iterate": cmd_iterate,
    "gap": cmd_gap,
    "flow": cmd_flow,
    "linearize": cmd_linearize,
    "rawnsley": cmd_rawnsley,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = make_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
