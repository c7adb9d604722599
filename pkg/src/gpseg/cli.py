"""Batch driver.

    gpseg <eig|solve|continue|analyze|probe> --config PATH [--out DIR] [--seed N]

Exit status is 0 on success, 2 when a solve did not converge (partial
artifacts and an ``error:`` line are still written) and 1 for configuration
or input errors, in which case nothing is written.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import RunConfig, parse_config
from .errors import ConfigurationError, DimensionError, SolverError
from .fileio import export_field, import_field, write_report
from .grid import Grid, build_grid, dirichlet_eigenpairs
from .model import StatePair, Variant
from .solver import (
    canonical_representative,
    continue_in_beta,
    descend,
    linking_probe,
    minimax_init,
    newton_refine,
)

SUBCOMMANDS = ("eig", "solve", "continue", "analyze", "probe")
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2


class _Failure(Exception):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def _cutoff(grid: Grid, cfg: RunConfig) -> tuple[np.ndarray, str]:
    center = cfg.cutoff_center or tuple(0.5 * L for L in grid.domain.lengths)
    radius = cfg.cutoff_radius or 0.25 * min(grid.domain.lengths)
    ident = "quintic center=(" + ",".join(f"{c:.6g}" for c in center) + f") radius={radius:.6g}"
    return analysis.quintic_bump(grid, center, radius), ident


def _state_record(grid, cfg, params, state, variant) -> dict:
    rec = {"beta": params.beta}
    diag = analysis.diagnostics(grid, params, state, variant, morse=cfg.morse,
                                morse_tol=cfg.morse_tol, delta_rel=cfg.nodal_delta_rel)
    for key in ("energy", "residual", "segregation", "h1_u", "h1_v", "linf_u", "linf_v"):
        rec[key] = diag[key]
    if cfg.morse:
        rec["morse_index"] = diag["morse_index"]
        rec["nullity"] = diag["nullity"]
    if cfg.nodal:
        rec["nodal_components"] = diag["nodal_components"]
        rec["nodal_delta"] = diag["nodal_delta"]
    if cfg.pohozaev:
        cutoff, ident = _cutoff(grid, cfg)
        rec["pohozaev_residual"] = analysis.pohozaev_residual(grid, params, state, cutoff, ident).residual
        rec["nehari_u"], rec["nehari_v"] = analysis.nehari_residual(grid, params, state)
    return rec


def _solve_first(grid, cfg, params, variant):
    init = minimax_init(grid, cfg.seed, params, variant)
    flags = []
    if cfg.descent:
        d = descend(grid, params, init, cfg.solve, variant)
        init = d.state
        flags.extend(d.flags)
    res = newton_refine(grid, params, init, cfg.solve, variant)
    res.flags[:0] = flags
    return res


def _write_state(grid, out: Path, state: StatePair, tag: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    export_field(grid, state.u, out / f"u{tag}.csv")
    export_field(grid, state.v, out / f"v{tag}.csv")


def _cmd_eig(grid, cfg, out, state=None):
    pairs = dirichlet_eigenpairs(grid, cfg.seed.k)
    lines = ["j,value"] + [f"{j},{p.value:.16e}" for j, p in enumerate(pairs, start=1)]
    out.mkdir(parents=True, exist_ok=True)
    (out / "eigenvalues.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_solve(grid, cfg, out, state=None):
    params, variant = cfg.params, Variant(cfg.variant)
    try:
        res = _solve_first(grid, cfg, params, variant)
    except SolverError as exc:
        raise _Failure(str(exc)) from exc
    state = canonical_representative(grid, res.state)
    rec = {"status": "converged" if res.converged else "not_converged"}
    if not res.converged:
        rec["error"] = "; ".join(res.flags) or "newton not converged"
    rec.update(_state_record(grid, cfg, params, state, variant))
    rec["iterations"] = res.iterations
    _write_state(grid, out, state)
    write_report(rec, out / "report.txt")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _cmd_continue(grid, cfg, out, state=None):
    params, variant = cfg.params, Variant(cfg.variant)
    try:
        res = _solve_first(grid, cfg, params, variant)
    except SolverError as exc:
        raise _Failure(str(exc)) from exc
    if not res.converged:
        raise _Failure(f"no solution at beta={params.beta:g}", partial=res.state)
    start = canonical_representative(grid, res.state)
    try:
        branch = continue_in_beta(grid, params, start, cfg.schedule, cfg.solve, variant, morse=False)
    except SolverError as exc:
        raise _Failure(str(exc), partial=start) from exc
    blocks = []
    rows = ["beta,energy,residual,segregation,h1_u,h1_v,linf_u,linf_v"]
    for i, (beta, state) in enumerate(zip(branch.betas, branch.states)):
        rec = {"status": "converged"}
        rec.update(_state_record(grid, cfg, params.with_beta(beta), state, variant))
        blocks.append(rec)
        rows.append(",".join(f"{rec[k]:.16e}" for k in
                             ("beta", "energy", "residual", "segregation", "h1_u", "h1_v", "linf_u", "linf_v")))
        if len(cfg.schedule) > 1:
            _write_state(grid, out, state, f"_{i:03d}")
    blocks[0]["iterations"] = res.iterations
    _write_state(grid, out, branch.states[-1])
    if not branch.complete:
        blocks[-1]["status"] = "not_converged"
        blocks[-1]["error"] = "; ".join(branch.flags)
    if cfg.decay_fit:
        try:
            fit = analysis.decay_fit(branch)
            blocks[-1]["decay_slope"], blocks[-1]["decay_r2"] = fit.slope, fit.r_squared
        except ConfigurationError as exc:
            blocks[-1]["error"] = f"decay fit skipped: {exc}"
    if len(cfg.schedule) > 1:
        (out / "branch.csv").write_text("\n".join(rows) + "\n")
    write_report(blocks, out / "report.txt")
    return EXIT_OK if branch.complete else EXIT_NONCONVERGED


def _cmd_analyze(grid, cfg, out, state):
    params, variant = cfg.params, Variant(cfg.variant)
    rec = {"status": "ok"}
    rec.update(_state_record(grid, cfg, params, state, variant))
    write_report(rec, out / "analysis.txt")
    return EXIT_OK


def _cmd_probe(grid, cfg, out, state=None):
    rep = linking_probe(grid, cfg.params, cfg.seed.k, cfg.rho, cfg.samples, cfg.rng_seed)
    rec = {"status": "ok", "beta": rep.beta, "k": rep.k, "rho": rep.rho,
           "samples": rep.samples, "min_energy": rep.min_energy}
    out.mkdir(parents=True, exist_ok=True)
    write_report(rec, out / "probe.txt")
    return EXIT_OK


COMMANDS = {
    "eig": _cmd_eig,
    "solve": _cmd_solve,
    "continue": _cmd_continue,
    "analyze": _cmd_analyze,
    "probe": _cmd_probe,
}


def run(subcommand: str, config: RunConfig | str, out: str | Path | None = None, seed: int | None = None) -> int:
    """Execute one subcommand; returns the process exit status."""
    try:
        if subcommand not in COMMANDS:
            raise ConfigurationError(f"unknown subcommand {subcommand!r}")
        cfg = parse_config(config) if isinstance(config, str) else config
        if seed is not None:
            cfg = replace(cfg, rng_seed=int(seed))
        out = Path(out if out is not None else cfg.output_dir)
        grid = build_grid(cfg.domain)
        state = _load_state(grid, out) if subcommand == "analyze" else None
    except (ConfigurationError, DimensionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[subcommand](grid, cfg, out, state)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _Failure as exc:
        out.mkdir(parents=True, exist_ok=True)
        if exc.partial is not None:
            _write_state(grid, out, exc.partial)
        write_report({"status": "not_converged", "error": str(exc)}, out / "report.txt")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


def _load_state(grid: Grid, out: Path) -> StatePair:
    for name in ("u.csv", "v.csv"):
        if not (out / name).is_file():
            raise ConfigurationError(f"missing field file {out / name}")
    _, u = import_field(out / "u.csv", grid)
    _, v = import_field(out / "v.csv", grid)
    return StatePair(u, v)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gpseg", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="run configuration file")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="override [seed] rng_seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.subcommand, text, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
