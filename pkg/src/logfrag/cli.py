"""
Command-line front end.

    logfrag solve    --config run.toml   # state, population size, energies
    logfrag optimize --config run.toml   # optimal resource distribution
    logfrag sweep    --config run.toml   # BV growth across diffusivities
    logfrag spectral --config run.toml   # eigenvalues and non-optimality certificate
    logfrag verify   --config run.toml   # invariant suite, pass/fail table

Each run writes its artifacts into ``--out`` (default ``<output.dir>/<command>``)
and finishes with ``manifest.json``.  Exit codes: 0 success, 1 numerical
failure (or failed checks for ``verify``), 2 configuration error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .checks import run_invariant_suite
from .config import ConfigError, load_config
from .fragmentation import GridPolicy, log_space, mu_sweep
from .grid import build_grid, indicator, integrate
from .io import read_field_csv, write_field_csv, write_json, write_table_csv
from .optimizer import CycleDetected, OptimizerConfig, optimize_general_j
from .sensitivity import PositivityViolation
from .spectral import InactiveSetTooSmall, IterationFailure, bang_bang_certificate, eigenpairs
from .state import CRITERIA, NonConvergence, ResourceDistribution, SolverConfig, criterion_j, solve_state

NUMERICAL_ERRORS = (NonConvergence, PositivityViolation, IterationFailure, CycleDetected, np.linalg.LinAlgError)


def _version() -> str:
    try:
        return metadata.version("logfrag")
    except metadata.PackageNotFoundError:
        return "unknown"


def _solver_cfg(cfg: dict) -> SolverConfig:
    return SolverConfig(
        tol=cfg["solver.tol"],
        max_newton=cfg["solver.max_newton"],
        max_linesearch=cfg["solver.max_linesearch"],
        fallback_gradient_flow=cfg["solver.fallback_gradient_flow"],
    )


def _optimizer_cfg(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(
        n_restarts=cfg["optimizer.restarts"],
        seed=cfg["optimizer.seed"],
        max_iter=cfg["optimizer.max_iter"],
        max_rounds=cfg["optimizer.max_rounds"],
        solver=_solver_cfg(cfg),
    )


def build_resource(cfg: dict):
    """Grid and admissible resource field described by the configuration."""
    g = build_grid(cfg["grid.dim"], cfg["grid.n"])
    kind = cfg["problem.resource"]
    if kind == "constant":
        values = g.full(cfg["problem.m0"])
    elif kind == "sets":
        try:
            values = indicator(g, cfg["problem.sets"], mode=cfg["problem.indicator_mode"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem.sets: cannot build indicator ({exc})") from None
    else:
        try:
            g_file, values = read_field_csv(cfg["problem.resource_csv"])
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"problem.resource_csv: {exc}") from None
        if g_file != g:
            raise ConfigError("problem.resource_csv: field grid differs from grid.dim/grid.n")
    try:
        return g, ResourceDistribution.from_values(g, values)
    except ValueError as exc:
        raise ConfigError(f"problem.resource: {exc}") from None


class Run:
    """Collects artifacts and writes the manifest last."""

    def __init__(self, command: str, cfg: dict, out: Path, seed: int):
        self.command, self.cfg, self.out, self.seed = command, cfg, out, seed
        self.artifacts: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def add(self, p: Path) -> None:
        self.artifacts.append(str(p.relative_to(self.out)))
        side = p.with_suffix(".json")
        if p.suffix == ".csv" and side.exists():
            self.artifacts.append(str(side.relative_to(self.out)))

    def finish(self) -> Path:
        for a in self.artifacts:
            f = self.out / a
            if not f.is_file() or f.stat().st_size == 0:
                raise RuntimeError(f"artifact {a} is missing or empty")
        manifest = {
            "command": self.command,
            "config_echo": self.cfg,
            "seed": self.seed,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "artifact_paths": self.artifacts,
            "versions": (
                f"logfrag {_version()}; python {platform.python_version()}; "
                f"numpy {np.__version__}; scipy {scipy.__version__}"
            ),
        }
        return write_json(self.out / "manifest.json", manifest)


def cmd_solve(cfg: dict, run: Run) -> int:
    g, m = build_resource(cfg)
    state = solve_state(g, m, cfg["problem.mu"], _solver_cfg(cfg))
    crit = CRITERIA[cfg["criterion.j"]]
    result = {
        "mu": state.mu,
        "mass": m.mass,
        "total_population": state.total_population,
        "criterion": crit.name,
        "criterion_value": criterion_j(state, crit),
        "energy": state.energy,
        "shifted_energy": state.shifted_energy,
        "newton_iters": state.newton_iters,
        "residual_norm": state.residual_norm,
        "theta_min": float(state.theta.min()),
        "theta_max": float(state.theta.max()),
        "method": state.method,
    }
    run.add(write_field_csv(run.path("theta.csv"), g, state.theta, "theta"))
    run.add(write_field_csv(run.path("m.csv"), g, m.values, "m"))
    run.add(write_json(run.path("result.json"), result))
    print(run.path("result.json").read_text(encoding="utf-8"), end="")
    return 0


def cmd_optimize(cfg: dict, run: Run) -> int:
    g = build_grid(cfg["grid.dim"], cfg["grid.n"])
    res = optimize_general_j(g, cfg["problem.mu"], cfg["problem.m0"], cfg["criterion.j"], _optimizer_cfg(cfg))
    run.add(write_field_csv(run.path("m_star.csv"), g, res.m_star.values, "m"))
    trace = [{"iteration": i, "objective": v} for i, v in enumerate(res.objective_trace)]
    run.add(write_table_csv(run.path("trace.csv"), trace, ["iteration", "objective"]))
    doc = res.scalars() | {"seed": cfg["optimizer.seed"], "config": cfg}
    run.add(write_json(run.path("result.json"), doc))
    print(f"final_objective {res.final_objective:.17g}  bang_bang_fraction {res.bang_bang_fraction:.17g}")
    return 0


def cmd_sweep(cfg: dict, run: Run) -> int:
    mus = log_space(cfg["sweep.mu_max"], cfg["sweep.mu_min"], cfg["sweep.points"])
    policy = GridPolicy(cfg["sweep.grid_factor"], cfg["sweep.min_n"], cfg["sweep.max_n"], cfg["grid.dim"])
    res = mu_sweep(mus, cfg["problem.m0"], policy, _optimizer_cfg(cfg))
    rows = [r.row() for r in res.records]
    run.add(write_table_csv(run.path("sweep.csv"), rows))
    plot = [
        {"log_mu": float(np.log(r.mu)), "log_bv": float(np.log(r.bv_norm))}
        for r in res.records
        if not r.error
    ]
    run.add(write_table_csv(run.path("plot.csv"), plot, ["log_mu", "log_bv"]))
    run.add(write_json(run.path("slope.json"), res.summary()))
    for i, r in enumerate(res.records):
        f = res.fields.get(r.mu)
        if f is not None:
            g = build_grid(policy.dim, r.grid_n)
            run.add(write_field_csv(run.path(f"fields/m_star_{i:02d}.csv"), g, f, "m"))
    s = res.summary()
    slope = "undefined" if s["slope"] is None else f"{s['slope']:.17g}"
    print(f"slope {slope}  delta_hat {s['delta_hat']}  failures {s['failures']}")
    return 0


def cmd_spectral(cfg: dict, run: Run) -> int:
    g, m = build_resource(cfg)
    mu = cfg["problem.mu"]
    state = solve_state(g, m, mu, _solver_cfg(cfg))
    dec = eigenpairs(state, cfg["spectral.K"])
    rows = [
        {"k": k + 1, "eigenvalue": lam, "residual": res}
        for k, (lam, res) in enumerate(zip(dec.eigenvalues, dec.residuals))
    ]
    run.add(write_table_csv(run.path("eigenvalues.csv"), rows, ["k", "eigenvalue", "residual"]))
    try:
        cert = bang_bang_certificate(
            g, m, mu, K_max=cfg["spectral.K_max"], seed=cfg["optimizer.seed"], cfg=_solver_cfg(cfg)
        ).scalars()
    except InactiveSetTooSmall as exc:
        cert = {"applicable": True, "found": False, "message": f"inactive set too small: {exc}"}
    run.add(write_json(run.path("certificate.json"), cert))
    print(f"lambda_1 {dec.eigenvalues[0]:.17g}  certificate: {cert['message']}")
    return 0


def cmd_verify(cfg: dict, run: Run) -> int:
    g, m = build_resource(cfg)
    checks, rep = run_invariant_suite(g, m.values, cfg["problem.mu"], cfg["verify.seed"], _solver_cfg(cfg))
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL'}  value={c.value:.3e}  threshold={c.threshold:.3e}")
    rows = [{"name": c.name, "passed": c.passed, "value": c.value, "threshold": c.threshold} for c in checks]
    run.add(write_table_csv(run.path("checks.csv"), rows, ["name", "passed", "value", "threshold"]))
    run.add(write_json(run.path("derivative.json"), rep.scalars()))
    cols = {"h": rep.direction, "theta_dot": rep.theta_dot, "u_ratio": rep.u_ratio, "potential": rep.potential}
    for name, values in cols.items():
        run.add(write_field_csv(run.path(f"derivative_{name}.csv"), g, values, name))
    ok = all(c.passed for c in checks)
    print("ALL PASS" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "spectral": cmd_spectral,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logfrag", description=__doc__.split("\n\n")[0].strip())
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key, e.g. problem.mu=0.05")
        p.add_argument("--out", help="run directory (default: <output.dir>/<command>)")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(cfg["output.dir"]) / args.command
    seed = cfg["verify.seed"] if args.command == "verify" else cfg["optimizer.seed"]
    rec = Run(args.command, cfg, out, seed)
    try:
        code = COMMANDS[args.command](cfg, rec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    rec.finish()
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
