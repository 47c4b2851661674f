"""
Run configuration: a TOML file with dotted sections, flattened to dotted keys.

Every key has a type, a default and a validity check; unknown keys are
rejected.  Values can also be overridden from the command line with
``--set section.key=value`` (the value is parsed as a TOML literal).

==========================  =========  ============  ==========================================
key                         type       default       constraint
==========================  =========  ============  ==========================================
grid.dim                    int        1             1 or 2
grid.n                      int        257           >= 8
problem.mu                  float      0.01          > 0
problem.m0                  float      0.4           in (0, 1)
problem.resource            str        "constant"    constant | sets | csv
problem.sets                list       []            intervals (1D) or rectangles (2D)
problem.indicator_mode      str        "cell"        cell | node
problem.resource_csv        str        ""            path to a field CSV
solver.tol                  float      1e-10         > 0
solver.max_newton           int        200           >= 1
solver.max_linesearch       int        40            >= 1
solver.fallback_gradient_flow bool     false
optimizer.restarts          int        5             >= 0
optimizer.seed              int        0             >= 0
optimizer.max_iter          int        400           >= 1
optimizer.max_rounds        int        20            >= 1
sweep.mu_min                float      1e-4          > 0
sweep.mu_max                float      1e-1          >= mu_min
sweep.points                int        12            >= 1
sweep.grid_factor           float      0.1           > 0
sweep.min_n                 int        129           >= 8
sweep.max_n                 int        4097          >= min_n
criterion.j                 str        "identity"    identity | quadratic | log1p
spectral.K                  int        10            >= 1
spectral.K_max              int        64            >= 1
verify.seed                 int        0             >= 0
output.dir                  str        "runs"
==========================  =========  ============  ==========================================
"""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .state import CRITERIA

__all__ = ["ConfigError", "SCHEMA", "load_config", "validate", "parse_override"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _pos(v):
    return v > 0


def _in_unit(v):
    return 0.0 < v < 1.0


def _atleast(k):
    return lambda v: v >= k


SCHEMA: dict[str, tuple[type, object, object, str]] = {
    "grid.dim": (int, 1, lambda v: v in (1, 2), "dim must be 1 or 2"),
    "grid.n": (int, 257, _atleast(8), "n must be an integer >= 8"),
    "problem.mu": (float, 0.01, _pos, "mu must be positive"),
    "problem.m0": (float, 0.4, _in_unit, "m0 must lie in (0,1)"),
    "problem.resource": (str, "constant", lambda v: v in ("constant", "sets", "csv"),
                         "resource must be one of constant, sets, csv"),
    "problem.sets": (list, [], None, "sets must be a list"),
    "problem.indicator_mode": (str, "cell", lambda v: v in ("cell", "node"),
                               "indicator_mode must be cell or node"),
    "problem.resource_csv": (str, "", None, ""),
    "solver.tol": (float, 1e-10, _pos, "tol must be positive"),
    "solver.max_newton": (int, 200, _atleast(1), "max_newton must be >= 1"),
    "solver.max_linesearch": (int, 40, _atleast(1), "max_linesearch must be >= 1"),
    "solver.fallback_gradient_flow": (bool, False, None, ""),
    "optimizer.restarts": (int, 5, _atleast(0), "restarts must be >= 0"),
    "optimizer.seed": (int, 0, _atleast(0), "seed must be >= 0"),
    "optimizer.max_iter": (int, 400, _atleast(1), "max_iter must be >= 1"),
    "optimizer.max_rounds": (int, 20, _atleast(1), "max_rounds must be >= 1"),
    "sweep.mu_min": (float, 1e-4, _pos, "mu_min must be positive"),
    "sweep.mu_max": (float, 1e-1, _pos, "mu_max must be positive"),
    "sweep.points": (int, 12, _atleast(1), "points must be >= 1"),
    "sweep.grid_factor": (float, 0.1, _pos, "grid_factor must be positive"),
    "sweep.min_n": (int, 129, _atleast(8), "min_n must be >= 8"),
    "sweep.max_n": (int, 4097, _atleast(8), "max_n must be >= 8"),
    "criterion.j": (str, "identity", lambda v: v in CRITERIA,
                    f"j must be one of {', '.join(CRITERIA)}"),
    "spectral.K": (int, 10, _atleast(1), "K must be >= 1"),
    "spectral.K_max": (int, 64, _atleast(1), "K_max must be >= 1"),
    "verify.seed": (int, 0, _atleast(0), "seed must be >= 0"),
    "output.dir": (str, "runs", None, ""),
}


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value):
    typ = SCHEMA[key][0]
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool):
        raise ConfigError(f"{key}: expected int, got bool")
    if not isinstance(value, typ):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def validate(raw: dict) -> dict:
    """Fill defaults, check types and ranges, return the flat config."""
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration key")
    cfg = {k: spec[1] for k, spec in SCHEMA.items()}
    for key, value in flat.items():
        cfg[key] = _coerce(key, value)
    for key, (_, _, check, msg) in SCHEMA.items():
        if check is not None and not check(cfg[key]):
            raise ConfigError(f"{key}: {msg} (got {cfg[key]!r})")
    if cfg["sweep.mu_max"] < cfg["sweep.mu_min"]:
        raise ConfigError("sweep.mu_max: mu_max must be >= mu_min")
    if cfg["sweep.max_n"] < cfg["sweep.min_n"]:
        raise ConfigError("sweep.max_n: max_n must be >= min_n")
    if cfg["problem.resource"] == "sets" and not cfg["problem.sets"]:
        raise ConfigError("problem.sets: resource = 'sets' needs a non-empty list")
    if cfg["problem.resource"] == "csv" and not cfg["problem.resource_csv"]:
        raise ConfigError("problem.resource_csv: resource = 'csv' needs a path")
    return cfg


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"{text}: override must look like section.key=value")
    key, value = text.split("=", 1)
    key = key.strip()
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return key, parsed


def _nest(flat: dict) -> dict:
    tree: dict = {}
    for key, value in flat.items():
        node = tree
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return tree


def load_config(path: str | Path | None = None, overrides=()) -> dict:
    """Read and validate a configuration file; ``None`` gives the defaults."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        try:
            raw = tomllib.loads(p.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid TOML: {exc}") from None
    flat = _flatten(raw)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        flat[key] = value
    return validate(_nest(flat))
