"""YAML run/sweep configuration, presets and grid expansion.

Precedence: built-in defaults < config file (or preset) < command-line
overrides. A manifest written by the CLI is itself a valid config file.

Layout::

    master_seed: 1
    generations: 20000
    landscapes: 10
    restarts_per_landscape: 10
    trace_every: 100
    grid:
      n: [20, 100]          # ints expand to (n,)*(s+1); nested lists are per-species vectors
      s: 2
      k: [0, 1, 2]
      c: [1, 3]
      policy: [coev, com, glob]
      error_rate: [0.0, 0.1]  # non-zero rates only combine with communalism
      error_mode: collective  # or per_voter
"""

from __future__ import annotations

import copy
import itertools
from importlib import resources
from pathlib import Path

import yaml

from .dynamics import ErrorMode, Policy, PolicyKind
from .experiment import CellConfig

PRESETS = ("paper-fig2", "paper-fig3", "paper-fig4", "paper-fig5")

DEFAULTS = {
    "master_seed": 1,
    "generations": 20000,
    "landscapes": 10,
    "restarts_per_landscape": 10,
    "trace_every": 100,
    "grid": {
        "n": [20],
        "s": 2,
        "k": [0],
        "c": [1],
        "policy": ["coev"],
        "error_rate": [0.0],
        "error_mode": "collective",
    },
}
_GRID_LIST_KEYS = ("n", "k", "c", "policy", "error_rate")


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in base:
            raise ConfigError(f"unknown config field '{where}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config field '{where}{key}' must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("nkcs.presets").joinpath(f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def load_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if "tool" in data and "config" in data:  # a run manifest
        data = data["config"]
    return data


def resolve(file_data: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, file contents and overrides, then validate scalar fields."""
    cfg = _merge(DEFAULTS, file_data or {})
    grid_over = dict((overrides or {}).get("grid", {}))
    top_over = {k: v for k, v in (overrides or {}).items() if k != "grid" and v is not None}
    cfg = _merge(cfg, top_over)
    cfg["grid"] = _merge(cfg["grid"], {k: v for k, v in grid_over.items() if v is not None}, "grid.")

    for key, lo in (("master_seed", 0), ("generations", 0), ("landscapes", 1),
                    ("restarts_per_landscape", 1), ("trace_every", 0)):
        val = cfg[key]
        if not isinstance(val, int) or isinstance(val, bool) or val < lo:
            raise ConfigError(f"config field '{key}' must be an integer >= {lo}, got {val!r}")
    if cfg["master_seed"] >= 2**64:
        raise ConfigError("config field 'master_seed' must fit in 64 bits")
    grid = cfg["grid"]
    for key in _GRID_LIST_KEYS:
        if not isinstance(grid[key], list):
            grid[key] = [grid[key]]
        if not grid[key]:
            raise ConfigError(f"config field 'grid.{key}' must not be empty")
    if not isinstance(grid["s"], int) or grid["s"] < 1:
        raise ConfigError(f"config field 'grid.s' must be an integer >= 1, got {grid['s']!r}")
    try:
        ErrorMode(grid["error_mode"])
    except ValueError:
        raise ConfigError(f"config field 'grid.error_mode' must be collective or per_voter, got {grid['error_mode']!r}") from None
    for p in grid["policy"]:
        try:
            PolicyKind.parse(p)
        except ValueError as exc:
            raise ConfigError(f"config field 'grid.policy': {exc}") from None
    for r in grid["error_rate"]:
        if not isinstance(r, (int, float)) or not 0 <= r <= 1:
            raise ConfigError(f"config field 'grid.error_rate' values must lie in [0, 1], got {r!r}")
    for key in ("k", "c"):
        for v in grid[key]:
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"config field 'grid.{key}' values must be non-negative integers, got {v!r}")
    return cfg


def _n_vectors(grid: dict) -> list[tuple[int, ...]]:
    out = []
    for n in grid["n"]:
        if isinstance(n, int) and not isinstance(n, bool):
            out.append((n,) * (grid["s"] + 1))
        elif isinstance(n, list) and all(isinstance(x, int) for x in n):
            out.append(tuple(n))
        else:
            raise ConfigError(f"config field 'grid.n' entries must be integers or integer lists, got {n!r}")
    return out


def expand_grid(cfg: dict) -> tuple[list[CellConfig], list[tuple[dict, str]]]:
    """Cartesian product of the grid axes.

    Returns valid cells and ``(cell description, error)`` pairs for cells that
    violate topology bounds. Error rates other than 0 are only paired with
    communalism.
    """
    grid = cfg["grid"]
    cells, invalid, seen = [], [], set()
    for n, k, c, pol, rate in itertools.product(_n_vectors(grid), grid["k"], grid["c"], grid["policy"], grid["error_rate"]):
        kind = PolicyKind.parse(pol)
        if kind is not PolicyKind.COMMUNALISM and rate != 0:
            continue
        desc = {"n_per_species": list(n), "k": k, "c": c, "policy": kind.value, "error_rate": float(rate)}
        try:
            policy = Policy(kind, float(rate), ErrorMode(grid["error_mode"]))
            cell = CellConfig(
                n, k, c, policy,
                generations=cfg["generations"],
                landscapes=cfg["landscapes"],
                restarts_per_landscape=cfg["restarts_per_landscape"],
                master_seed=cfg["master_seed"],
            )
        except ValueError as exc:
            invalid.append((desc, str(exc)))
            continue
        if cell.key() not in seen:
            seen.add(cell.key())
            cells.append(cell)
    return cells, invalid
