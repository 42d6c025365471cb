"""Replicated parameter cells, sweeps and Welch comparisons.

Seed hierarchy for a cell with master seed ``m``::

    landscape i       landscape_seed = derive_seed(m, TAG_LANDSCAPE, i)
    restart j of i    start_seed     = derive_seed(m, TAG_START, i, j)

Seeds do not depend on the policy, so cells that differ only in policy run
on identical landscapes from identical start genomes (paired comparisons).
They do not depend on K, C or N either; topology still differs per cell
because it is part of the landscape definition.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dynamics import ErrorMode, Policy, PolicyKind, run
from .landscape import Landscape, LandscapeSpec
from .rng import TAG_LANDSCAPE, TAG_START, derive_seed
from .stats import ComparisonResult, welch_t_test

log = logging.getLogger(__name__)

__all__ = [
    "CellConfig",
    "RunRecord",
    "CellResult",
    "SweepResult",
    "landscape_seed",
    "start_seed",
    "run_cell",
    "sweep",
    "compare_cells",
    "write_results_csv",
    "write_aggregate_csv",
    "read_results_csv",
    "cell_key_fields",
]


def landscape_seed(master_seed: int, landscape_index: int) -> int:
    return derive_seed(master_seed, TAG_LANDSCAPE, landscape_index)


def start_seed(master_seed: int, landscape_index: int, restart_index: int) -> int:
    return derive_seed(master_seed, TAG_START, landscape_index, restart_index)


@dataclass(frozen=True)
class CellConfig:
    n_per_species: tuple[int, ...]
    k: int
    c: int
    policy: Policy = field(default_factory=Policy)
    generations: int = 20_000
    landscapes: int = 10
    restarts_per_landscape: int = 10
    master_seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_per_species", tuple(int(n) for n in self.n_per_species))
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.landscapes < 1 or self.restarts_per_landscape < 1:
            raise ValueError("landscapes and restarts_per_landscape must be >= 1")
        # surfaces topology errors early
        self.landscape_spec(0)

    @property
    def s(self) -> int:
        return len(self.n_per_species) - 1

    @property
    def total_runs(self) -> int:
        return self.landscapes * self.restarts_per_landscape

    def landscape_spec(self, landscape_index: int) -> LandscapeSpec:
        return LandscapeSpec(landscape_seed(self.master_seed, landscape_index), self.n_per_species, self.k, self.c)

    def key(self) -> tuple:
        return (
            self.policy.kind.value,
            self.policy.error_rate,
            self.policy.error_mode.value,
            n_vector_str(self.n_per_species),
            self.k,
            self.c,
            self.s,
        )

    def to_dict(self) -> dict:
        return {
            "n_per_species": list(self.n_per_species),
            "k": self.k,
            "c": self.c,
            "s": self.s,
            "policy": self.policy.kind.value,
            "error_rate": self.policy.error_rate,
            "error_mode": self.policy.error_mode.value,
            "generations": self.generations,
            "landscapes": self.landscapes,
            "restarts_per_landscape": self.restarts_per_landscape,
            "master_seed": self.master_seed,
        }


cell_key_fields = ("policy", "error_rate", "error_mode", "n_vector", "K", "C", "S")


def n_vector_str(ns: Sequence[int]) -> str:
    return "-".join(str(n) for n in ns)


@dataclass(frozen=True)
class RunRecord:
    landscape_index: int
    restart_index: int
    landscape_seed: int
    start_seed: int
    final_species_fitness: tuple[float, ...]
    final_system_fitness: float


@dataclass
class CellResult:
    config: CellConfig | None
    records: list[RunRecord]
    key: tuple = ()

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: (r.landscape_index, r.restart_index))
        if not self.key and self.config is not None:
            self.key = self.config.key()

    @property
    def finals(self) -> np.ndarray:
        return np.array([r.final_system_fitness for r in self.records])

    @property
    def run_count(self) -> int:
        return len(self.records)

    @property
    def mean(self) -> float:
        return float(self.finals.mean())

    @property
    def std(self) -> float:
        """Sample standard deviation (ddof=1); 0 for a single run."""
        return float(self.finals.std(ddof=1)) if self.run_count > 1 else 0.0


@dataclass
class SweepResult:
    cells: list[CellResult]
    errors: list[tuple[CellConfig, str]] = field(default_factory=list)


def _landscape_task(config: CellConfig, landscape_index: int) -> list[RunRecord]:
    landscape = Landscape.from_spec(config.landscape_spec(landscape_index))
    out = []
    for j in range(config.restarts_per_landscape):
        seed = start_seed(config.master_seed, landscape_index, j)
        res = run(landscape, config.policy, seed, config.generations, trace_every=0)
        out.append(
            RunRecord(
                landscape_index,
                j,
                landscape.spec.landscape_seed,
                seed,
                res.final_species_fitness,
                res.final_system_fitness,
            )
        )
    return out


def _indexed_task(args):
    cell_index, config, landscape_index = args
    try:
        return cell_index, landscape_index, _landscape_task(config, landscape_index), None
    except Exception as exc:  # reported per cell
        return cell_index, landscape_index, None, f"{type(exc).__name__}: {exc}"


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def sweep(grid: Iterable[CellConfig], workers: int | None = None, progress=None) -> SweepResult:
    """Run every cell; a failing cell is reported in ``errors`` and skipped.

    Work units are (cell, landscape) pairs; assembly is keyed by index so the
    result does not depend on ``workers`` or completion order.
    """
    grid = list(grid)
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(ci, cfg, i) for ci, cfg in enumerate(grid) for i in range(cfg.landscapes)]
    records: dict[int, list[RunRecord]] = {ci: [] for ci in range(len(grid))}
    failures: dict[int, str] = {}

    if workers == 1 or len(tasks) <= 1:
        outputs = map(_indexed_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        outputs = pool.map(_indexed_task, tasks, chunksize=1)
    try:
        for done, (ci, _, recs, err) in enumerate(outputs, 1):
            if err is not None:
                failures.setdefault(ci, err)
            else:
                records[ci].extend(recs)
            if progress is not None:
                progress(done, len(tasks))
    finally:
        if pool is not None:
            pool.shutdown()

    result = SweepResult([])
    for ci, cfg in enumerate(grid):
        if ci in failures:
            log.error("cell %s failed: %s", cfg.key(), failures[ci])
            result.errors.append((cfg, failures[ci]))
        else:
            result.cells.append(CellResult(cfg, records[ci]))
    return result


def run_cell(config: CellConfig, workers: int | None = 1) -> CellResult:
    res = sweep([config], workers=workers)
    if res.errors:
        raise RuntimeError(res.errors[0][1])
    return res.cells[0]


def compare_cells(a: CellResult, b: CellResult, alpha: float = 0.05) -> ComparisonResult:
    return welch_t_test(a.finals, b.finals, alpha)


def _max_species(cells: Sequence[CellResult]) -> int:
    return max((len(r.final_species_fitness) for c in cells for r in c.records), default=0)


def write_results_csv(path, cells: Sequence[CellResult]) -> None:
    """Long format: one row per run. Floats are written with ``repr`` (exact round trip)."""
    width = _max_species(cells)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [*cell_key_fields, "landscape_seed", "start_seed",
             *(f"final_fitness_species_{s}" for s in range(width)), "final_system_fitness"]
        )
        for cell in cells:
            for r in cell.records:
                fits = [repr(f) for f in r.final_species_fitness]
                fits += [""] * (width - len(fits))
                w.writerow([*cell.key, r.landscape_seed, r.start_seed, *fits, repr(r.final_system_fitness)])


def write_aggregate_csv(path, cells: Sequence[CellResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*cell_key_fields, "mean", "stddev", "run_count"])
        for cell in cells:
            w.writerow([*cell.key, repr(cell.mean), repr(cell.std), cell.run_count])


def _parse_key(row: dict) -> tuple:
    return (
        PolicyKind.parse(row["policy"]).value,
        float(row["error_rate"]),
        ErrorMode(row["error_mode"]).value,
        row["n_vector"],
        int(row["K"]),
        int(row["C"]),
        int(row["S"]),
    )


def read_results_csv(path) -> list[CellResult]:
    """Rebuild per-cell samples from a results file (configs are not stored)."""
    groups: dict[tuple, list[RunRecord]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(cell_key_fields + ("final_system_fitness",)) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        species_cols = [f for f in reader.fieldnames if f.startswith("final_fitness_species_")]
        for idx, row in enumerate(reader):
            key = _parse_key(row)
            fits = tuple(float(row[col]) for col in species_cols if row[col] != "")
            recs = groups.setdefault(key, [])
            recs.append(
                RunRecord(0, len(recs), int(row["landscape_seed"]), int(row["start_seed"]),
                          fits, float(row["final_system_fitness"]))
            )
    return [CellResult(None, recs, key) for key, recs in groups.items()]
