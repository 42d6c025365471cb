"""Command-line front end: ``nkcs trace | sweep | compare | selfcheck``.

Exit codes: 0 success, 1 usage or configuration error, 2 execution failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import PRESETS, ConfigError, expand_grid, load_file, load_preset, resolve
from .dynamics import run, write_trajectory_csv
from .experiment import (
    cell_key_fields,
    compare_cells,
    default_workers,
    read_results_csv,
    start_seed,
    sweep,
    write_aggregate_csv,
    write_results_csv,
)
from .landscape import Landscape

log = logging.getLogger("nkcs")

OUT_DIR_ENV = "NKCS_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="YAML config file (a manifest.json also works)")
    src.add_argument("--preset", choices=PRESETS, help="built-in configuration")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./nkcs-out)")
    p.add_argument("--trace-every", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--n", type=_int_list, help="N for every species, or a per-species vector like 20,20,60")
    p.add_argument("--s", type=int, help="number of partner species (S)")
    p.add_argument("--k", type=_int_list, help="K value(s), comma separated")
    p.add_argument("--c", type=_int_list, help="C value(s), comma separated")
    p.add_argument("--policy", type=_str_list, help="coev, com, glob (comma separated)")
    p.add_argument("--error-rate", type=_float_list, help="communalism vote error rate(s)")
    p.add_argument("--error-mode", choices=("collective", "per_voter"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nkcs", description="NKCS landscapes under coevolution, communalism and global control.")
    parser.add_argument("--version", action="version", version=f"nkcs {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("trace", help="fitness trajectory of single runs")
    _add_run_options(p)
    p.add_argument("--dump-linkage", action="store_true", help="also write each landscape's linkage map as JSON")

    p = sub.add_parser("sweep", help="replicated runs over a parameter grid")
    _add_run_options(p)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")
    p.add_argument("--landscapes", type=int)
    p.add_argument("--restarts", type=int, help="restarts per landscape")

    p = sub.add_parser("compare", help="Welch t-tests between matching cells of two results files")
    p.add_argument("results_a")
    p.add_argument("results_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--a", dest="select_a", default="", help="row filter for A, e.g. policy=coevolution,error_rate=0")
    p.add_argument("--b", dest="select_b", default="", help="row filter for B")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("selfcheck", help="oracle and property checks")
    p.add_argument("--full", action="store_true", help="ten times larger samples")
    return parser


def _overrides(args) -> dict:
    grid = {
        "k": args.k,
        "c": args.c,
        "policy": args.policy,
        "error_rate": args.error_rate,
        "error_mode": args.error_mode,
        "s": args.s,
    }
    if args.n is not None:
        grid["n"] = [args.n[0]] if len(args.n) == 1 else [args.n]
    over = {
        "master_seed": args.seed,
        "generations": args.generations,
        "trace_every": args.trace_every,
        "landscapes": getattr(args, "landscapes", None),
        "restarts_per_landscape": getattr(args, "restarts", None),
        "grid": grid,
    }
    return over


def _resolve(args) -> dict:
    if args.preset:
        data = load_preset(args.preset)
    elif args.config:
        data = load_file(args.config)
    else:
        data = {}
    return resolve(data, _overrides(args))


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "nkcs-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: dict, outputs: list[str], started: float, **extra) -> Path:
    manifest = {
        "tool": "nkcs",
        "version": __version__,
        "command": command,
        "config": cfg,
        "master_seed": cfg["master_seed"],
        "outputs": outputs,
        "duration_seconds": round(time.time() - started, 3),
        **extra,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _label(cell) -> str:
    return f"{cell.policy.label}_n{'-'.join(map(str, cell.n_per_species))}_k{cell.k}_c{cell.c}".replace(":", "-").replace("[", "-").replace("]", "")


def cmd_trace(args) -> int:
    started = time.time()
    cfg = _resolve(args)
    cells, invalid = expand_grid(cfg)
    if invalid:
        for desc, err in invalid:
            print(f"invalid cell {desc}: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args)
    outputs, runs = [], []
    for cell in cells:
        name = "trace" if len(cells) == 1 else f"trace_{_label(cell)}"
        land = Landscape.from_spec(cell.landscape_spec(0))
        seed = start_seed(cfg["master_seed"], 0, 0)
        res = run(land, cell.policy, seed, cell.generations, cfg["trace_every"])
        path = out / f"{name}.csv"
        write_trajectory_csv(path, res.trajectory)
        outputs.append(str(path))
        if args.dump_linkage:
            lpath = out / f"{name}_linkage.json"
            lpath.write_text(land.linkage.to_json(land.spec))
            outputs.append(str(lpath))
        runs.append({
            "file": str(path),
            "cell": cell.to_dict(),
            "landscape_seed": land.spec.landscape_seed,
            "start_seed": seed,
            "last_accept_generation": res.last_accept_generation,
            "accepted_changes": res.accepted,
            "final_system_fitness": res.final_system_fitness,
        })
        print(f"{path}: final system fitness {res.final_system_fitness:.6f}, last change at generation {res.last_accept_generation}")
    _write_manifest(out, "trace", cfg, outputs, started, runs=runs)
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = time.time()
    cfg = _resolve(args)
    cells, invalid = expand_grid(cfg)
    out = _out_dir(args)
    workers = args.workers or default_workers()
    total = sum(c.landscapes for c in cells)
    log.info("sweep: %d cells, %d runs, %d workers", len(cells), sum(c.total_runs for c in cells), workers)

    def progress(done, n):
        if done == n or done % max(1, n // 20) == 0:
            log.info("  %d/%d landscape batches done", done, n)

    result = sweep(cells, workers=workers, progress=progress if total > 1 else None)
    results_path, agg_path = out / "results.csv", out / "aggregate.csv"
    write_results_csv(results_path, result.cells)
    write_aggregate_csv(agg_path, result.cells)
    failed = [{"cell": d, "error": e} for d, e in invalid]
    failed += [{"cell": c.to_dict(), "error": e} for c, e in result.errors]
    _write_manifest(out, "sweep", cfg, [str(results_path), str(agg_path)], started, workers=workers, failed_cells=failed)
    for cell in result.cells:
        print(" ".join(f"{f}={v}" for f, v in zip(cell_key_fields, cell.key)), f"mean={cell.mean:.6f} sd={cell.std:.6f} runs={cell.run_count}")
    for f in failed:
        print(f"FAILED {f['cell']}: {f['error']}", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def _parse_selector(text: str) -> dict:
    sel = {}
    for part in _str_list(text):
        if "=" not in part:
            raise ConfigError(f"selector {part!r} must look like field=value")
        field, value = (x.strip() for x in part.split("=", 1))
        if field not in cell_key_fields:
            raise ConfigError(f"unknown selector field {field!r}; use one of {', '.join(cell_key_fields)}")
        sel[field] = value
    return sel


def _matches(key: tuple, sel: dict) -> bool:
    from .dynamics import PolicyKind

    row = dict(zip(cell_key_fields, key))
    for field, want in sel.items():
        have = row[field]
        if field == "policy":
            ok = have == PolicyKind.parse(want).value
        elif field == "error_rate":
            ok = float(have) == float(want)
        elif field in ("K", "C", "S"):
            ok = int(have) == int(want)
        else:
            ok = str(have) == want
        if not ok:
            return False
    return True


def _index(cells, sel: dict, label: str, topology_only: bool) -> dict:
    idx = {}
    for cell in cells:
        if not _matches(cell.key, sel):
            continue
        key = cell.key[3:] if topology_only else cell.key
        if key in idx:
            raise ConfigError(f"{label}: several cells share {dict(zip(cell_key_fields[3:], key))}; narrow the selector")
        idx[key] = cell
    return idx


def cmd_compare(args) -> int:
    """Without selectors cells pair on the full key; with any selector they
    pair on topology (n_vector, K, C, S) among the selected rows."""
    sel_a, sel_b = _parse_selector(args.select_a), _parse_selector(args.select_b)
    try:
        cells_a = read_results_csv(args.results_a)
        cells_b = read_results_csv(args.results_b)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read results: {exc}") from None
    topo = bool(sel_a or sel_b)
    idx_a = _index(cells_a, sel_a, "A", topo)
    idx_b = _index(cells_b, sel_b, "B", topo)
    only_a, only_b = sorted(set(idx_a) - set(idx_b), key=str), sorted(set(idx_b) - set(idx_a), key=str)
    if only_a or only_b or not idx_a:
        lines = [f"  only in A: {k}" for k in only_a] + [f"  only in B: {k}" for k in only_b]
        raise ConfigError("cell keys do not match:\n" + ("\n".join(lines) or "  no cells selected"))
    fields = cell_key_fields[3:] if topo else cell_key_fields
    report = []
    for key in sorted(idx_a, key=str):
        a, b = idx_a[key], idx_b[key]
        r = compare_cells(a, b, args.alpha)
        report.append({
            **dict(zip(fields, key)),
            "a": dict(zip(cell_key_fields[:3], a.key[:3])),
            "b": dict(zip(cell_key_fields[:3], b.key[:3])),
            "mean_a": r.mean_a,
            "mean_b": r.mean_b,
            "n_a": r.n_a,
            "n_b": r.n_b,
            "t": r.t,
            "df": r.df,
            "p": r.p,
            "verdict": r.verdict,
        })
    doc = json.dumps({"alpha": args.alpha, "test": "welch_two_tailed", "comparisons": report}, indent=2, default=_json_num)
    if args.out:
        Path(args.out).write_text(doc + "\n")
    else:
        print(doc)
    return EXIT_OK


def _json_num(x):
    return float(x)


def cmd_selfcheck(args) -> int:
    from .oracle import selfcheck

    results = selfcheck(quick=not args.full)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {"trace": cmd_trace, "sweep": cmd_sweep, "compare": cmd_compare, "selfcheck": cmd_selfcheck}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"nkcs {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as an execution failure
        log.exception("execution failed")
        print(f"nkcs {args.command}: execution failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
