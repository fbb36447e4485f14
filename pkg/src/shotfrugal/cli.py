"""Command-line entry point: ``shotfrugal {generate,protocol,bench,landscape,report}``.

Exit codes: 0 ok, 2 usage or schema error, 3 infeasible shot budget,
4 degenerate instance, 5 I/O failure. ``SHOTFRUGAL_WORKERS`` sets the size
of the process pool used by ``bench`` and ``landscape``.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from ._utils import derive_seed
from .dfo import OPTIMIZERS, allocate_budget
from .exceptions import (CapacityError, CSVParseError, DegenerateError, GridSchemaError,
                         InfeasibleBudgetError, ManifestError, MissingEntryError)
from .landscape import (DEFAULT_RESOLUTION, DEFAULT_WIDTH, centered_bounds, compute_landscape, coordinate_names,
                        export_grid, export_grid_csv)
from .problems import generate_maxcut_instance, generate_po_instance, load_instance, rescale_instance, save_instance
from .protocol import (BACKENDS, SAMPLED, ProtocolConfig, family_of, initial_parameters, optimize_reference,
                       run_protocol)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_DEGENERATE = 4
EXIT_IO = 5
WORKERS_ENV = "SHOTFRUGAL_WORKERS"

RUNS_FILE = "runs.jsonl"
REPORT_FILE = "report.csv"
CONTOUR_FILE = "contour.csv"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ManifestError(f"{WORKERS_ENV}={raw!r} is not an integer") from None


def _fmt(x) -> str:
    """Locale-independent number formatting for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _dump(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# -- generate -------------------------------------------------------------------------

def cmd_generate(kind: str, n: int, count: int, seed: int, out_dir, weighted: bool = True,
                 K: Optional[int] = None) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        s = derive_seed(seed, kind, n, i)
        inst = generate_maxcut_instance(n, s, weighted=weighted) if kind == "maxcut" else generate_po_instance(n, s, K=K)
        path = out / f"{kind}_{n}_{seed}_{i}.json"
        save_instance(inst, path)
        paths.append(path)
    return paths


# -- protocol -------------------------------------------------------------------------

def cmd_protocol(instance_path, p: int, config: ProtocolConfig, out=None) -> dict:
    inst = load_instance(instance_path)
    record = run_protocol(inst, p, config).to_dict()
    record["instance"] = str(instance_path)
    _dump(record, out)
    return record


# -- landscape ------------------------------------------------------------------------

def cmd_landscape(instance_path, p: int, resolution: int, width: float, out_prefix, center=None,
                  overlay=None, workers: int = 1):
    """Writes ``<prefix>.npz`` and ``<prefix>.csv`` (plus ``<prefix>_overlay.csv``)."""
    inst, _ = rescale_instance(load_instance(instance_path))
    if center is None:
        center = initial_parameters(family_of(inst), p).to_vector()
    center = np.asarray(center, dtype=float)
    if center.size != 2 * p:
        raise ValueError(f"--center needs {2 * p} values for p={p}")
    grid = compute_landscape(inst, p, bounds=centered_bounds(center, width), resolution=resolution,
                             center=center, workers=workers)
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    export_grid(grid, prefix.with_suffix(".npz"))
    rows = export_grid_csv(grid, prefix.with_suffix(".csv"))
    if overlay is not None:
        write_overlay(overlay, prefix.parent / f"{prefix.name}_overlay.csv", grid.dims)
    return grid, rows


def write_overlay(trace_path, out_path, dims: int) -> int:
    """Optimizer queries from a protocol record, one ordered row per evaluation."""
    record = json.loads(Path(trace_path).read_text())
    rows = record["trace"]["records"]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["order"] + coordinate_names(dims) + ["value", "shots"])
        for k, r in enumerate(rows):
            if len(r["params"]) != dims:
                raise ValueError(f"trace has {len(r['params'])}-dimensional points, grid has {dims}")
            writer.writerow([k] + [_fmt(v) for v in r["params"]] + [_fmt(r["value"]), r["shots"]])
    return len(rows)


# -- bench ------------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchCell:
    p: int
    optimizer: str
    rhobeg: Optional[float]
    extra_evals: int
    total_shots: int

    @property
    def cell_id(self) -> str:
        rb = "default" if self.rhobeg is None else _fmt(self.rhobeg)
        return (f"p{self.p}-{self.optimizer}-rb{rb}-x{self.extra_evals:04d}"
                f"-s{self.total_shots:08d}")


@dataclass(frozen=True)
class Manifest:
    instances: List[str]
    cells: List[BenchCell]
    repetitions: int
    master_seed: int
    backend: str


def _need(obj, key, path):
    if key not in obj:
        raise ManifestError(f"{path}.{key}: required field missing")
    return obj[key]


def _int_list(value, path, minimum):
    if not isinstance(value, list) or not value:
        raise ManifestError(f"{path}: expected a non-empty list")
    for k, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise ManifestError(f"{path}[{k}]: expected an integer >= {minimum}, got {v!r}")
    return value


def load_manifest(path) -> Manifest:
    """Parse and validate a bench manifest; errors name the offending field."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest: expected a JSON object")
    inst_block = _need(raw, "instances", "manifest")
    if isinstance(inst_block, list):
        for k, v in enumerate(inst_block):
            if not isinstance(v, str):
                raise ManifestError(f"manifest.instances[{k}]: expected a path string")
        instances = [str((path.parent / v).resolve()) if not os.path.isabs(v) else v for v in inst_block]
    elif isinstance(inst_block, dict):
        directory = Path(_need(inst_block, "dir", "manifest.instances"))
        directory = directory if directory.is_absolute() else path.parent / directory
        instances = sorted(str(q.resolve()) for q in directory.glob(inst_block.get("pattern", "*.json")))
    else:
        raise ManifestError("manifest.instances: expected a list of paths or {dir, pattern}")
    if not instances:
        raise ManifestError("manifest.instances: no instance files matched")

    ps = _int_list(_need(raw, "p", "manifest"), "manifest.p", 1)
    optimizers = raw.get("optimizer", ["linear_trust_region"])
    if not isinstance(optimizers, list) or not optimizers:
        raise ManifestError("manifest.optimizer: expected a non-empty list")
    for k, name in enumerate(optimizers):
        if name not in OPTIMIZERS:
            raise ManifestError(f"manifest.optimizer[{k}]: unknown optimizer {name!r}")
    rhobegs = raw.get("rhobeg", [None])
    if not isinstance(rhobegs, list) or not rhobegs:
        raise ManifestError("manifest.rhobeg: expected a non-empty list")
    for k, v in enumerate(rhobegs):
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0):
            raise ManifestError(f"manifest.rhobeg[{k}]: expected a positive number or null")
    extras = _int_list(_need(raw, "extra_evals", "manifest"), "manifest.extra_evals", 0)
    shots = _int_list(_need(raw, "total_shots", "manifest"), "manifest.total_shots", 1)
    reps = raw.get("repetitions", 1)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ManifestError("manifest.repetitions: expected an integer >= 1")
    master = raw.get("master_seed", 0)
    if isinstance(master, bool) or not isinstance(master, int):
        raise ManifestError("manifest.master_seed: expected an integer")
    backend = raw.get("backend", SAMPLED)
    if backend not in BACKENDS:
        raise ManifestError(f"manifest.backend: expected one of {list(BACKENDS)}")
    cells = [BenchCell(p, o, None if r is None else float(r), x, s)
             for p, o, r, x, s in itertools.product(ps, optimizers, rhobegs, extras, shots)]
    cells.sort(key=lambda c: c.cell_id)
    for cell in cells:
        try:
            allocate_budget(cell.total_shots, cell.p, cell.extra_evals)
        except InfeasibleBudgetError as exc:
            raise ManifestError(f"manifest: cell {cell.cell_id}: {exc}") from exc
    return Manifest(instances, cells, reps, master, backend)


def _reference_task(args):
    path, p = args
    inst, _ = rescale_instance(load_instance(path))
    params, ar_opt = optimize_reference(inst, p)
    return params.to_vector().tolist(), ar_opt


def _run_task(args):
    path, cell, rep, seed, backend, reference = args
    inst = load_instance(path)
    config = ProtocolConfig(total_shots=cell.total_shots, extra_evals=cell.extra_evals, rhobeg=cell.rhobeg,
                            optimizer=cell.optimizer, seed=seed, backend=backend)
    start = time.perf_counter()
    res = run_protocol(inst, cell.p, config, reference=(None, reference))
    return {
        "cell_id": cell.cell_id, "instance": path, "rep": rep, "seed": seed,
        "p": cell.p, "optimizer": cell.optimizer, "rhobeg": cell.rhobeg, "extra_evals": cell.extra_evals,
        "total_shots": cell.total_shots, "shots_per_eval": res.plan.shots_per_eval,
        "ar_ini": res.ar_ini, "ar_final": res.ar_final, "ar_opt": res.ar_opt,
        "relative_improvement": res.relative_improvement, "degenerate": res.degenerate,
        "shots_used": res.trace.shots_used, "n_evals": res.trace.n_evals,
        "wall_time": time.perf_counter() - start,
    }


def _map(fn, tasks, workers):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _read_runs(path: Path):
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            break  # torn final line of an interrupted sweep
    return out


REPORT_FIELDS = ["config_id", "p", "optimizer", "rhobeg", "extra_evals", "total_shots", "shots_per_eval",
                 "instance_count", "skipped", "mean_relative_improvement", "standard_error",
                 "mean_shots_used", "wall_time"]


def aggregate_runs(runs, timing: bool = True):
    """BenchReport rows, one per cell, sorted by cell id.

    Degenerate runs are counted in ``skipped`` and left out of the mean; the
    standard error is the sample std over the remaining runs divided by
    the square root of their number.
    """
    by_cell = {}
    for r in runs:
        by_cell.setdefault(r["cell_id"], []).append(r)
    rows = []
    for cell_id in sorted(by_cell):
        group = by_cell[cell_id]
        kept = np.array([r["relative_improvement"] for r in group if not r["degenerate"]], dtype=float)
        first = group[0]
        mean = float(kept.mean()) if kept.size else None
        se = float(kept.std(ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else None
        rows.append({
            "config_id": cell_id, "p": first["p"], "optimizer": first["optimizer"], "rhobeg": first["rhobeg"],
            "extra_evals": first["extra_evals"], "total_shots": first["total_shots"],
            "shots_per_eval": first["shots_per_eval"], "instance_count": len(group),
            "skipped": len(group) - int(kept.size), "mean_relative_improvement": mean, "standard_error": se,
            "mean_shots_used": float(np.mean([r["shots_used"] for r in group])),
            "wall_time": float(sum(r["wall_time"] for r in group)) if timing else 0.0,
        })
    return rows


def write_report(rows, out_dir: Path) -> None:
    with open(out_dir / REPORT_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for row in rows:
            writer.writerow([row[f] if isinstance(row[f], str) else _fmt(row[f]) for f in REPORT_FIELDS])
    with open(out_dir / CONTOUR_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "optimizer", "rhobeg", "extra_evals", "shots_per_eval", "total_shots",
                         "mean_relative_improvement"])
        for row in sorted(rows, key=lambda r: (r["p"], r["optimizer"], r["rhobeg"] or 0.0,
                                               r["extra_evals"], r["shots_per_eval"])):
            writer.writerow([_fmt(row["p"]), row["optimizer"], _fmt(row["rhobeg"]), _fmt(row["extra_evals"]),
                             _fmt(row["shots_per_eval"]), _fmt(row["total_shots"]),
                             _fmt(row["mean_relative_improvement"])])


def cmd_bench(manifest_path, out_dir, workers: int = 1, timing: bool = True):
    """Run the full sweep, streaming per-run records to ``runs.jsonl``.

    Cells whose records are already complete in ``runs.jsonl`` are skipped,
    so an interrupted sweep resumes where it stopped.
    """
    manifest = load_manifest(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs_path = out / RUNS_FILE
    per_cell = len(manifest.instances) * manifest.repetitions
    existing = {}
    for r in _read_runs(runs_path):
        existing.setdefault(r["cell_id"], []).append(r)
    done = {cid: rs for cid, rs in existing.items() if len(rs) == per_cell}
    # rewrite without partial cells so every cell on disk is whole
    with open(runs_path, "w") as fh:
        for cell in manifest.cells:
            for r in done.get(cell.cell_id, []):
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    pending = [c for c in manifest.cells if c.cell_id not in done]
    references = {}
    for p in sorted({c.p for c in pending}):
        vals = _map(_reference_task, [(path, p) for path in manifest.instances], workers)
        for path, (_, ar_opt) in zip(manifest.instances, vals):
            references[(path, p)] = ar_opt

    for cell in pending:
        tasks = [(path, cell, rep, derive_seed(manifest.master_seed, cell.cell_id, path_idx, rep),
                  manifest.backend, references[(path, cell.p)])
                 for path_idx, path in enumerate(manifest.instances) for rep in range(manifest.repetitions)]
        records = _map(_run_task, tasks, workers)
        with open(runs_path, "a") as fh:
            for r in records:
                if not timing:
                    r["wall_time"] = 0.0
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    runs = _read_runs(runs_path)
    order = {c.cell_id: k for k, c in enumerate(manifest.cells)}
    runs = [r for r in runs if r["cell_id"] in order]
    rows = aggregate_runs(runs, timing=timing)
    write_report(rows, out)
    return rows


def cmd_report(runs_path, out_dir, timing: bool = True):
    rows = aggregate_runs(_read_runs(Path(runs_path)), timing=timing)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(rows, out)
    return rows


# -- argument parsing -----------------------------------------------------------------

def _center(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shotfrugal", description="Shot-budgeted QAOA parameter setting.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instance files")
    g.add_argument("--kind", choices=["maxcut", "po"], required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--K", type=int, default=None, help="budget for po instances (default n//2)")
    g.add_argument("--unweighted", action="store_true", help="unit edge weights for maxcut")
    g.add_argument("--out", required=True, help="output directory")

    pr = sub.add_parser("protocol", help="run the parameter-setting protocol on one instance")
    pr.add_argument("instance")
    pr.add_argument("--p", type=int, required=True)
    pr.add_argument("--shots", type=int, default=10_000, help="total shot budget")
    pr.add_argument("--extra-evals", type=int, default=2)
    pr.add_argument("--rhobeg", type=float, default=None)
    pr.add_argument("--optimizer", choices=sorted(OPTIMIZERS), default="linear_trust_region")
    pr.add_argument("--backend", choices=list(BACKENDS), default=SAMPLED)
    pr.add_argument("--trotter-reps", type=int, default=1)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", default=None, help="record path (default stdout)")

    b = sub.add_parser("bench", help="run a benchmark sweep from a JSON manifest")
    b.add_argument("manifest")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--no-timing", action="store_true", help="write zero wall times for byte-stable output")

    la = sub.add_parser("landscape", help="compute and export an energy landscape")
    la.add_argument("instance")
    la.add_argument("--p", type=int, default=1)
    la.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    la.add_argument("--width", type=float, default=DEFAULT_WIDTH, help="box width per dimension (radians)")
    la.add_argument("--center", type=_center, default=None, help="box center gamma..,beta.. (default: fixed params)")
    la.add_argument("--overlay", default=None, help="protocol record whose queries are exported in order")
    la.add_argument("--out", required=True, help="output prefix; writes .npz and .csv")

    r = sub.add_parser("report", help="aggregate per-run records into a report")
    r.add_argument("runs", help="runs.jsonl from a bench sweep")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--no-timing", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            paths = cmd_generate(args.kind, args.n, args.count, args.seed, args.out,
                                 weighted=not args.unweighted, K=args.K)
            print(f"wrote {len(paths)} instances to {args.out}")
        elif args.command == "protocol":
            config = ProtocolConfig(total_shots=args.shots, extra_evals=args.extra_evals, rhobeg=args.rhobeg,
                                    optimizer=args.optimizer, seed=args.seed, backend=args.backend,
                                    trotter_reps=args.trotter_reps)
            record = cmd_protocol(args.instance, args.p, config, args.out)
            if record["degenerate"]:
                print("degenerate instance: ar_opt equals ar_ini", file=sys.stderr)
                return EXIT_DEGENERATE
        elif args.command == "bench":
            rows = cmd_bench(args.manifest, args.out, workers=worker_count(), timing=not args.no_timing)
            print(f"{len(rows)} cells written to {Path(args.out) / REPORT_FILE}")
        elif args.command == "landscape":
            _, rows = cmd_landscape(args.instance, args.p, args.resolution, args.width, args.out,
                                    center=args.center, overlay=args.overlay, workers=worker_count())
            print(f"{rows} grid rows written to {Path(args.out).with_suffix('.csv')}")
        elif args.command == "report":
            rows = cmd_report(args.runs, args.out, timing=not args.no_timing)
            print(f"{len(rows)} cells written to {Path(args.out) / REPORT_FILE}")
    except InfeasibleBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DegenerateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, GridSchemaError, CSVParseError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ManifestError, MissingEntryError, CapacityError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
