"""Benchmark driver: run both solvers over a grid of LASSO instances.

Artifacts written to ``--out``::

    report.json        rows, per-size aggregates, run spec (deterministic)
    table.txt          iteration table (deterministic)
    metadata.json      timestamps, wall times, library versions
    traces/*.csv       per-iteration residuals (with --trace)
    timing/*.csv       per-iteration elapsed milliseconds (with --trace)
    diagnostics.json   convergence identity checks (with --diagnostics)
    instances/*.lasso  generated instances (with --save-instances)

Everything except ``metadata.json`` and ``timing/`` is byte-identical across
reruns of the same spec.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import datetime
import json
import logging
import os
import platform
import statistics
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import diagnostics as diag
from .lasso import generate, kkt_residual, save_instance, to_split_form
from .solvers import NUMERICAL_FAILURE, SolverConfig, solve_adaptive, solve_oladmm

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
THREADS_ENV = "LADMM_NUM_THREADS"

TABLE1_GRID = [
    (1000, 1500), (1000, 2000), (1500, 3000), (2000, 3000),
    (2000, 4000), (3000, 4000), (3000, 5000), (4000, 5000),
]
DESK_GRID = TABLE1_GRID[:2]
GRIDS = {"table1": TABLE1_GRID, "desk": DESK_GRID}

SOLVERS = {"adaptive": solve_adaptive, "oladmm": solve_oladmm}
SOLVER_ORDER = ("adaptive", "oladmm")
TRACE_COLUMNS = ("iter", "primal_res", "dual_res", "delta_k", "objective", "backtracks")


@dataclass
class RunSpec:
    sizes: list
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    solver: str = "both"
    config: SolverConfig = field(default_factory=SolverConfig)
    out: Path = Path("results")
    trace: bool = False
    diagnostics: bool = False
    save_instances: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.sizes:
            raise ValueError("at least one (m, n) size is required")
        for m, n in self.sizes:
            if m < 1 or n < 1:
                raise ValueError(f"sizes must be positive, got {m}x{n}")
        if self.solver not in ("adaptive", "oladmm", "both"):
            raise ValueError(f"unknown solver {self.solver!r}")
        self.out = Path(self.out)

    @property
    def solvers(self) -> tuple:
        return SOLVER_ORDER if self.solver == "both" else (self.solver,)

    def to_json(self) -> dict:
        return {
            "sizes": [[m, n] for m, n in self.sizes],
            "seeds": list(self.seeds),
            "solver": self.solver,
            "config": asdict(self.config),
            "trace": self.trace,
            "diagnostics": self.diagnostics,
        }


def _stem(row: dict) -> str:
    return f"{row['solver']}_m{row['m']}_n{row['n']}_seed{row['seed']}"


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def _sort_key(row: dict):
    return (row["m"], row["n"], SOLVER_ORDER.index(row["solver"]), row["seed"])


def aggregate(rows: list) -> list:
    """Median/min/max statistics per ``(m, n, solver)`` plus speedup per size."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["m"], row["n"], row["solver"]), []).append(row)
    out = []
    for (m, n, solver) in sorted(groups, key=lambda k: (k[0], k[1], SOLVER_ORDER.index(k[2]))):
        grp = groups[(m, n, solver)]
        ok = [r for r in grp if r["reason"] != NUMERICAL_FAILURE]
        its = [r["iterations"] for r in ok]
        out.append({
            "m": m,
            "n": n,
            "solver": solver,
            "runs": len(grp),
            "converged": sum(r["reason"] == "converged" for r in grp),
            "median_iterations": statistics.median(its) if its else None,
            "min_iterations": min(its) if its else None,
            "max_iterations": max(its) if its else None,
            "median_primal_res": statistics.median(r["primal_res"] for r in ok) if ok else None,
            "median_dual_res": statistics.median(r["dual_res"] for r in ok) if ok else None,
        })
    by_size: dict = {}
    for agg in out:
        by_size.setdefault((agg["m"], agg["n"]), {})[agg["solver"]] = agg
    for agg in out:
        pair = by_size[(agg["m"], agg["n"])]
        agg["speedup"] = None
        if "adaptive" in pair and "oladmm" in pair:
            a, o = pair["adaptive"]["median_iterations"], pair["oladmm"]["median_iterations"]
            if a and o is not None:
                agg["speedup"] = o / a
    return out


def compare_report(rows: list, timings: Optional[dict] = None):
    """Render rows as a per-size iteration table and a versioned JSON object.

    Returns ``(table, report)``. `timings` maps a row stem to wall seconds;
    when given, a seconds column is added to the text table only.
    """
    if not rows:
        raise ValueError("compare_report needs at least one row")
    rows = sorted(rows, key=_sort_key)
    aggs = aggregate(rows)

    sizes = sorted({(a["m"], a["n"]) for a in aggs})
    present = [s for s in SOLVER_ORDER if any(a["solver"] == s for a in aggs)]
    secs: dict = {}
    if timings is not None:
        for row in rows:
            key = (row["m"], row["n"], row["solver"])
            secs.setdefault(key, []).append(timings.get(_stem(row), float("nan")))

    head = ["m", "n"]
    for s in present:
        head += [f"{s}:iter"] + ([f"{s}:sec"] if timings is not None else []) + [f"{s}:p", f"{s}:q"]
    if len(present) == 2:
        head.append("speedup")
    body = []
    for m, n in sizes:
        cells = [str(m), str(n)]
        speed = None
        for s in present:
            agg = next((a for a in aggs if (a["m"], a["n"], a["solver"]) == (m, n, s)), None)
            if agg is None or agg["median_iterations"] is None:
                cells += ["-"] * (4 if timings is not None else 3)
                continue
            cells.append(f"{agg['median_iterations']:g}")
            if timings is not None:
                cells.append(f"{statistics.median(secs[(m, n, s)]):.2f}")
            cells += [f"{agg['median_primal_res']:.5f}", f"{agg['median_dual_res']:.5f}"]
            speed = agg["speedup"]
        if len(present) == 2:
            cells.append("-" if speed is None else f"{speed:.2f}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    table = "".join(
        "  ".join(c.rjust(w) for c, w in zip(r, widths)) + "\n" for r in [head] + body
    )

    report = {"version": REPORT_VERSION, "rows": rows, "aggregates": aggs}
    return table, report


@contextlib.contextmanager
def _thread_cap():
    value = os.environ.get(THREADS_ENV)
    if not value:
        yield None
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(value)):
        yield int(value)


def _run_cell(spec: RunSpec, inst, problem, solver: str, seed: int):
    config = spec.config
    summary = SOLVERS[solver](problem, config, keep_iterates=spec.diagnostics)
    m, n = inst.design.shape
    row = {
        "m": m,
        "n": n,
        "seed": seed,
        "solver": solver,
        "reason": summary.reason,
        "iterations": summary.iterations,
        "primal_res": summary.primal_res,
        "dual_res": summary.dual_res,
        "objective": summary.objective,
        "kkt_residual": kkt_residual(inst, summary.final.y),
        "sigma": inst.sigma,
    }
    if summary.failure is not None:
        row["failure"] = summary.failure
    return row, summary


def run(spec: RunSpec) -> int:
    """Execute the grid and write all artifacts. Returns the process exit code."""
    out = spec.out
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    rows, timings, diag_out = [], {}, {}

    with _thread_cap() as threads:
        for m, n in spec.sizes:
            for seed in spec.seeds:
                inst = generate(m, n, seed)
                if spec.save_instances:
                    (out / "instances").mkdir(exist_ok=True)
                    save_instance(inst, out / "instances" / f"m{m}_n{n}_seed{seed}.lasso")
                problem = to_split_form(inst, spec.config.beta)
                reference = None
                if spec.diagnostics:
                    reference = solve_adaptive(problem, spec.config.tightened())
                for solver in spec.solvers:
                    row, summary = _run_cell(spec, inst, problem, solver, seed)
                    stem = _stem(row)
                    rows.append(row)
                    timings[stem] = summary.wall_time
                    logger.info("%s: %s after %d iterations", stem, summary.reason, summary.iterations)
                    if spec.trace:
                        _write_csv(out / "traces" / f"{stem}.csv", TRACE_COLUMNS, [
                            [_fmt(getattr(rec, c)) for c in TRACE_COLUMNS] for rec in summary.trace
                        ])
                        _write_csv(out / "timing" / f"{stem}.csv", ("iter", "elapsed_ms"), [
                            [rec.iter, _fmt(rec.elapsed_ms)] for rec in summary.trace
                        ])
                    if spec.diagnostics:
                        ref = reference if reference.converged else None
                        diag_out[stem] = diag.diagnostics_report(problem, summary, spec.config, ref)
                        if ref is None:
                            diag_out[stem]["descent"] = {"skipped": "reference did not converge"}

    rows.sort(key=_sort_key)
    table, report = compare_report(rows)
    report["spec"] = spec.to_json()
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    (out / "table.txt").write_text(table, encoding="utf-8", newline="\n")
    if spec.diagnostics:
        diag.dump_report({k: diag_out[k] for k in sorted(diag_out)}, out / "diagnostics.json")

    metadata = {
        "started_utc": started,
        "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_seconds": {k: timings[k] for k in sorted(timings)},
        "thread_cap": threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "ladmm": __version__,
    }
    with open(out / "metadata.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(compare_report(rows, timings)[0], end="")
    if all(r["reason"] == NUMERICAL_FAILURE for r in rows):
        return 1
    return 0


def _int_list(text: str) -> list:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ladmm",
        description="Compare adaptive linearized ADMM against the fixed-coefficient baseline on LASSO.",
    )
    p.add_argument("--m", type=_int_list, help="row counts, comma separated (paired with --n)")
    p.add_argument("--n", type=_int_list, help="column counts, comma separated")
    p.add_argument("--grid", choices=sorted(GRIDS), help="preset size grid instead of --m/--n")
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5])
    p.add_argument("--solver", choices=("adaptive", "oladmm", "both"), default="both")
    defaults = SolverConfig()
    for f in fields(SolverConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "gram_norm":
            p.add_argument(flag, choices=("frobenius", "spectral"), default=defaults.gram_norm)
        else:
            p.add_argument(flag, type=type(getattr(defaults, f.name)), default=getattr(defaults, f.name))
    p.add_argument("--trace", action="store_true", help="write per-iteration CSV traces")
    p.add_argument("--diagnostics", action="store_true", help="check convergence identities")
    p.add_argument("--save-instances", action="store_true", help="export generated instances")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    if args.grid:
        sizes = list(GRIDS[args.grid])
    elif args.m and args.n:
        if len(args.m) != len(args.n):
            raise ValueError("--m and --n need the same number of entries")
        sizes = list(zip(args.m, args.n))
    else:
        raise ValueError("give --grid or both --m and --n")
    config = SolverConfig(**{f.name: getattr(args, f.name) for f in fields(SolverConfig)})
    return RunSpec(sizes=sizes, seeds=args.seeds, solver=args.solver, config=config,
                   out=args.out, trace=args.trace, diagnostics=args.diagnostics,
                   save_instances=args.save_instances)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
