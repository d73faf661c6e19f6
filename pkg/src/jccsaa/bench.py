"""Benchmark harness: run variants over seeds and average the table metrics.

LR-GAP is measured against the optimum found by TS+V on the same seed;
speedup is BN's total time over the variant's total time, tightening
included.
"""
from __future__ import annotations

import csv
import io
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .bnb import MipStatus, gap_from_values
from .opf import opf_instance
from .strengthen import SolverConfig, TightenResult, parse_variant, run_pipeline

__all__ = ["RunRecord", "BenchReport", "compute_report", "run_seed", "run_bench",
           "report_csv", "thread_count", "CSV_COLUMNS"]

CSV_COLUMNS = ("Variant", "#CON", "%CON", "LR-GAP", "MIP-GAP", "#OPT", "Time", "Speedup")
TIMING_COLUMNS = ("Time", "Speedup")


@dataclass(frozen=True)
class RunRecord:
    """Raw outcome of one variant on one seed."""

    seed: int
    variant: str
    num_constraints: int
    objective: float
    relaxation: float
    mip_gap: float
    optimal: bool
    total_time: float
    nodes: int = 0

    @classmethod
    def from_run(cls, seed: int, run) -> "RunRecord":
        r = run.result
        return cls(seed, run.variant.name, run.num_constraints, float(r.objective),
                   float(run.relaxation_value), float(r.mip_gap),
                   r.status is MipStatus.OPTIMAL, run.total_time, r.nodes)


@dataclass(frozen=True)
class BenchReport:
    variant: str
    num_con: float
    con_pct: float
    lr_gap: float
    mip_gap: float
    num_opt: int
    num_seeds: int
    wall_time: float
    speedup: float

    def row(self, omit_timing: bool = False) -> dict:
        out = {"Variant": self.variant, "#CON": f"{self.num_con:.1f}", "%CON": f"{self.con_pct:.3f}",
               "LR-GAP": f"{self.lr_gap:.6f}", "MIP-GAP": f"{self.mip_gap:.6f}",
               "#OPT": str(self.num_opt), "Time": f"{self.wall_time:.3f}",
               "Speedup": f"{self.speedup:.3f}"}
        if omit_timing:
            for k in TIMING_COLUMNS:
                out.pop(k)
        return out


def _optima(records) -> dict:
    """Reference optimum per seed: TS+V when it ran and proved optimality."""
    by_seed = {}
    for r in records:
        by_seed.setdefault(r.seed, []).append(r)
    optima = {}
    for seed, recs in sorted(by_seed.items()):
        tsv = [r for r in recs if r.variant == "TS+V" and r.optimal]
        if tsv:
            optima[seed] = tsv[0].objective
        elif not any(r.variant == "TS+V" for r in recs) and any(r.optimal for r in recs):
            optima[seed] = min(r.objective for r in recs if r.optimal)
        else:
            warnings.warn(f"seed {seed}: no verified optimum, excluded from the report")
    return optima


def compute_report(records) -> list[BenchReport]:
    """Average ``RunRecord`` metrics per variant over the seeds that have an optimum."""
    records = list(records)
    if not records:
        raise ValueError("no runs to report")
    optima = _optima(records)
    bn = {r.seed: r for r in records if r.variant == "BN"}
    order = []
    for r in records:
        if r.variant not in order:
            order.append(r.variant)
    reports = []
    for v in order:
        recs = [r for r in records if r.variant == v and r.seed in optima]
        if not recs:
            continue
        con = np.array([r.num_constraints for r in recs], dtype=float)
        pct = [100.0 * r.num_constraints / bn[r.seed].num_constraints if r.seed in bn else np.nan
               for r in recs]
        gaps = [gap_from_values(optima[r.seed], r.relaxation).value for r in recs]
        speed = [bn[r.seed].total_time / r.total_time if r.seed in bn and r.total_time > 0 else np.nan
                 for r in recs]
        reports.append(BenchReport(
            v, float(con.mean()), float(np.mean(pct)), float(np.mean(gaps)),
            float(np.mean([100.0 * r.mip_gap for r in recs])), sum(r.optimal for r in recs),
            len(recs), float(np.mean([r.total_time for r in recs])), float(np.mean(speed))))
    return reports


def report_csv(reports, omit_timing: bool = False) -> str:
    cols = [c for c in CSV_COLUMNS if not (omit_timing and c in TIMING_COLUMNS)]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for rep in reports:
        w.writerow(rep.row(omit_timing))
    return buf.getvalue()


def thread_count() -> int:
    """Worker processes for ``bench``; ``JCC_THREADS`` overrides the CPU count."""
    env = os.environ.get("JCC_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_seed(system, scenarios: int, epsilon: float, zeta, seed: int, variants,
             config: SolverConfig | None = None, kappa: int | None = None) -> list[RunRecord]:
    """All variants on one sampled instance; T and TS share one tightening pass."""
    inst, _, _ = opf_instance(system, scenarios, epsilon, zeta, seed)
    shared: dict[tuple, TightenResult] = {}
    out = []
    for text in variants:
        v = parse_variant(text, kappa)
        key = (v.kappa, v.cuts)
        run = run_pipeline(inst, v, config, tightened=shared.get(key))
        if run.tighten is not None:
            shared[key] = run.tighten
        out.append(RunRecord.from_run(seed, run))
    return out


def _run_seed_args(args):
    return run_seed(*args)


def run_bench(system, scenarios: int, epsilon: float, zeta, seeds, variants,
              config: SolverConfig | None = None, kappa: int | None = None,
              serial: bool = True, workers: int | None = None) -> list[RunRecord]:
    """Run every seed; results come back in seed order whatever the worker count."""
    jobs = [(system, scenarios, epsilon, zeta, s, tuple(variants), config, kappa) for s in seeds]
    workers = 1 if serial else (workers or thread_count())
    if workers <= 1 or len(jobs) <= 1:
        results = [_run_seed_args(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed_args, jobs))
    return [r for recs in results for r in recs]


def records_to_dicts(records) -> list[dict]:
    return [asdict(r) for r in records]
