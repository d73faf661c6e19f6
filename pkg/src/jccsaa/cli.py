"""Command-line entry point: ``jccsaa <command> [flags]``.

Commands: ``generate``, ``tighten``, ``cuts``, ``solve``, ``bench`` and
``export-mps``. Any failure prints a JSON error record on stderr and exits
with status 1.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .bench import compute_report, report_csv, run_bench
from .core import BigMTable, build_saa_milp, count_constraints
from .cuts import generate_cut_set
from .io import (cutset_to_dict, dump_json, instance_from_dict, instance_to_dict,
                 mip_result_to_dict, read_json, table_to_dict, write_mps)
from .opf import SYSTEM_NAMES, opf_instance
from .strengthen import SolverConfig, parse_variant, run_pipeline, tighten


def _instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance JSON written by 'generate'")
    p.add_argument("--system", default="three-bus",
                   help=f"bundled system ({', '.join(SYSTEM_NAMES)}) or a PowerSystem JSON path")
    p.add_argument("--scenarios", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--zeta", type=float, default=None, help="relative error std (per-system default)")
    p.add_argument("--seed", type=int, default=0)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kappa", type=int, default=None, help="tightening passes (T/TS default 3, TS+V 1)")
    p.add_argument("--segments", type=int, default=16, help="tangent segments per quadratic term")
    p.add_argument("--gap-tol", type=float, default=1e-9, help="relative MIP gap tolerance")
    p.add_argument("--time-limit", type=float, default=None, help="seconds per MILP")
    p.add_argument("--fallback-m", type=float, default=1e4, help="Big-M used by BN and BN+V")


def _config(args) -> SolverConfig:
    return SolverConfig(fallback_m=args.fallback_m, gap_tol=args.gap_tol,
                        time_limit=args.time_limit, segments=args.segments)


def _load_instance(args):
    if args.instance:
        return instance_from_dict(read_json(args.instance))
    inst, _, _ = opf_instance(args.system, args.scenarios, args.epsilon, args.zeta, args.seed)
    return inst


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> None:
    inst, _, sample = opf_instance(args.system, args.scenarios, args.epsilon, args.zeta, args.seed)
    meta = {"system": args.system, "scenarios": args.scenarios, "seed": args.seed,
            "zeta": args.zeta, "variance_estimate": sample.variance_estimate}
    _emit(dump_json(instance_to_dict(inst, meta)), args.out)


def cmd_tighten(args) -> None:
    inst = _load_instance(args)
    kappa = args.kappa or (1 if args.with_cuts else 3)
    res = tighten(inst, kappa, args.with_cuts, accelerate=not args.no_accelerate)
    extra = {"iterations": kappa, "with_cuts": args.with_cuts, "lp_solves": res.lp_solves}
    if not args.omit_timing:
        extra["wall_time"] = res.wall_time
    _emit(dump_json(table_to_dict(res.table, **extra)), args.out)


def cmd_cuts(args) -> None:
    inst = _load_instance(args)
    _emit(dump_json(cutset_to_dict(generate_cut_set(inst))), args.out)


def cmd_solve(args) -> None:
    inst = _load_instance(args)
    v = parse_variant(args.variant, args.kappa)
    run = run_pipeline(inst, v, _config(args))
    doc = mip_result_to_dict(run.result, omit_timing=args.omit_timing, variant=v.label,
                             num_constraints=run.num_constraints,
                             relaxation_value=run.relaxation_value)
    if not args.omit_timing:
        doc["tighten_time"] = run.tighten_time
    _emit(dump_json(doc), args.out)
    cols = ["variant", "status", "objective", "#CON", "relaxation", "mip_gap", "nodes"]
    vals = [v.label, run.result.status.value, repr(run.result.objective), str(run.num_constraints),
            repr(run.relaxation_value), repr(run.result.mip_gap), str(run.result.nodes)]
    if not args.omit_timing:
        cols.append("time")
        vals.append(f"{run.total_time:.3f}")
    csv_text = ",".join(cols) + "\n" + ",".join(vals) + "\n"
    if args.csv:
        Path(args.csv).write_text(csv_text)
    elif args.out:
        Path(args.out).with_suffix(".csv").write_text(csv_text)


def _seed_list(text: str) -> list[int]:
    if "," in text or "-" in text.strip("-"):
        out = []
        for part in text.split(","):
            if "-" in part:
                a, b = part.split("-")
                out += list(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
        return out
    return list(range(int(text)))


def cmd_bench(args) -> None:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        parse_variant(v)
    records = run_bench(args.system, args.scenarios, args.epsilon, args.zeta,
                        _seed_list(args.seeds), variants, _config(args), args.kappa,
                        serial=args.serial)
    _emit(report_csv(compute_report(records), args.omit_timing), args.out)


def cmd_export_mps(args) -> None:
    inst = _load_instance(args)
    v = parse_variant(args.variant, args.kappa)
    cfg = _config(args)
    cut_set = generate_cut_set(inst) if v.cuts else None
    if v.tightened:
        table = tighten(inst, v.kappa, v.cuts, cuts=cut_set).table
    else:
        table = BigMTable.constant(inst.num_rows, inst.num_scenarios, cfg.fallback_m)
    model = build_saa_milp(inst, table, fallback=cfg.fallback_m, screen=v.screen, cuts=cut_set)
    if not args.out:
        raise ValueError("export-mps needs --out")
    write_mps(model, args.out)
    sys.stdout.write(dump_json({"rows": count_constraints(model),
                                "columns": model.num_columns, "path": args.out}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jccsaa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample an OPF instance and write it as JSON")
    _instance_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("tighten", help="write the tightened Big-M table as JSON")
    _instance_flags(p)
    p.add_argument("--kappa", type=int, default=None)
    p.add_argument("--with-cuts", action="store_true", help="add envelope cuts to the relaxations")
    p.add_argument("--no-accelerate", action="store_true", help="keep frozen rows in the relaxations")
    p.add_argument("--omit-timing", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tighten)

    p = sub.add_parser("cuts", help="write the envelope cuts as JSON")
    _instance_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cuts)

    p = sub.add_parser("solve", help="solve one variant; writes MipResult JSON and a CSV row")
    _instance_flags(p)
    _solver_flags(p)
    p.add_argument("--variant", default="TS+V")
    p.add_argument("--serial", action="store_true", help="accepted for symmetry; solves are serial")
    p.add_argument("--omit-timing", action="store_true")
    p.add_argument("--csv", help="CSV summary path (default: --out with .csv suffix)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a variant matrix over seeds and write a CSV report")
    _instance_flags(p)
    _solver_flags(p)
    p.add_argument("--seeds", default="10", help="count N (seeds 0..N-1) or a list like 0,3,5-7")
    p.add_argument("--variants", default="BN,T,TS,BN+V,TS+V")
    p.add_argument("--serial", action="store_true", help="run seeds one after another")
    p.add_argument("--omit-timing", action="store_true", help="drop Time and Speedup columns")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-mps", help="write the MILP of one variant as fixed-format MPS")
    _instance_flags(p)
    _solver_flags(p)
    p.add_argument("--variant", default="BN")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_mps)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command,
                  "trace": traceback.format_exc(limit=3).splitlines()[-3:]}
        sys.stderr.write(json.dumps(record) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
