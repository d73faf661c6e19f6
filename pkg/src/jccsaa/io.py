"""JSON and MPS serialisation.

JSON documents are written with sorted keys and ``repr`` floats so equal
inputs give identical bytes. Infinite values are written as ``null``: a
``null`` lower bound is ``-inf`` and a ``null`` upper bound or Big-M is
``+inf``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bnb import MipResult
from .core import BigMTable, JccInstance, MilpModel, Polyhedron, QuadraticObjective, ScenarioRow
from .cuts import CutSet, RowCuts, ZInterval

__all__ = [
    "dump_json", "write_json", "read_json", "instance_to_dict", "instance_from_dict",
    "table_to_dict", "table_from_dict", "cutset_to_dict", "cutset_from_dict",
    "mip_result_to_dict", "write_mps", "read_mps", "MpsData", "format_mps_number",
]

SCHEMA_VERSION = 1


def _num(v):
    v = float(v)
    return None if math.isinf(v) or math.isnan(v) else v


def _vec(a):
    return [_num(v) for v in np.asarray(a, dtype=float).ravel()]


def _unvec(a, none_as: float = np.inf):
    return np.array([none_as if v is None else v for v in a], dtype=float)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dump_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def instance_to_dict(inst: JccInstance, meta: dict | None = None) -> dict:
    P, obj = inst.polyhedron, inst.objective
    return {
        "kind": "jcc_instance",
        "version": SCHEMA_VERSION,
        "num_vars": inst.num_vars,
        "epsilon": inst.epsilon,
        "polyhedron": {
            "A": [_vec(r) for r in P.A],
            "senses": list(P.senses),
            "rhs": _vec(P.rhs),
            "var_lower": _vec(P.var_lower),
            "var_upper": _vec(P.var_upper),
        },
        "objective": {"diag_q": _vec(obj.diag_q), "linear_c": _vec(obj.linear_c),
                      "constant": obj.constant},
        "rows": [{"a0": _vec(r.a0), "a_hat": _vec(r.a_hat), "omega": _vec(r.omega), "b": _vec(r.b)}
                 for r in inst.rows],
        "scenario_probs": None if inst.scenario_probs is None else _vec(inst.scenario_probs),
        "labels": None if inst.labels is None else list(inst.labels),
        "meta": meta or {},
    }


def instance_from_dict(d: dict) -> JccInstance:
    if d.get("kind") != "jcc_instance":
        raise ValueError("not a jcc_instance document")
    n = int(d["num_vars"])
    p = d["polyhedron"]
    A = np.array(p["A"], dtype=float).reshape(-1, n)
    poly = Polyhedron(A, tuple(p["senses"]), p["rhs"], _unvec(p["var_lower"], -np.inf),
                      _unvec(p["var_upper"], np.inf))
    o = d["objective"]
    obj = QuadraticObjective(o["diag_q"], o["linear_c"], o["constant"])
    rows = tuple(ScenarioRow(r["a0"], r["a_hat"], r["omega"], r["b"]) for r in d["rows"])
    labels = tuple(d["labels"]) if d.get("labels") else None
    return JccInstance(poly, obj, rows, float(d["epsilon"]), d.get("scenario_probs"), labels)


def table_to_dict(table: BigMTable, **extra) -> dict:
    return {"kind": "bigm_table", "version": SCHEMA_VERSION,
            "values": [_vec(r) for r in table.values],
            "screened": table.screened.astype(int).tolist(),
            "num_screened": table.num_screened, **extra}


def table_from_dict(d: dict) -> BigMTable:
    values = np.array([_unvec(r, np.inf) for r in d["values"]], dtype=float)
    table = BigMTable.from_values(values)
    if "screened" in d and not np.array_equal(np.array(d["screened"], dtype=bool), table.screened):
        raise ValueError("screened mask does not match the Big-M values")
    return table


def cutset_to_dict(cuts: CutSet) -> dict:
    A, rhs = cuts.matrix()
    return {
        "kind": "cut_set", "version": SCHEMA_VERSION, "num_vars": cuts.num_vars,
        "rows": [{"row": r.row, "z_lower": r.interval.lower, "z_upper": r.interval.upper,
                  "slopes": _vec(r.slopes), "anchors": [_vec(a) for a in r.anchors],
                  "A": [_vec(a) for a in r.A], "rhs": _vec(r.rhs),
                  "always_within_budget": bool(r.always_within_budget)} for r in cuts.rows],
        "merged": {"A": [_vec(a) for a in A], "rhs": _vec(rhs)},
    }


def cutset_from_dict(d: dict) -> CutSet:
    n = int(d["num_vars"])
    rows = tuple(
        RowCuts(int(r["row"]), ZInterval(r["z_lower"], r["z_upper"]),
                np.array(r["slopes"], dtype=float), np.array(r["anchors"], dtype=float).reshape(-1, 2),
                np.array(r["A"], dtype=float).reshape(-1, n), np.array(r["rhs"], dtype=float),
                always_within_budget=bool(r["always_within_budget"]))
        for r in d["rows"])
    return CutSet(rows, n)


def mip_result_to_dict(res: MipResult, *, omit_timing: bool = False, **extra) -> dict:
    out = {
        "kind": "mip_result", "version": SCHEMA_VERSION,
        "status": res.status.value,
        "objective": _num(res.objective),
        "true_objective": _num(res.true_objective),
        "lower_bound": _num(res.lower_bound),
        "mip_gap": _num(res.mip_gap),
        "root_bound": _num(res.root_bound),
        "nodes": res.nodes,
        "x": None if res.x is None else _vec(res.x),
        "y": None if res.y is None else [int(round(v)) for v in res.y],
    }
    if not omit_timing:
        out["wall_time"] = res.wall_time
    out.update(extra)
    return out


# --- MPS -----------------------------------------------------------------

def format_mps_number(v: float) -> str:
    """Shortest rendering of ``v`` that fits the 12-character MPS value field."""
    v = float(v)
    if v == int(v) and abs(v) < 1e11:
        return str(int(v))
    for digits in range(12, 0, -1):
        s = f"{v:.{digits}g}"
        if len(s) <= 12:
            return s
    raise ValueError(f"cannot fit {v!r} into 12 characters")


def _line(kind: str, name: str, col: str = "", val=None, col2: str = "", val2=None) -> str:
    s = f" {kind:<2} {name:<8}"
    if col:
        s += f"  {col:<8}  {format_mps_number(val):>12}"
        if col2:
            s += f"   {col2:<8}  {format_mps_number(val2):>12}"
    return s.rstrip()


def write_mps(model: MilpModel, path, name: str = "JCCSAA") -> None:
    """Fixed-format MPS with integer markers and a ``QUADOBJ`` section.

    Columns ``X0000001..`` are the continuous variables and ``Y0000001..``
    the scenario indicators; rows are ``R0000001..`` in model order
    (deterministic, Big-M, cuts, knapsack). The objective row ``COST``
    carries the constant as the negated right-hand side.
    """
    n, S = model.num_vars, model.num_scenarios
    P = model.polyhedron
    xs = [f"X{i + 1:07d}" for i in range(n)]
    ys = [f"Y{s + 1:07d}" for s in range(S)]
    col_entries = {c: [] for c in xs + ys}
    senses, rhs = [], []
    sense_code = {"<=": "L", "=": "E", ">=": "G"}

    def add_row(coef_x, sense, b, ycoef=None):
        r = f"R{len(senses) + 1:07d}"
        for i in np.flatnonzero(coef_x):
            col_entries[xs[i]].append((r, coef_x[i]))
        if ycoef is not None:
            for s, v in ycoef:
                col_entries[ys[s]].append((r, v))
        senses.append(sense_code[sense])
        rhs.append((r, b))

    for a, sense, b in zip(P.A, P.senses, P.rhs):
        add_row(a, sense, b)
    if model.num_bigm_rows:
        coef, ss, M, b, _ = model.bigm_rows()
        for k in range(coef.shape[0]):
            add_row(coef[k], "<=", b[k], [(int(ss[k]), -M[k])] if M[k] != 0 else None)
    for a, b in zip(model.cut_A, model.cut_rhs):
        add_row(a, "<=", b)
    add_row(np.zeros(n), "<=", model.knapsack_rhs,
            [(s, w) for s, w in enumerate(model.knapsack_weights)])
    if len(senses) > 9_999_999:
        raise ValueError("too many rows for 8-character names")

    obj = model.objective
    lines = [f"NAME          {name}", "ROWS", " N  COST"]
    lines += [f" {k:<2} R{i + 1:07d}" for i, k in enumerate(senses)]
    lines.append("COLUMNS")
    for i, c in enumerate(xs):
        entries = ([("COST", obj.linear_c[i])] if obj.linear_c[i] != 0 else []) + col_entries[c]
        if not entries:
            entries = [("COST", 0.0)]
        lines += [_line("", c, r, v) for r, v in entries]
    lines.append("    MARKER                 'MARKER'                 'INTORG'")
    for c in ys:
        lines += [_line("", c, r, v) for r, v in col_entries[c]] or [_line("", c, "COST", 0.0)]
    lines.append("    MARKER                 'MARKER'                 'INTEND'")
    lines.append("RHS")
    if obj.constant != 0:
        lines.append(_line("", "RHS", "COST", -obj.constant))
    lines += [_line("", "RHS", r, b) for r, b in rhs if b != 0]
    lines.append("BOUNDS")
    for i, c in enumerate(xs):
        lo, hi = P.var_lower[i], P.var_upper[i]
        if lo == hi:
            lines.append(_line("FX", "BND", c, lo))
            continue
        if np.isinf(lo):
            lines.append(f" MI {'BND':<8}  {c}")
        elif lo != 0:
            lines.append(_line("LO", "BND", c, lo))
        if np.isfinite(hi):
            lines.append(_line("UP", "BND", c, hi))
    for c in ys:
        lines.append(_line("UP", "BND", c, 1))
    quad = [(xs[i], 2.0 * obj.diag_q[i]) for i in np.flatnonzero(obj.diag_q)]
    if quad:
        lines.append("QUADOBJ")
        lines += [_line("", c, c, v) for c, v in quad]
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class MpsData:
    name: str = ""
    objective_row: str = ""
    row_types: dict = field(default_factory=dict)
    columns: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    integer: set = field(default_factory=set)
    quadobj: dict = field(default_factory=dict)

    @property
    def num_rows(self) -> int:
        """Constraint rows, excluding the objective."""
        return sum(1 for t in self.row_types.values() if t != "N")

    @property
    def num_columns(self) -> int:
        return len(self.columns)


def read_mps(path) -> MpsData:
    """Minimal reader for fixed or free MPS (names must not contain spaces)."""
    data = MpsData()
    section = None
    integer = False
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            parts = raw.split()
            section = parts[0].upper()
            if section == "NAME":
                data.name = parts[1] if len(parts) > 1 else ""
            if section == "OBJSENSE" and len(parts) > 1:
                section = None
            continue
        tok = raw.split()
        if section == "ROWS":
            data.row_types[tok[1]] = tok[0].upper()
            if tok[0].upper() == "N" and not data.objective_row:
                data.objective_row = tok[1]
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'") == "MARKER":
                integer = tok[2].strip("'") == "INTORG"
                continue
            col = data.columns.setdefault(tok[0], {})
            if integer:
                data.integer.add(tok[0])
            for r, v in zip(tok[1::2], tok[2::2]):
                col[r] = float(v)
        elif section == "RHS":
            body = tok[1:] if len(tok) % 2 == 1 else tok
            for r, v in zip(body[0::2], body[1::2]):
                data.rhs[r] = float(v)
        elif section == "BOUNDS":
            kind, col = tok[0].upper(), tok[2]
            val = float(tok[3]) if len(tok) > 3 else None
            data.bounds.setdefault(col, {})[kind] = val
        elif section == "QUADOBJ":
            data.quadobj[(tok[0], tok[1])] = float(tok[2])
    return data
