"""Deterministic LP / free-MPS writers and an LP reader for our own output."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .model import Column, ModelArtifact, Row

LINE_WIDTH = 200


def _num(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _terms(coefs, columns: list[Column]) -> list[str]:
    out = []
    for c, v in coefs:
        sign = "-" if v < 0 else "+"
        out.append(f"{sign} {_num(abs(v))} {columns[c].name}")
    return out


def _wrap(head: str, parts: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for p in parts + ([tail] if tail else []):
        if len(cur) + 1 + len(p) > LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def lp_text(model: ModelArtifact) -> str:
    cols = model.columns
    out = [f"\\ model {model.metadata.get('instance', '')} digest {model.metadata.get('model_digest', '')}",
           "Minimize"]
    obj = [(i, c.obj) for i, c in enumerate(cols) if c.obj != 0.0]
    out += _wrap(" obj:", _terms(obj, cols) if obj else ["0", cols[0].name] if cols else ["0"])
    out.append("Subject To")
    sense = {"<=": "<=", ">=": ">=", "=": "="}
    for r in model.rows:
        parts = _terms(r.coefs, cols) if r.coefs else ["0", cols[0].name]
        out += _wrap(f" {r.name}:", parts, f"{sense[r.sense]} {_num(r.rhs)}")
    out.append("Bounds")
    for c in cols:
        if c.lb == -math.inf and c.ub == math.inf:
            out.append(f" {c.name} free")
        else:
            out.append(f" {_num(c.lb)} <= {c.name} <= {_num(c.ub)}")
    ints = [c.name for c in cols if c.integer and not (c.lb == 0 and c.ub == 1)]
    bins = [c.name for c in cols if c.integer and c.lb == 0 and c.ub == 1]
    if ints:
        out.append("General")
        out += _wrap("", ints)
    if bins:
        out.append("Binary")
        out += _wrap("", bins)
    out.append("End")
    return "\n".join(out) + "\n"


def mps_text(model: ModelArtifact) -> str:
    cols = model.columns
    out = [f"NAME {model.metadata.get('instance', 'model') or 'model'}", "ROWS", " N obj"]
    code = {"<=": "L", ">=": "G", "=": "E"}
    for r in model.rows:
        out.append(f" {code[r.sense]} {r.name}")
    entries: list[list[tuple[str, float]]] = [[] for _ in cols]
    for i, c in enumerate(cols):
        if c.obj != 0.0:
            entries[i].append(("obj", c.obj))
    for r in model.rows:
        for c, v in r.coefs:
            entries[c].append((r.name, v))
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for i, c in enumerate(cols):
        if c.integer != in_int:
            tag = "INTORG" if c.integer else "INTEND"
            out.append(f" M{marker} 'MARKER' '{tag}'")
            marker += 1
            in_int = c.integer
        items = entries[i] or [("obj", 0.0)]
        for row, v in items:
            out.append(f" {c.name} {row} {_num(v)}")
    if in_int:
        out.append(f" M{marker} 'MARKER' 'INTEND'")
    out.append("RHS")
    for r in model.rows:
        if r.rhs != 0.0:
            out.append(f" rhs {r.name} {_num(r.rhs)}")
    out.append("BOUNDS")
    for c in cols:
        if c.lb == -math.inf and c.ub == math.inf:
            out.append(f" FR bnd {c.name}")
            continue
        if c.lb == -math.inf:
            out.append(f" MI bnd {c.name}")
        else:
            out.append(f" LO bnd {c.name} {_num(c.lb)}")
        if c.ub == math.inf:
            out.append(f" PL bnd {c.name}")
        else:
            out.append(f" UP bnd {c.name} {_num(c.ub)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def export_model(model: ModelArtifact, path, fmt: str = "LP") -> Path:
    fmt = fmt.upper()
    if fmt not in ("LP", "MPS"):
        raise ValueError(f"unknown model format {fmt!r}")
    path = Path(path)
    text = lp_text(model) if fmt == "LP" else mps_text(model)
    path.write_bytes(text.encode("ascii"))
    return path


@dataclass
class ParsedLP:
    objective: dict[str, float] = field(default_factory=dict)
    rows: dict[str, tuple[dict[str, float], str, float]] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    integers: set[str] = field(default_factory=set)


_TERM = re.compile(r"([+-])\s*(\S+)\s+([A-Za-z_][\w.]*)")


def _parse_value(tok: str) -> float:
    t = tok.lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def read_lp(path) -> ParsedLP:
    """Parse the LP dialect written by lp_text (enough for round-trip checks)."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("\\")]
    out = ParsedLP()
    section = None
    buf = ""

    def flush(buf: str) -> None:
        if not buf.strip():
            return
        name, body = buf.split(":", 1)
        name = name.strip()
        if section == "obj":
            out.objective = {v: (-1 if s == "-" else 1) * float(c) for s, c, v in _TERM.findall(" " + body)
                             if c != "0"}
            return
        m = re.search(r"(<=|>=|=)\s*(\S+)\s*$", body)
        if not m:
            raise ValueError(f"row {name} has no sense")
        lhs = body[:m.start()]
        coefs = {}
        for s, c, v in _TERM.findall(" + " + lhs.strip() if not lhs.strip().startswith(("+", "-")) else " " + lhs):
            if c == "0":
                continue
            coefs[v] = coefs.get(v, 0.0) + (-1 if s == "-" else 1) * float(c)
        out.rows[name] = (coefs, m.group(1), _parse_value(m.group(2)))

    heads = {"minimize": "obj", "subject to": "rows", "bounds": "bounds", "general": "int",
             "binary": "bin", "end": None}
    for ln in lines:
        key = ln.strip().lower()
        if key in heads:
            if section in ("obj", "rows"):
                flush(buf)
            buf = ""
            section = heads[key]
            continue
        if section in ("obj", "rows"):
            if ln.startswith("   ") and buf:
                buf += " " + ln.strip()
            else:
                flush(buf)
                buf = ln
        elif section == "bounds":
            parts = ln.split()
            if len(parts) == 2 and parts[1] == "free":
                out.bounds[parts[0]] = (-math.inf, math.inf)
            else:
                out.bounds[parts[2]] = (_parse_value(parts[0]), _parse_value(parts[4]))
        elif section in ("int", "bin"):
            out.integers.update(ln.split())
    return out
