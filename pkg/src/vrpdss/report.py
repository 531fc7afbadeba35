"""Tabular reports: SI units in CSV/JSON, table conventions ($, min, km) in text."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .instance import Instance
from .oracle import ComparisonRow
from .operations import Elimination, RULES
from .solution import Schedule, cost_breakdown, cost_terms

FORMATS = ("text", "csv", "json")


@dataclass(frozen=True)
class Field:
    key: str  # SI column name used in csv/json
    label: str  # header in text output
    scale: float = 1.0  # SI value * scale = text value
    digits: int = 2


@dataclass
class Table:
    name: str
    fields: tuple[Field, ...]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def keys(self) -> list[str]:
        return [f.key for f in self.fields]


def _cell(f: Field, v) -> str:
    if isinstance(v, float):
        return f"{v * f.scale:.{f.digits}f}"
    return str(v)


def render_text(table: Table) -> str:
    head = [f.label for f in table.fields]
    body = [[_cell(f, row[f.key]) for f in table.fields] for row in table.rows]
    widths = [max(len(h), *(len(r[n]) for r in body)) if body else len(h) for n, h in enumerate(head)]
    lines = [table.name, "  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    for k, v in sorted(table.meta.items()):
        lines.append(f"# {k}: {v}")
    return "\n".join(lines) + "\n"


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.keys)
    for row in table.rows:
        w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in table.keys])
    return buf.getvalue()


def render_json(table: Table) -> str:
    doc = {"table": table.name, "columns": table.keys,
           "rows": [{k: row[k] for k in table.keys} for row in table.rows], "meta": table.meta}
    return json.dumps(doc, indent=1) + "\n"


def render(table: Table, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    return {"text": render_text, "csv": render_csv, "json": render_json}[fmt](table)


def write_report(table: Table, fmt: str, path) -> Path:
    path = Path(path)
    path.write_text(render(table, fmt))
    return path


COST_FIELDS = (
    Field("tandem", "tandem"),
    Field("completion_s", "time [min]", 1 / 60),
    Field("distance_km", "dist [km]"),
    Field("tec_kJ", "cycles", digits=2),
    Field("wages_usd", "wages [$]"),
    Field("fuel_usd", "fuel [$]"),
    Field("power_usd", "power [$]"),
    Field("total_usd", "total [$]"),
)


def cost_table(instance: Instance, schedule: Schedule) -> Table:
    """One row per tandem plus a total row; cycles = tec / E in text output."""
    E = instance.battery.E
    fields = tuple(Field(f.key, f.label, 1 / E, 2) if f.key == "tec_kJ" else f for f in COST_FIELDS)
    rows = []
    for n, t in enumerate(schedule.tandems):
        tec = sum(d.tec for d in t.drones)
        c = cost_terms(instance.costs, t.completion, t.distance_km, tec)
        rows.append({"tandem": str(n), "completion_s": t.completion, "distance_km": t.distance_km,
                     "tec_kJ": tec, "wages_usd": c.wages, "fuel_usd": c.fuel, "power_usd": c.power,
                     "total_usd": c.total})
    total = cost_breakdown(instance, schedule)
    rows.append({"tandem": "all", "completion_s": sum(t.completion for t in schedule.tandems),
                 "distance_km": sum(t.distance_km for t in schedule.tandems), "tec_kJ": schedule.tec,
                 "wages_usd": total.wages, "fuel_usd": total.fuel, "power_usd": total.power,
                 "total_usd": total.total})
    meta = {"feasible": schedule.feasible, "violations": len(schedule.violations)}
    return Table("cost breakdown", fields, rows, meta)


def violation_table(schedule: Schedule) -> Table:
    fields = (Field("code", "code"), Field("tandem", "tandem"), Field("drone", "drone"), Field("message", "message"))
    rows = [{"code": v.code, "tandem": "" if v.tandem is None else v.tandem,
             "drone": "" if v.drone is None else v.drone, "message": v.message} for v in schedule.violations]
    return Table("violations", fields, rows)


def comparison_table(rows: Iterable[ComparisonRow]) -> Table:
    fields = (Field("label", "variant"), Field("speeds_mps", "speeds [m/s]"),
              Field("objective_usd", "cost [$]"), Field("dss_delta_pct", "DSS delta [%]"))
    out = [{"label": r.label, "speeds_mps": " ".join(f"{v:g}" for v in r.speeds),
            "objective_usd": r.objective, "dss_delta_pct": r.delta_pct} for r in rows]
    return Table("VRPD vs VRPD-DSS", fields, out)


def operations_table(n_all: int, elim: Optional[Elimination], n_z_all: int, n_z: int) -> Table:
    fields = (Field("item", "item"), Field("before", "before"), Field("after", "after"),
              Field("reduction_pct", "reduction [%]"))
    kept = len(elim.kept) if elim else n_all
    rows = [{"item": "operations", "before": n_all, "after": kept,
             "reduction_pct": 100.0 * (n_all - kept) / n_all if n_all else 0.0},
            {"item": "z triples", "before": n_z_all, "after": n_z,
             "reduction_pct": 100.0 * (n_z_all - n_z) / n_z_all if n_z_all else 0.0}]
    meta = {f"removed_by_{r}": (elim.counts[r] if elim else 0) for r in RULES}
    return Table("preprocessing", fields, rows, meta)
