"""Decode solver values into a Solution."""
from __future__ import annotations

from typing import Mapping

from ..instance import Instance
from ..solution import Solution, Sortie, TandemPlan, with_departures
from .bridge import RawSolution
from .model import ModelArtifact

INTEGRALITY_TOL = 1e-6


class ExtractionError(ValueError):
    pass


def _binary(name: str, v: float) -> int:
    r = round(v)
    if abs(v - r) > INTEGRALITY_TOL or r not in (0, 1):
        raise ExtractionError(f"variable {name} = {v!r} is not binary within {INTEGRALITY_TOL}")
    return int(r)


def extract_solution(model: ModelArtifact, raw: RawSolution | Mapping[str, float],
                     instance: Instance | None = None, keep_departures: bool = True) -> Solution:
    """Routes from x, sorties from y, truck waits from the arrival times.

    Departure targets are the latest times that still meet every arrival the
    solver reported, so the simulated schedule reproduces the solver's one.
    """
    inst = instance or model.instance
    values = raw.values if isinstance(raw, RawSolution) else dict(raw)
    reg = model.registry
    for name, v in values.items():
        if name not in reg.by_name:
            if name.startswith(("x_", "y_", "z_")) and abs(v) > INTEGRALITY_TOL:
                raise ExtractionError(f"value for {name} refers to no variable of this model "
                                      "(eliminated operation or triple?)")
    for c in model.columns:
        if c.integer and c.lb == 0 and c.ub == 1:
            _binary(c.name, values.get(c.name, 0.0))

    end = inst.end
    plans, targets = [], []
    for f in range(inst.n_tandems):
        succ: dict[int, int] = {}
        for (ff, i, j), idx in reg["x"].items():
            if ff == f and _binary(reg.columns[idx].name, values.get(reg.columns[idx].name, 0.0)):
                if i in succ:
                    raise ExtractionError(f"tandem {f} leaves node {i} twice")
                succ[i] = j
        route = [0] if succ else [0, end]
        while route[-1] != end:
            nxt = succ.get(route[-1])
            if nxt is None or nxt in route:
                raise ExtractionError(f"tandem {f}: arcs do not form a depot-to-depot path from {route}")
            route.append(nxt)
        if succ and len(route) - 1 != len(succ):
            raise ExtractionError(f"tandem {f}: arcs outside the depot path (subtour)")
        pos = {n: p for p, n in enumerate(route)}
        drones = []
        for d in range(inst.n_drones):
            sorties = []
            for (ff, dd, i, j, k, v), idx in reg["y"].items():
                name = reg.columns[idx].name
                if ff == f and dd == d and _binary(name, values.get(name, 0.0)):
                    if i not in pos or k not in pos:
                        raise ExtractionError(f"{name}: launch or retrieval node is off the route")
                    sorties.append(Sortie(i, j, k, v))
            sorties.sort(key=lambda s: (pos[s.i], pos[s.k]))
            drones.append(tuple(sorties))
        plans.append(TandemPlan(tuple(route), tuple(drones)))
        tt = inst.truck_time
        att = {n: values.get(reg.columns[reg["att"][(f, n)]].name, 0.0) for n in route}
        targets.append({route[p]: att[route[p + 1]] - tt[route[p]][route[p + 1]] for p in range(len(route) - 1)})
    sol = Solution(tuple(plans))
    return with_departures(inst, sol, targets) if keep_departures else sol


def encode_solution(model: ModelArtifact, solution: Solution) -> dict[str, float]:
    """Binary part of the raw values a solver would report for this solution."""
    reg = model.registry
    out: dict[str, float] = {}
    for f, plan in enumerate(solution.tandems):
        for a, b in zip(plan.route, plan.route[1:]):
            out[reg.columns[reg["x"][(f, a, b)]].name] = 1.0
        for n in plan.route:
            out[reg.columns[reg["q"][(f, n)]].name] = 1.0
        for d, sorties in enumerate(plan.drones):
            for s in sorties:
                key = (f, d, s.i, s.j, s.k, s.v)
                if key not in reg["y"]:
                    raise ExtractionError(f"sortie {s} has no column in this model")
                out[reg.columns[reg["y"][key]].name] = 1.0
    return out
