"""Integer start values for the solver: a truck-only tour and a full integer encoding."""
from __future__ import annotations

from ..instance import Instance
from ..solution import Solution, TandemPlan, check_feasibility
from .model import ModelArtifact


def nearest_neighbour_tours(instance: Instance) -> Solution:
    """Truck-only plan: greedy nearest-neighbour tours of at most ceil(c / |F|) customers each."""
    tt = instance.truck_time
    left = set(instance.customers)
    quota = -(-instance.c // instance.n_tandems)
    plans = []
    for _ in range(instance.n_tandems):
        route, here = [0], 0
        while left and len(route) - 1 < quota:
            here = min(left, key=lambda j: (tt[here][j], j))
            route.append(here)
            left.discard(here)
        route.append(instance.end)
        plans.append(TandemPlan(tuple(route), tuple(() for _ in range(instance.n_drones))))
    return Solution(tuple(plans))


def integer_start(model: ModelArtifact, solution: Solution) -> dict[str, float]:
    """Values of every integer column implied by the solution (zeros omitted)."""
    reg = model.registry
    inst = model.instance
    end = inst.end
    out: dict[str, float] = {}

    def put(family: str, key: tuple, value: float = 1.0) -> None:
        idx = reg[family].get(key)
        if idx is None:
            raise KeyError(f"{family}{key} has no column in this model")
        if value:
            out[reg.columns[idx].name] = float(value)

    for f, plan in enumerate(solution.tandems):
        r = plan.route
        if len(r) == 2 and not any(plan.drones):
            continue
        pos = {n: p for p, n in enumerate(r)}
        for a, b in zip(r, r[1:]):
            put("x", (f, a, b))
        for n in r:
            put("q", (f, n))
        for n in r[1:-1]:
            put("u", (f, n), pos[n])
        for a in r[:-1]:
            for b in r[pos[a] + 1:]:
                put("p", (f, a, b))
        for a in r[1:-1]:
            for b in r[1:-1]:
                if a < b:
                    put("b", (f, a, b))
        for d, sorties in enumerate(plan.drones):
            for s in sorties:
                put("y", (f, d, s.i, s.j, s.k, s.v))
                for l in r[pos[s.i] + 1:pos[s.k]]:
                    put("z", (f, d, l, s.i, s.k))
    return out


def default_start(model: ModelArtifact) -> dict[str, float] | None:
    """Integer start from the nearest-neighbour tours, or None if they break a cap."""
    sol = nearest_neighbour_tours(model.instance)
    if check_feasibility(model.instance, sol):
        return None
    return integer_start(model, sol)
