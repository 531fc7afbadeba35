"""Drone operations (i, j, k)^v: time, energy, feasibility and dominance elimination."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional

from .energy import FlightCondition, flight_power, hover_power
from .instance import Instance

RULES = ("general", "faster", "slower")


@dataclass(frozen=True, order=True)
class Operation:
    i: int
    j: int
    k: int
    v: float
    tau: float  # s
    e: float  # kJ

    @property
    def flight(self) -> tuple[int, int, int]:
        return (self.i, self.j, self.k)

    @property
    def key(self) -> tuple[int, int, int, float]:
        return (self.i, self.j, self.k, self.v)


@dataclass(frozen=True, order=True)
class ZTriple:
    l: int
    i: int
    k: int


class _Powers:
    """Per-instance cache of the four power figures the operation formulas need (kW)."""

    def __init__(self, instance: Instance):
        spec = instance.drone_spec
        self.hover0 = hover_power(spec, 0.0) / 1000.0
        self._spec = spec
        self._fly = lru_cache(maxsize=None)(self._fly_raw)
        self._hover = lru_cache(maxsize=None)(self._hover_raw)

    def _fly_raw(self, m: float, v: float) -> float:
        return flight_power(self._spec, FlightCondition(m, v)) / 1000.0

    def _hover_raw(self, m: float) -> float:
        return hover_power(self._spec, m) / 1000.0

    def fly(self, m: float, v: float) -> float:
        return self._fly(m, v)

    def hover(self, m: float) -> float:
        return self._hover(m)


_POWER_CACHE: dict[int, tuple[Instance, _Powers]] = {}


def powers(instance: Instance) -> _Powers:
    hit = _POWER_CACHE.get(id(instance))
    if hit is not None and hit[0] is instance:
        return hit[1]
    p = _Powers(instance)
    if len(_POWER_CACHE) > 64:
        _POWER_CACHE.clear()
    _POWER_CACHE[id(instance)] = (instance, p)
    return p


def hover_power_empty(instance: Instance) -> float:
    """P^H(0) in kW (kJ per second)."""
    return powers(instance).hover0


def operation_time(instance: Instance, i: int, j: int, k: int, v: float) -> float:
    if v <= 0:
        raise ValueError("speed must be > 0")
    dd = instance.drone_dist
    return dd[i][j] / v + instance.service_drone(j) + dd[j][k] / v


def operation_energy(instance: Instance, i: int, j: int, k: int, v: float) -> float:
    """kJ for launch at i, delivery to j carrying m_j, return empty to k."""
    if v <= 0:
        raise ValueError("speed must be > 0")
    p = powers(instance)
    dd = instance.drone_dist
    m = instance.m(j)
    return (dd[i][j] / v * p.fly(m, v)
            + instance.service_drone(j) * p.hover(m)
            + dd[j][k] / v * p.fly(0.0, v))


def make_operation(instance: Instance, i: int, j: int, k: int, v: float) -> Operation:
    return Operation(i, j, k, float(v), operation_time(instance, i, j, k, v),
                     operation_energy(instance, i, j, k, v))


def min_hover_energy(instance: Instance, op: Operation) -> float:
    """Operation energy plus the hover forced when the truck drives straight from i to k."""
    wait = max(instance.truck_time[op.i][op.k] - op.tau, 0.0)
    return op.e + wait * hover_power_empty(instance)


def is_feasible(instance: Instance, op: Operation) -> bool:
    return min_hover_energy(instance, op) <= instance.battery.available


def enumerate_feasible(instance: Instance, speeds: Optional[Iterable[float]] = None) -> list[Operation]:
    """All energy-feasible operations in canonical (i, j, k, v) order."""
    speeds = sorted(instance.speeds if speeds is None else speeds)
    out = []
    for j in instance.eligible_customers:
        for i in instance.departure_nodes:
            if i == j:
                continue
            for k in instance.arrival_nodes:
                if k == i or k == j:
                    continue
                for v in speeds:
                    op = make_operation(instance, i, j, k, v)
                    if is_feasible(instance, op):
                        out.append(op)
    out.sort()
    return out


def by_speed(ops: Iterable[Operation]) -> dict[float, list[Operation]]:
    out: dict[float, list[Operation]] = defaultdict(list)
    for op in ops:
        out[op.v].append(op)
    return dict(sorted(out.items()))


def detour_energy(instance: Instance, op: Operation, l: int) -> float:
    """Energy incl. the hover forced if the truck serves l between i and k."""
    tt = instance.truck_time
    truck = tt[op.i][l] + instance.service_truck(l) + tt[l][op.k]
    return op.e + max(truck - op.tau, 0.0) * hover_power_empty(instance)


def admits_detour(instance: Instance, op: Operation) -> bool:
    cap = instance.battery.available
    return any(detour_energy(instance, op, l) <= cap
               for l in instance.customers if l not in (op.i, op.j, op.k))


@dataclass
class Elimination:
    kept: list[Operation]
    removed: dict[Operation, str]  # op -> rule that removed it
    counts: dict[str, int]

    @property
    def n_removed(self) -> int:
        return len(self.removed)


def _dominance_edges(instance: Instance, ops: list[Operation]) -> dict[Operation, list[tuple[Operation, str]]]:
    """Edges dominated -> (dominator, rule) for every pair of speeds of one flight."""
    ph = hover_power_empty(instance)
    flights: dict[tuple, list[Operation]] = defaultdict(list)
    for op in ops:
        flights[op.flight].append(op)
    edges: dict[Operation, list[tuple[Operation, str]]] = defaultdict(list)
    detour_cache: dict[Operation, bool] = {}

    def detour(op):
        if op not in detour_cache:
            detour_cache[op] = admits_detour(instance, op)
        return detour_cache[op]

    for flight, group in flights.items():
        if len(group) < 2:
            continue
        group.sort(key=lambda o: o.v)
        t_truck = instance.truck_time[flight[0]][flight[2]]
        for a, slow in enumerate(group):
            for fast in group[a + 1:]:
                catch_up = (slow.tau - fast.tau) * ph
                if fast.e + catch_up <= slow.e:
                    edges[slow].append((fast, "general"))
                if slow.tau <= t_truck and slow.e <= fast.e + catch_up:
                    edges[fast].append((slow, "faster"))
                if (slow.tau > t_truck
                        and fast.e + max(t_truck - fast.tau, 0.0) * ph <= slow.e
                        and not detour(slow) and not detour(fast)):
                    edges[slow].append((fast, "slower"))
    return edges


def _strong_components(nodes: list, succ) -> list[list]:
    """Tarjan's algorithm, iterative; components in reverse topological order."""
    index, low, on_stack, stack, comps = {}, {}, set(), [], []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(succ(nxt))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    x = stack.pop()
                    on_stack.discard(x)
                    comp.append(x)
                    if x == node:
                        break
                comps.append(comp)
    return comps


def eliminate_dominated(ops: Iterable[Operation], instance: Instance) -> Elimination:
    """Remove operations dominated by another speed of the same flight.

    Predicates are evaluated on the input set. An operation is dropped only if
    a chain of dominators leads to an operation that is kept; inside a cycle of
    mutual dominance (exact ties) the slowest speed survives.
    """
    ops = sorted(set(ops))
    edges = _dominance_edges(instance, ops)
    succ = lambda op: [d for d, _ in edges.get(op, ())]
    comps = _strong_components(ops, succ)
    comp_of = {op: n for n, comp in enumerate(comps) for op in comp}
    kept = set()
    for n, comp in enumerate(comps):
        exits = any(comp_of[d] != n for op in comp for d in succ(op))
        if not exits:
            kept.add(min(comp, key=lambda o: o.v))
    # attribute each removal to the rule of its first step towards a kept operation
    removed: dict[Operation, str] = {}
    resolved = {op: None for op in kept}
    for comp in comps:  # reverse topological order: successors are resolved first
        pending = [op for op in comp if op not in kept]
        while pending:
            rest = []
            for op in pending:
                step = next(((d, r) for d, r in edges[op] if d in resolved), None)
                if step is None:
                    rest.append(op)
                    continue
                removed[op] = step[1]
                resolved[op] = step[0]
            if len(rest) == len(pending):
                raise AssertionError("dominance chain does not reach a kept operation")
            pending = rest
    counts = {r: 0 for r in RULES}
    for r in removed.values():
        counts[r] += 1
    return Elimination(sorted(kept), removed, counts)


def ztriples(instance: Instance, ops: Iterable[Operation], eliminate: bool = True) -> list[ZTriple]:
    """Index set of the airborne-at-l variables.

    Without elimination every pairwise-distinct (l, i, k) is returned. With
    elimination a triple survives only if some operation from i to k, not
    serving l, stays within the battery when the truck detours through l.
    """
    if not eliminate:
        return [ZTriple(l, i, k)
                for l in instance.customers
                for i in instance.departure_nodes
                for k in instance.arrival_nodes
                if len({l, i, k}) == 3]
    cap = instance.battery.available
    pairs: dict[tuple[int, int], list[Operation]] = defaultdict(list)
    for op in ops:
        pairs[(op.i, op.k)].append(op)
    out = []
    for (i, k), group in pairs.items():
        for l in instance.customers:
            if l in (i, k):
                continue
            if any(op.j != l and detour_energy(instance, op, l) <= cap for op in group):
                out.append(ZTriple(l, i, k))
    out.sort()
    return out


@dataclass
class Preprocessed:
    all_ops: list[Operation]
    ops: list[Operation]
    z: list[ZTriple]
    elimination: Optional[Elimination]


def preprocess(instance: Instance, dominance: bool = True, zelim: bool = True,
               speeds: Optional[Iterable[float]] = None) -> Preprocessed:
    all_ops = enumerate_feasible(instance, speeds)
    elim = eliminate_dominated(all_ops, instance) if dominance else None
    ops = elim.kept if elim else all_ops
    return Preprocessed(all_ops, ops, ztriples(instance, ops, zelim), elim)


def write_operations_csv(path, ops: Iterable[Operation], removed: Optional[dict] = None) -> Path:
    removed = removed or {}
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "k", "v", "tau_s", "e_kJ", "eliminated_by"])
        for op in sorted(ops):
            w.writerow([op.i, op.j, op.k, repr(op.v), repr(op.tau), repr(op.e), removed.get(op, "")])
    return path
