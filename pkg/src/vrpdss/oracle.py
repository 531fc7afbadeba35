"""Exact enumeration solver for tiny instances.

Every assignment of customers to truck or drone, every truck order and every
sortie choice (launch, retrieval, speed, drone) is enumerated with cost-bound
pruning. A structure is priced by the timeline simulator when its earliest
schedule is provably optimal, and otherwise by an exact timing LP (truck
waits, launch times, hover and charging as continuous variables).
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .instance import Instance
from .operations import hover_power_empty, operation_energy, operation_time
from .solution import (CostBreakdown, Solution, Sortie, TandemPlan, cost_breakdown, simulate_timeline,
                       with_departures)

COST_TOL = 1e-9


class OracleError(RuntimeError):
    """Guard exceeded, enumeration limit hit or no feasible solution."""


@dataclass(frozen=True)
class OracleConfig:
    max_customers: int = 7
    speeds: Optional[tuple[float, ...]] = None  # subset of the instance speeds
    n_tandems: Optional[int] = None
    n_drones: Optional[int] = None
    allowed_ops: Optional[frozenset] = None  # (i, j, k, v) keys; None allows all
    max_leaves: int = 2_000_000

    def __post_init__(self):
        if self.speeds is not None and len(self.speeds) == 0:
            raise ValueError("speed subset must be nonempty")
        if self.max_customers < 1:
            raise ValueError("max_customers must be >= 1")


@dataclass
class OracleStats:
    routes: int = 0
    leaves: int = 0
    lp_solves: int = 0
    pruned: int = 0


@dataclass
class OracleResult:
    solution: Solution
    cost: CostBreakdown  # recomputed by the simulator
    objective: float
    stats: OracleStats = field(default_factory=OracleStats)


@dataclass(frozen=True)
class _Choice:
    j: int
    f: int
    pi: int
    pk: int
    v: float
    tau: float
    e: float
    hover_lb: float


class _Search:
    def __init__(self, instance: Instance, cfg: OracleConfig):
        self.inst = instance
        self.cfg = cfg
        self.n_tandems = cfg.n_tandems or instance.n_tandems
        self.n_drones = instance.n_drones if cfg.n_drones is None else cfg.n_drones
        speeds = instance.speeds if cfg.speeds is None else cfg.speeds
        bad = set(speeds) - set(instance.speeds)
        if bad:
            raise ValueError(f"speeds {sorted(bad)} are not available in the instance")
        self.speeds = tuple(sorted(speeds))
        self.ph = hover_power_empty(instance)
        self.cap = instance.battery.available
        c = instance.costs
        self.fuel, self.wage, self.power = c.fuel_per_km, c.wage_per_s, c.energy_per_kJ
        self.tl = instance.times.launch_prep
        self.best: Optional[tuple[float, tuple, Solution]] = None
        self.stats = OracleStats()
        self._ops = self._operation_table()

    def _operation_table(self) -> dict[int, list[tuple[int, int, float, float, float]]]:
        """Per drone customer: (i, k, v, tau, e) with e within the available energy."""
        inst, allowed = self.inst, self.cfg.allowed_ops
        table: dict[int, list] = {}
        for j in inst.eligible_customers:
            rows = []
            for i in inst.departure_nodes:
                for k in inst.arrival_nodes:
                    if len({i, j, k}) < 3:
                        continue
                    for v in self.speeds:
                        if allowed is not None and (i, j, k, v) not in allowed:
                            continue
                        e = operation_energy(inst, i, j, k, v)
                        if e <= self.cap + 1e-9:
                            rows.append((i, k, v, operation_time(inst, i, j, k, v), e))
            table[j] = rows
        return table

    @property
    def bound(self) -> float:
        return math.inf if self.best is None else self.best[0]

    # truck routes

    def _route_cost(self, route: tuple[int, ...]) -> tuple[float, float]:
        inst = self.inst
        t = dist = 0.0
        for a, b in zip(route, route[1:]):
            t += inst.service_truck(a) + inst.truck_time[a][b]
            dist += inst.truck_dist[a][b]
        return dist, t

    def _orders(self, block: list[int], budget: float):
        """Permutations of block whose elapsed cost stays below budget."""
        inst = self.inst
        n = len(block)
        rest_service = sum(inst.service_truck(x) for x in block)
        path = [0]
        used = [False] * n

        def rec(dist: float, t: float, service_left: float):
            if len(path) == n + 1:
                yield tuple(path) + (inst.end,)
                return
            last = path[-1]
            for idx in range(n):
                if used[idx]:
                    continue
                x = block[idx]
                d2 = dist + inst.truck_dist[last][x]
                t2 = t + inst.service_truck(last) + inst.truck_time[last][x]
                # service_left still contains x and every node not yet visited
                if self.fuel * d2 + self.wage * (t2 + service_left) > budget():
                    self.stats.pruned += 1
                    continue
                used[idx] = True
                path.append(x)
                yield from rec(d2, t2, service_left - inst.service_truck(x))
                path.pop()
                used[idx] = False

        yield from rec(0.0, 0.0, rest_service)

    def _route_sets(self, truck: list[int], extra: float):
        """Canonical route tuples (one per tandem) covering the truck customers."""
        F = self.n_tandems
        budget = lambda: self.bound - extra + COST_TOL
        for labels in itertools.product(range(F), repeat=len(truck)):
            blocks = [[x for x, lab in zip(truck, labels) if lab == f] for f in range(F)]
            keys = [b[0] if b else math.inf for b in blocks]
            # tandems are interchangeable: nonempty blocks ordered by first customer, empties last
            if any(keys[a] >= keys[a + 1] and keys[a] != math.inf for a in range(F - 1)):
                continue
            if any(keys[a] == math.inf and keys[a + 1] != math.inf for a in range(F - 1)):
                continue
            for combo in itertools.product(*(list(self._orders(b, budget)) for b in blocks)):
                yield combo

    # search

    def run(self) -> None:
        inst = self.inst
        eligible = [j for j in inst.eligible_customers if self._ops[j]] if self.n_drones else []
        subsets = []
        for size in range(len(eligible), -1, -1):
            subsets.extend(itertools.combinations(eligible, size))
        # truck-only first gives an early incumbent
        subsets.sort(key=lambda s: (len(s) != 0, -len(s), s))
        for J in subsets:
            truck = [x for x in inst.customers if x not in J]
            min_e = sum(min(o[4] for o in self._ops[j]) for j in J)
            for routes in self._route_sets(truck, self.power * min_e):
                self.stats.routes += 1
                self._explore(routes, list(J), min_e)

    def _explore(self, routes: tuple[tuple[int, ...], ...], J: list[int], min_e: float) -> None:
        inst = self.inst
        dist = sum(self._route_cost(r)[0] for r in routes)
        base = self.fuel * dist
        plan = [[[] for _ in range(self.n_drones)] for _ in routes]
        lb0 = base + self.wage * sum(self._completion(r, p) for r, p in zip(routes, plan)) + self.power * min_e
        if lb0 > self.bound + COST_TOL:
            self.stats.pruned += 1
            return
        options = {j: self._choices(routes, j) for j in J}
        if any(not options[j] for j in J):
            return
        order = sorted(J, key=lambda j: (len(options[j]), j))
        min_rest = [0.0] * (len(order) + 1)
        for n in range(len(order) - 1, -1, -1):
            min_rest[n] = min_rest[n + 1] + min(o.e for o in options[order[n]])
        self._dfs(routes, plan, order, options, 0, base, 0.0, min_rest)

    def _choices(self, routes, j: int) -> list[_Choice]:
        inst = self.inst
        out = []
        for f, r in enumerate(routes):
            pos = {n: p for p, n in enumerate(r)}
            for i, k, v, tau, e in self._ops[j]:
                if i not in pos or k not in pos or pos[i] >= pos[k]:
                    continue
                pi, pk = pos[i], pos[k]
                gap = sum(inst.truck_time[r[p]][r[p + 1]] for p in range(pi, pk))
                gap += sum(inst.service_truck(r[p]) for p in range(pi + 1, pk))
                h = max(gap - tau, 0.0)
                if h > inst.times.max_hover + 1e-9 or e + self.ph * h > self.cap + 1e-9:
                    continue
                out.append(_Choice(j, f, pi, pk, v, tau, e, h))
        return out

    def _completion(self, route, drones) -> float:
        """Earliest arrival at the end depot with earliest launches (pass one)."""
        inst = self.inst
        starts = [{c.pi: c for c in d} for d in drones]
        ends = [{c.pk: c for c in d} for d in drones]
        launch: dict[int, float] = {}
        a = 0.0
        last = len(route) - 1
        for p, n in enumerate(route):
            if p > 0:
                a = dep + inst.truck_time[route[p - 1]][n]
            if p == last:
                break
            ready = a + inst.service_truck(n)
            for d in range(len(drones)):
                back = a
                c = ends[d].get(p)
                if c is not None:
                    back = max(a, launch[id(c)] + c.tau)
                    ready = max(ready, back)
                c = starts[d].get(p)
                if c is not None:
                    launch[id(c)] = back + self.tl
                    ready = max(ready, back + self.tl)
            dep = ready
        # drones retrieved at the end depot do not delay the truck
        return a

    def _dfs(self, routes, plan, order, options, n, base, energy, min_rest) -> None:
        comp = sum(self._completion(r, p) for r, p in zip(routes, plan))
        lb = base + self.wage * comp + self.power * (energy + min_rest[n])
        if lb > self.bound + COST_TOL:
            self.stats.pruned += 1
            return
        if n == len(order):
            self._leaf(routes, plan, lb)
            return
        j = order[n]
        for ch in options[j]:
            drones = plan[ch.f]
            used = sum(1 for d in drones if d)
            for d in range(min(used + 1, self.n_drones)):
                if any(not (c.pk <= ch.pi or ch.pk <= c.pi) for c in drones[d]):
                    continue
                drones[d].append(ch)
                self._dfs(routes, plan, order, options, n + 1, base,
                          energy + ch.e + self.ph * ch.hover_lb, min_rest)
                drones[d].pop()

    def _solution(self, routes, plan) -> Solution:
        tandems = []
        for r, drones in zip(routes, plan):
            ds = tuple(tuple(Sortie(r[c.pi], c.j, r[c.pk], c.v) for c in sorted(d, key=lambda c: c.pi))
                       for d in drones if d)
            ds = ds + tuple(() for _ in range(self.n_drones - len(ds)))
            tandems.append(TandemPlan(r, ds))
        return Solution(tuple(tandems))

    def _offer(self, cost: float, sol: Solution) -> None:
        key = sol.encoding()
        if self.best is None or cost < self.best[0] - COST_TOL or (
                cost <= self.best[0] + COST_TOL and key < self.best[1]):
            self.best = (cost, key, sol)

    def _leaf(self, routes, plan, lb: float) -> None:
        self.stats.leaves += 1
        if self.stats.leaves > self.cfg.max_leaves:
            raise OracleError(f"enumeration limit of {self.cfg.max_leaves} structures exceeded")
        sol = self._solution(routes, plan)
        sched = simulate_timeline(self.inst, sol, auto_wait=False)
        if sched.feasible:
            cost = cost_breakdown(self.inst, sched).total
            if cost <= lb + COST_TOL:
                self._offer(cost, sol)
                return
        self.stats.lp_solves += 1
        res = timing_lp(self.inst, sol)
        if res is None:
            return
        value, departures = res
        if value > self.bound + COST_TOL:
            return
        timed = with_departures(self.inst, sol, departures)
        sched = simulate_timeline(self.inst, timed, auto_wait=False)
        if sched.feasible:
            value = min(value, cost_breakdown(self.inst, sched).total)
        self._offer(value, timed)


def timing_lp(instance: Instance, solution: Solution) -> Optional[tuple[float, list[dict[int, float]]]]:
    """Minimum cost of a fixed structure over all schedules.

    Returns (objective, per-tandem departure targets) or None if infeasible.
    Departure targets are the latest departures consistent with the arrival
    times, so waiting replaces any travel slack.
    """
    inst = instance
    bat, times, costs = inst.battery, inst.times, inst.costs
    E, floor, pc = bat.E, bat.floor, bat.P_C
    ph = hover_power_empty(inst)
    tl = times.launch_prep
    bounds: list[tuple[float, Optional[float]]] = []
    obj: list[float] = []
    rows, cols, vals, rhs = [], [], [], []
    const = 0.0

    def var(lo: float = 0.0, hi: Optional[float] = None, cost: float = 0.0) -> int:
        bounds.append((lo, hi))
        obj.append(cost)
        return len(bounds) - 1

    def le(terms: list[tuple[int, float]], bound: float) -> None:
        for c, v in terms:
            rows.append(len(rhs))
            cols.append(c)
            vals.append(v)
        rhs.append(bound)

    layout = []
    for plan in solution.tandems:
        r = plan.route
        m = len(r)
        end = m - 1
        const += costs.fuel_per_km * sum(inst.truck_dist[x][y] for x, y in zip(r, r[1:]))
        a = [var() for _ in range(m)]
        obj[a[end]] = costs.wage_per_s
        bounds[a[end]] = (0.0, times.max_route)
        d = [var() for _ in range(end)]
        layout.append((r, a))
        for p in range(end):
            le([(a[p], 1.0), (d[p], -1.0)], -inst.service_truck(r[p]))
            le([(d[p], 1.0), (a[p + 1], -1.0)], -inst.truck_time[r[p]][r[p + 1]])
            if p > 0:
                le([(d[p], 1.0), (a[p], -1.0)], times.max_stationary)
        pos = {n: p for p, n in enumerate(r)}
        for sorties in plan.drones:
            spans = sorted((pos[s.i], pos[s.k], s) for s in sorties)
            airborne = {q for pi, pk, _ in spans for q in range(pi + 1, pk)}
            launched = {pi for pi, _, _ in spans}
            present = [p for p in range(m) if p not in airborne]
            energy = {p: var(lo=floor, hi=E) for p in present}
            charge = {p: var(hi=times.max_stationary if p > 0 else None) for p in present if p < end}
            # time the drone is back on the truck at p: (terms, constant)
            ready = {p: ([(a[p], 1.0)], 0.0) for p in present}
            for pi, pk, s in spans:
                tau = operation_time(inst, s.i, s.j, s.k, s.v)
                e = operation_energy(inst, s.i, s.j, s.k, s.v)
                const += costs.energy_per_kJ * e
                L = var()
                h = var(hi=times.max_hover, cost=costs.energy_per_kJ * ph)
                terms, shift = ready[pi]
                le(terms + [(charge[pi], 1.0), (L, -1.0)], -tl - shift)
                le([(L, 1.0), (d[pi], -1.0)], 0.0)
                le([(a[pk], 1.0), (L, -1.0), (h, -1.0)], tau)
                ready[pk] = ([(L, 1.0), (h, 1.0)], tau)
                le([(energy[pk], 1.0), (energy[pi], -1.0), (charge[pi], -pc), (h, ph)], -e)
            for p in present:
                if p == end:
                    continue
                le([(energy[p], 1.0), (charge[p], pc)], E)
                if p in launched:
                    continue
                terms, shift = ready[p]
                le(terms + [(charge[p], 1.0), (d[p], -1.0)], -shift)
                if p + 1 in energy:
                    w = var(hi=1.0)
                    travel = inst.truck_time[r[p]][r[p + 1]]
                    le([(energy[p + 1], 1.0), (energy[p], -1.0), (charge[p], -pc), (w, -travel * pc)], 0.0)
    A = coo_matrix((vals, (rows, cols)), shape=(len(rhs), len(bounds))).tocsr()
    res = linprog(np.array(obj), A_ub=A, b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0:
        return None
    x = res.x
    deps = [{r[p]: float(x[a[p + 1]]) - inst.truck_time[r[p]][r[p + 1]] for p in range(len(r) - 1)}
            for r, a in layout]
    return float(res.fun) + const, deps


def brute_force_optimal(instance: Instance, cfg: OracleConfig = OracleConfig()) -> OracleResult:
    if instance.c > cfg.max_customers:
        raise OracleError(f"{instance.c} customers exceed the oracle guard of {cfg.max_customers}")
    search = _Search(instance, cfg)
    search.run()
    if search.best is None:
        raise OracleError("no feasible solution found (a truck-only plan should always exist)")
    value, _, sol = search.best
    sched = simulate_timeline(instance, sol, auto_wait=False)
    return OracleResult(sol, cost_breakdown(instance, sched), value, search.stats)


@dataclass
class ComparisonRow:
    label: str
    speeds: tuple[float, ...]
    objective: float
    delta_pct: float  # DSS relative to this row (negative = DSS cheaper)


def compare_vrpd_vs_dss(instance: Instance, speeds: Optional[Iterable[float]] = None,
                        cfg: OracleConfig = OracleConfig()) -> list[ComparisonRow]:
    """One oracle run per singleton speed plus one with the full speed set."""
    speeds = tuple(sorted(instance.speeds if speeds is None else speeds))
    rows = []
    results = {}
    for v in speeds:
        results[(v,)] = brute_force_optimal(instance, _with(cfg, speeds=(v,))).objective
    dss = brute_force_optimal(instance, _with(cfg, speeds=speeds)).objective
    for key, value in results.items():
        rows.append(ComparisonRow(f"VRPD v={key[0]:g}", key, value, 100.0 * (dss - value) / value))
    rows.append(ComparisonRow("VRPD-DSS", speeds, dss, 0.0))
    return rows


def _with(cfg: OracleConfig, **changes) -> OracleConfig:
    return replace(cfg, **changes)


def write_comparison_csv(path, rows: list[ComparisonRow]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "speeds_mps", "objective_usd", "dss_delta_pct"])
        for r in rows:
            w.writerow([r.label, " ".join(f"{v:g}" for v in r.speeds), repr(r.objective), repr(r.delta_pct)])
    return path
