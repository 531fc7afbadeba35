"""Solutions, time/energy simulation, feasibility checking and cost breakdown.

The simulator fixes the truck schedule first (earliest departures, plus any
explicit per-node waits) and then places every launch so that hover is minimal
while the battery stays within bounds. Drones charge whenever they ride on the
truck outside launch preparation, up to the nominal energy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .instance import Instance
from .operations import hover_power_empty, operation_energy, operation_time

TIME_TOL = 1e-6
ENERGY_TOL = 1e-6
MONEY_TOL = 1e-6


class SolutionStructureError(ValueError):
    """Solution violates route/sortie structure so it cannot be simulated."""

    def __init__(self, violations: list["Violation"]):
        super().__init__("; ".join(v.message for v in violations))
        self.violations = violations


@dataclass(frozen=True, order=True)
class Sortie:
    i: int
    j: int
    k: int
    v: float


@dataclass(frozen=True)
class TandemPlan:
    route: tuple[int, ...]
    drones: tuple[tuple[Sortie, ...], ...] = ()
    waits: tuple[tuple[int, float], ...] = ()  # (node, extra stationary seconds)

    def wait_at(self, node: int) -> float:
        return sum(w for n, w in self.waits if n == node)


@dataclass(frozen=True)
class Solution:
    tandems: tuple[TandemPlan, ...]

    def encoding(self) -> tuple:
        """Canonical key used for deterministic tie-breaking."""
        return tuple((t.route, tuple(tuple((s.i, s.j, s.k, s.v) for s in d) for d in t.drones))
                     for t in self.tandems)

    def without_waits(self) -> "Solution":
        return Solution(tuple(TandemPlan(t.route, t.drones) for t in self.tandems))

    def to_dict(self) -> dict:
        return {"tandems": [
            {"route": list(t.route),
             "drones": [[[s.i, s.j, s.k, s.v] for s in d] for d in t.drones],
             "waits_s": [[n, w] for n, w in t.waits]}
            for t in self.tandems]}

    @staticmethod
    def from_dict(data: dict) -> "Solution":
        tandems = []
        for t in data["tandems"]:
            drones = tuple(tuple(Sortie(int(a), int(b), int(c), float(v)) for a, b, c, v in d)
                           for d in t.get("drones", []))
            waits = tuple((int(n), float(w)) for n, w in t.get("waits_s", []))
            tandems.append(TandemPlan(tuple(int(x) for x in t["route"]), drones, waits))
        return Solution(tuple(tandems))


def truck_only(routes: Iterable[Iterable[int]], n_drones: int = 0) -> Solution:
    return Solution(tuple(TandemPlan(tuple(r), tuple(() for _ in range(n_drones))) for r in routes))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    tandem: Optional[int] = None
    drone: Optional[int] = None
    sortie: Optional[Sortie] = None

    def to_dict(self) -> dict:
        d = {"code": self.code, "message": self.message, "tandem": self.tandem, "drone": self.drone}
        d["sortie"] = None if self.sortie is None else [self.sortie.i, self.sortie.j, self.sortie.k, self.sortie.v]
        return d


@dataclass
class SortieTiming:
    sortie: Sortie
    launch: float  # dtd at i
    arrival: float  # atd at k
    hover: float  # htd at k
    reunion: float  # max(att_k, atd_k)
    tau: float
    energy: float  # e of the operation, kJ
    depart_energy: float  # r_i + ltd_i * P_C
    residual: float  # r_k


@dataclass
class DroneSchedule:
    sorties: list[SortieTiming] = field(default_factory=list)
    ltd: dict[int, float] = field(default_factory=dict)  # effective charging at nodes, s
    w: dict[tuple[int, int], float] = field(default_factory=dict)  # effective charge share per arc
    r: dict[int, float] = field(default_factory=dict)  # energy on arrival / reunion, kJ
    tec: float = 0.0


@dataclass
class TandemSchedule:
    route: tuple[int, ...]
    att: dict[int, float]
    dtt: dict[int, float]
    distance_km: float
    drones: list[DroneSchedule]
    charge_kJ: list[float]

    @property
    def completion(self) -> float:
        return self.att[self.route[-1]]


@dataclass
class Schedule:
    tandems: list[TandemSchedule]
    violations: list[Violation]
    solution: Solution

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def tec(self) -> float:
        return sum(d.tec for t in self.tandems for d in t.drones)


# structure

def structure_violations(instance: Instance, solution: Solution) -> list[Violation]:
    out: list[Violation] = []
    end = instance.end
    truck_seen: dict[int, int] = {}
    drone_seen: dict[int, int] = {}
    speeds = set(instance.speeds)
    if len(solution.tandems) > instance.n_tandems:
        out.append(Violation("FLEET_SIZE", f"{len(solution.tandems)} tandems exceed fleet of {instance.n_tandems}"))
    for f, plan in enumerate(solution.tandems):
        r = plan.route
        if len(r) < 2 or r[0] != 0 or r[-1] != end:
            out.append(Violation("ROUTE_ENDPOINTS", f"tandem {f} route must start at 0 and end at {end}", f))
            continue
        for n in r[1:-1]:
            if n not in instance.customers:
                out.append(Violation("UNKNOWN_NODE", f"tandem {f} route visits non-customer {n}", f))
                continue
            truck_seen[n] = truck_seen.get(n, 0) + 1
        for n, w in plan.waits:
            if w < 0:
                out.append(Violation("WAIT_NEGATIVE", f"negative wait at node {n}", f))
            if n not in r or n == end:
                out.append(Violation("WAIT_NODE", f"wait at node {n} which the truck does not leave", f))
        if len(plan.drones) > instance.n_drones:
            out.append(Violation("FLEET_SIZE", f"tandem {f} uses {len(plan.drones)} drones", f))
        pos = {n: p for p, n in enumerate(r)}
        for d, sorties in enumerate(plan.drones):
            spans = []
            for s in sorties:
                drone_seen[s.j] = drone_seen.get(s.j, 0) + 1
                if len({s.i, s.j, s.k}) < 3 or s.i == end or s.k == 0 or s.j not in instance.customers:
                    out.append(Violation("SORTIE_NODES", f"sortie {s} needs distinct launch, customer and retrieval", f, d, s))
                    continue
                if not instance.drone_eligible[s.j - 1]:
                    out.append(Violation("SORTIE_INELIGIBLE", f"customer {s.j} cannot be served by drone", f, d, s))
                if s.v not in speeds:
                    out.append(Violation("SORTIE_SPEED", f"speed {s.v} not available", f, d, s))
                if s.i not in pos or s.k not in pos or pos[s.i] >= pos[s.k]:
                    out.append(Violation("SORTIE_ORDER", f"sortie {s}: launch must precede retrieval on the route", f, d, s))
                    continue
                spans.append((pos[s.i], pos[s.k], s))
            spans.sort(key=lambda t: (t[0], t[1]))
            for (a0, b0, s0), (a1, b1, s1) in zip(spans, spans[1:]):
                if a1 < b0:
                    out.append(Violation("LAUNCH_WHILE_AIRBORNE",
                                         f"drone {d} of tandem {f} launches {s1} before retrieval of {s0}", f, d, s1))
            if [s for _, _, s in spans] != [s for s in sorties if s.i in pos and s.k in pos and pos[s.i] < pos[s.k]]:
                out.append(Violation("SORTIE_SEQUENCE", f"drone {d} of tandem {f}: sorties not listed in route order", f, d))
    for j in instance.customers:
        n = truck_seen.get(j, 0) + drone_seen.get(j, 0)
        if n == 0:
            out.append(Violation("CUSTOMER_UNSERVED", f"customer {j} is not served"))
        elif n > 1:
            out.append(Violation("CUSTOMER_DUPLICATE", f"customer {j} is served {n} times"))
    return out


# simulation

def _truck_pass(instance: Instance, plan: TandemPlan, extra: dict[int, float]):
    """Earliest truck schedule with earliest launches; returns (att, dtt) by route position."""
    r = plan.route
    tt = instance.truck_time
    tl = instance.times.launch_prep
    launch_at = [dict() for _ in plan.drones]
    retrieve_at = [dict() for _ in plan.drones]
    for d, sorties in enumerate(plan.drones):
        for s in sorties:
            launch_at[d][s.i] = s
            retrieve_at[d][s.k] = s
    att, dtt = [0.0] * len(r), [0.0] * len(r)
    earliest_launch: dict[tuple[int, Sortie], float] = {}
    for p, n in enumerate(r):
        if p > 0:
            att[p] = dtt[p - 1] + tt[r[p - 1]][n]
        if p == len(r) - 1:
            break
        ready = att[p] + instance.service_truck(n)
        for d in range(len(plan.drones)):
            back = att[p]
            s_in = retrieve_at[d].get(n)
            if s_in is not None:
                back = max(att[p], earliest_launch[(d, s_in)] + operation_time(instance, s_in.i, s_in.j, s_in.k, s_in.v))
                ready = max(ready, back)
            s_out = launch_at[d].get(n)
            if s_out is not None:
                t = back + tl
                earliest_launch[(d, s_out)] = t
                ready = max(ready, t)
        dtt[p] = ready + plan.wait_at(n) + extra.get(n, 0.0)
    return att, dtt


def _first_feasible_launch(lo: float, hi: float, a_k: float, tau: float, q: float, t0: float,
                           e: float, floor: float, E: float, pc: float, ph: float) -> Optional[float]:
    """Earliest launch in [lo, hi] meeting the energy floor at reunion (None if none)."""

    def slack(L: float) -> float:
        charge = min(E, q + pc * max(L - t0, 0.0))
        return charge - e - ph * max(a_k - tau - L, 0.0) - floor

    if slack(hi) < -ENERGY_TOL:
        return None
    points = sorted({lo, hi, *(x for x in (t0 + (E - q) / pc, a_k - tau, t0) if lo < x < hi)})
    prev = None
    for x in points:
        sx = slack(x)
        if sx >= -ENERGY_TOL:
            if prev is None or sx <= 0.0:
                return x
            px, ps = prev
            # slack is linear between breakpoints
            return px + (x - px) * (-ps) / (sx - ps) if sx != ps else x
        prev = (x, sx)
    return hi


def _drone_pass(instance: Instance, plan: TandemPlan, d: int, att: list[float], dtt: list[float],
                f: int, violations: list[Violation]) -> tuple[DroneSchedule, Optional[tuple[int, float]]]:
    """Place launches for one drone; returns the schedule and, if energy fails, (launch node, kJ short)."""
    r = plan.route
    pos = {n: p for p, n in enumerate(r)}
    bat = instance.battery
    E, floor, pc = bat.E, bat.floor, bat.P_C
    ph = hover_power_empty(instance)
    tl = instance.times.launch_prep
    sorties = list(plan.drones[d])
    taus = [operation_time(instance, s.i, s.j, s.k, s.v) for s in sorties]
    es = [operation_energy(instance, s.i, s.j, s.k, s.v) for s in sorties]
    end_p = len(r) - 1
    # latest launch for each sortie that keeps all later ones schedulable
    latest = [0.0] * len(sorties)
    for n in range(len(sorties) - 1, -1, -1):
        s = sorties[n]
        pi, pk = pos[s.i], pos[s.k]
        back_by = math.inf if pk == end_p else dtt[pk]
        if n + 1 < len(sorties) and sorties[n + 1].i == s.k:
            back_by = min(back_by, latest[n + 1] - tl)
        latest[n] = min(dtt[pi], back_by - taus[n])

    sched = DroneSchedule()
    short: Optional[tuple[int, float]] = None
    state = {"level": E, "t": 0.0, "p": 0}  # aboard since t at route position p
    sched.r[r[0]] = E

    def charge_until(t_stop: float, p_stop: int) -> float:
        p, t, level = state["p"], state["t"], state["level"]
        while True:
            node = r[p]
            node_end = t_stop if p == p_stop else dtt[p]
            gain = min(max(node_end - t, 0.0) * pc, E - level)
            sched.ltd[node] = sched.ltd.get(node, 0.0) + gain / pc
            level += gain
            if p == p_stop:
                return level
            travel = instance.truck_time[node][r[p + 1]]
            gain = min(travel * pc, E - level)
            if travel > 0:
                sched.w[(node, r[p + 1])] = gain / pc / travel
            level += gain
            p, t = p + 1, att[p + 1]
            sched.r[r[p]] = level

    for n, s in enumerate(sorties):
        pi, pk = pos[s.i], pos[s.k]
        q, t_free = state["level"], state["t"]
        lo = max(att[pi], t_free) + tl
        hi = latest[n]
        if hi < lo - TIME_TOL:
            violations.append(Violation("SYNC", f"sortie {s} cannot be launched and retrieved in time", f, d, s))
            hi = lo
        L = _first_feasible_launch(lo, hi, att[pk], taus[n], q, t_free + tl, es[n], floor, E, pc, ph)
        if L is None:
            L = hi
            charged = min(E, q + pc * max(hi - tl - t_free, 0.0))
            need = es[n] + ph * max(att[pk] - taus[n] - hi, 0.0) + floor - charged
            if short is None:
                short = (s.i, need if E - charged >= need - ENERGY_TOL else math.inf)
            violations.append(Violation("ENERGY_UNDERFLOW",
                                        f"sortie {s} is {need:.3f} kJ short of the reserve", f, d, s))
        else:
            L = max(L, min(att[pk] - taus[n], hi))
        depart = charge_until(L - tl, pi)
        arrive = L + taus[n]
        hover = max(att[pk] - arrive, 0.0)
        if hover > instance.times.max_hover + TIME_TOL:
            violations.append(Violation("HOVER_CAP", f"sortie {s} hovers {hover:.1f} s at {s.k}", f, d, s))
        level = depart - es[n] - ph * hover
        reunion = max(att[pk], arrive)
        sched.sorties.append(SortieTiming(s, L, arrive, hover, reunion, taus[n], es[n], depart, level))
        sched.r[s.k] = level
        sched.tec += es[n] + ph * hover
        state.update(level=level, t=reunion, p=pk)
        if pk != end_p and reunion > dtt[pk] + TIME_TOL:
            violations.append(Violation("SYNC", f"drone {d} returns to {s.k} after the truck left", f, d, s))
    if state["p"] != end_p:
        state["level"] = charge_until(att[end_p], end_p)
    sched.r[r[end_p]] = state["level"]
    return sched, short


def simulate_timeline(instance: Instance, solution: Solution, auto_wait: bool = True,
                      max_rounds: int = 200) -> Schedule:
    """Simulate trucks and drones; violations are collected on the returned schedule."""
    bad = structure_violations(instance, solution)
    if bad:
        raise SolutionStructureError(bad)
    extra: list[dict[int, float]] = [dict() for _ in solution.tandems]
    for _ in range(max_rounds):
        tandems, violations, fixes = [], [], []
        for f, plan in enumerate(solution.tandems):
            att, dtt = _truck_pass(instance, plan, extra[f])
            drones, charge = [], []
            for d in range(len(plan.drones)):
                ds, short = _drone_pass(instance, plan, d, att, dtt, f, violations)
                drones.append(ds)
                charge.append(instance.battery.P_C * (sum(ds.ltd.values()) + sum(
                    w * instance.truck_time[a][b] for (a, b), w in ds.w.items())))
                if short is not None:
                    fixes.append((f, short))
            r = plan.route
            dist = sum(instance.truck_dist[a][b] for a, b in zip(r, r[1:]))
            tandems.append(TandemSchedule(r, dict(zip(r, att)), dict(zip(r[:-1], dtt[:-1])) | {r[-1]: att[-1]},
                                          dist, drones, charge))
        fixable = [(f, node, kj) for f, (node, kj) in fixes if math.isfinite(kj) and kj > ENERGY_TOL]
        if not auto_wait or not fixes or len(fixable) != len(fixes):
            break
        f, node, kj = fixable[0]
        extra[f][node] = extra[f].get(node, 0.0) + kj / instance.battery.P_C
    _check_caps(instance, solution, tandems, violations)
    if any(extra):
        waits = []
        for f, plan in enumerate(solution.tandems):
            merged = {n: plan.wait_at(n) for n, _ in plan.waits}
            for n, w in extra[f].items():
                merged[n] = merged.get(n, 0.0) + w
            waits.append(TandemPlan(plan.route, plan.drones, tuple(sorted(merged.items()))))
        solution = Solution(tuple(waits))
    return Schedule(tandems, violations, solution)


def _check_caps(instance: Instance, solution: Solution, tandems: list[TandemSchedule], violations: list[Violation]):
    t = instance.times
    for f, ts in enumerate(tandems):
        for n in ts.route[1:-1]:
            stay = ts.dtt[n] - ts.att[n]
            if stay > t.max_stationary + TIME_TOL:
                violations.append(Violation("STATIONARY_CAP", f"truck {f} stays {stay:.1f} s at {n}", f))
        if ts.completion > t.max_route + TIME_TOL:
            violations.append(Violation("ROUTE_DURATION", f"truck {f} returns at {ts.completion:.1f} s", f))


def check_feasibility(instance: Instance, solution: Solution, auto_wait: bool = True) -> list[Violation]:
    """All violated rules (empty list means feasible)."""
    bad = structure_violations(instance, solution)
    if bad:
        return bad
    return simulate_timeline(instance, solution, auto_wait).violations


# costs

@dataclass(frozen=True)
class CostBreakdown:
    wages: float
    fuel: float
    power: float

    @property
    def total(self) -> float:
        return self.wages + self.fuel + self.power

    def to_dict(self) -> dict:
        return {"wages": self.wages, "fuel": self.fuel, "power": self.power, "total": self.total}


def cost_terms(costs, completion_s: float, distance_km: float, tec_kJ: float) -> CostBreakdown:
    return CostBreakdown(costs.wage_per_h * completion_s / 3600.0,
                         costs.fuel_per_km * distance_km,
                         costs.energy_per_kJ * tec_kJ)


def cost_breakdown(instance: Instance, schedule: Schedule) -> CostBreakdown:
    return cost_terms(instance.costs,
                      sum(t.completion for t in schedule.tandems),
                      sum(t.distance_km for t in schedule.tandems),
                      schedule.tec)


def evaluate(instance: Instance, solution: Solution, auto_wait: bool = True) -> tuple[Schedule, CostBreakdown]:
    sched = simulate_timeline(instance, solution, auto_wait)
    return sched, cost_breakdown(instance, sched)


def with_departures(instance: Instance, solution: Solution, departures: list[dict[int, float]]) -> Solution:
    """Per-node waits that reproduce the given truck departure times (where reachable)."""
    plans = []
    for f, plan in enumerate(solution.tandems):
        base = TandemPlan(plan.route, plan.drones)
        target = departures[f]
        waits: dict[int, float] = {}
        for n in plan.route[:-1]:
            _, dtt = _truck_pass(instance, base, waits)
            p = plan.route.index(n)
            gap = target.get(n, dtt[p]) - dtt[p]
            if gap > TIME_TOL:
                waits[n] = gap
        plans.append(TandemPlan(plan.route, plan.drones, tuple(sorted(waits.items()))))
    return Solution(tuple(plans))


def solution_report(instance: Instance, schedule: Schedule) -> dict:
    cost = cost_breakdown(instance, schedule)
    return {
        "feasible": schedule.feasible,
        "violations": [v.to_dict() for v in schedule.violations],
        "cost": cost.to_dict(),
        "completion_s": [t.completion for t in schedule.tandems],
        "distance_km": [t.distance_km for t in schedule.tandems],
        "tec_kJ": schedule.tec,
        "solution": schedule.solution.to_dict(),
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)
