"""Constraint-matrix builder for the truck-and-drone MILP.

Rows are plain (name, group, coefficients, sense, rhs) records so the model can
be written to LP/MPS files and handed to any external solver. Group labels are
listed in GROUPS and CUT_GROUPS.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from ..instance import Instance
from ..operations import Operation, ZTriple, hover_power_empty

GROUPS = (
    "demand", "inflow", "outflow", "mtz", "order", "depot_before", "depot_after", "depot_pair",
    "pair", "pair_link_i", "pair_link_j", "pair_link_both",
    "retrieval", "arc_charge", "in_air", "exclusive", "depot_launch",
    "truck_time", "drone_arrival_lb", "drone_arrival_ub", "hover", "hover_cap", "charge_cap",
    "truck_service", "truck_after_drone", "stationary_cap", "drone_departure", "route_length",
    "energy_total", "energy_flight", "energy_departure", "energy_arc",
)
CUT_GROUPS = (
    "lb_truck_completion", "lb_drone_completion", "lb_completion_via", "lb_arrival_node",
    "lb_drone_departure_node", "fleet", "prec_truck", "prec_drone", "no_artificial_trip",
    "visit_during_flight", "lb_energy", "energy_total_recharge", "esec",
)


class ModelBuildError(ValueError):
    """Operations or triples do not match the instance."""


@dataclass(frozen=True)
class ModelOptions:
    completion_bounds: bool = True  # truck/drone completion and detour completion bounds
    node_bounds: bool = True  # arrival and drone departure bounds at customers
    fleet_cut: bool = True
    precedence_cuts: bool = True
    depot_trip_cut: bool = True
    flight_visit_cut: bool = True
    energy_lb_cut: bool = True
    energy_recharge_cut: bool = True

    @staticmethod
    def no_cuts() -> "ModelOptions":
        return ModelOptions(False, False, False, False, False, False, False, False)


@dataclass
class Column:
    name: str
    lb: float
    ub: float
    integer: bool
    obj: float = 0.0


@dataclass
class Row:
    name: str
    group: str
    coefs: list[tuple[int, float]]
    sense: str  # "<=", ">=", "="
    rhs: float

    def activity(self, values) -> float:
        return sum(v * values[c] for c, v in self.coefs)

    def violation(self, values) -> float:
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(lhs - self.rhs, 0.0)
        if self.sense == ">=":
            return max(self.rhs - lhs, 0.0)
        return abs(lhs - self.rhs)


INF = float("inf")


def _fmt_speed(v: float) -> str:
    return f"{v:g}".replace(".", "p").replace("-", "m")


class VarRegistry:
    """Dense column index with typed lookup tables per variable family."""

    FAMILIES = ("x", "y", "q", "b", "u", "p", "z", "att", "dtt", "atd", "dtd", "htd", "ltd", "r", "w", "tec")

    def __init__(self):
        self.columns: list[Column] = []
        self.by_name: dict[str, int] = {}
        self.maps: dict[str, dict[tuple, int]] = {f: {} for f in self.FAMILIES}
        self.y_ops: dict[int, Operation] = {}

    def add(self, family: str, key: tuple, name: str, lb: float, ub: float,
            integer: bool = False, obj: float = 0.0) -> int:
        if name in self.by_name:
            raise ModelBuildError(f"duplicate column {name}")
        idx = len(self.columns)
        self.columns.append(Column(name, lb, ub, integer, obj))
        self.by_name[name] = idx
        self.maps[family][key] = idx
        return idx

    def __getitem__(self, family: str) -> dict[tuple, int]:
        return self.maps[family]

    def __len__(self) -> int:
        return len(self.columns)

    def family_of(self, idx: int) -> str:
        return self.columns[idx].name.split("_", 1)[0]


@dataclass
class ModelArtifact:
    instance: Instance
    registry: VarRegistry
    rows: list[Row]
    ops: list[Operation]
    z: list[ZTriple]
    options: ModelOptions
    metadata: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[Column]:
        return self.registry.columns

    def group_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.group] = out.get(r.group, 0) + 1
        return out

    def objective(self, values) -> float:
        return sum(c.obj * values[i] for i, c in enumerate(self.columns) if c.obj)

    def add_row(self, row: Row) -> None:
        self.rows.append(row)

    def max_violation(self, values) -> tuple[float, Optional[Row]]:
        worst, where = 0.0, None
        for r in self.rows:
            v = r.violation(values)
            if v > worst:
                worst, where = v, r
        for i, c in enumerate(self.columns):
            v = max(c.lb - values[i], values[i] - c.ub, 0.0)
            if v > worst:
                worst, where = v, None
        return worst, where


class _Builder:
    def __init__(self, instance: Instance, ops: list[Operation], z: list[ZTriple], options: ModelOptions):
        self.inst = instance
        self.ops = ops
        self.z = z
        self.opt = options
        self.reg = VarRegistry()
        self.rows: list[Row] = []
        self._check_inputs()

    def _check_inputs(self) -> None:
        inst = self.inst
        n0, np_ = set(inst.departure_nodes), set(inst.arrival_nodes)
        eligible = set(inst.eligible_customers)
        for op in self.ops:
            if op.i not in n0 or op.k not in np_ or op.j not in eligible or len({op.i, op.j, op.k}) < 3:
                raise ModelBuildError(f"operation {op.key} does not fit the instance")
            if op.v not in inst.speeds:
                raise ModelBuildError(f"operation {op.key} uses unavailable speed {op.v}")
        for t in self.z:
            if t.l not in inst.customers or t.i not in n0 or t.k not in np_ or len({t.l, t.i, t.k}) < 3:
                raise ModelBuildError(f"z triple {t} does not fit the instance")

    def row(self, name: str, group: str, coefs: Iterable[tuple[int, float]], sense: str, rhs: float) -> None:
        merged: dict[int, float] = {}
        for c, v in coefs:
            merged[c] = merged.get(c, 0.0) + v
        self.rows.append(Row(name, group, [(c, v) for c, v in merged.items() if v != 0.0], sense, rhs))

    # variables

    def columns(self) -> None:
        inst, reg = self.inst, self.reg
        N, C, end = inst.nodes, inst.customers, inst.end
        c = inst.c
        bat, times, costs = inst.battery, inst.times, inst.costs
        for f in range(inst.n_tandems):
            for i in inst.departure_nodes:
                for j in inst.arrival_nodes:
                    if i != j:
                        reg.add("x", (f, i, j), f"x_f{f}_i{i}_j{j}", 0, 1, True,
                                costs.fuel_per_km * inst.truck_dist[i][j])
            for d in range(inst.n_drones):
                for op in self.ops:
                    idx = reg.add("y", (f, d, op.i, op.j, op.k, op.v),
                                  f"y_f{f}_d{d}_v{_fmt_speed(op.v)}_i{op.i}_j{op.j}_k{op.k}", 0, 1, True)
                    reg.y_ops[idx] = op
            for i in N:
                reg.add("q", (f, i), f"q_f{f}_i{i}", 0, 1, True)
            for a in C:
                for b in C:
                    if a < b:
                        reg.add("b", (f, a, b), f"b_f{f}_i{a}_j{b}", 0, 1, True)
            for a in C:
                reg.add("u", (f, a), f"u_f{f}_i{a}", 0, c, True)
            for i in inst.departure_nodes:
                for j in inst.arrival_nodes:
                    if i != j:
                        reg.add("p", (f, i, j), f"p_f{f}_i{i}_j{j}", 0, 1, True)
            for d in range(inst.n_drones):
                for t in self.z:
                    reg.add("z", (f, d, t.l, t.i, t.k), f"z_f{f}_d{d}_l{t.l}_i{t.i}_k{t.k}", 0, 1, True)
            for i in N:
                reg.add("att", (f, i), f"att_f{f}_i{i}", 0, INF, obj=costs.wage_per_s if i == end else 0.0)
                reg.add("dtt", (f, i), f"dtt_f{f}_i{i}", 0, INF)
            for d in range(inst.n_drones):
                for fam in ("atd", "dtd", "htd", "ltd"):
                    for i in N:
                        reg.add(fam, (f, d, i), f"{fam}_f{f}_d{d}_i{i}", 0, INF)
                for i in N:
                    reg.add("r", (f, d, i), f"r_f{f}_d{d}_i{i}", bat.floor, bat.E)
                for i in inst.departure_nodes:
                    for j in inst.arrival_nodes:
                        if i != j:
                            reg.add("w", (f, d, i, j), f"w_f{f}_d{d}_i{i}_j{j}", 0, 1)
                reg.add("tec", (f, d), f"tec_f{f}_d{d}", 0, INF, obj=costs.energy_per_kJ)

    # helpers

    def y_by(self, f: int, d: int):
        """Index lists of y columns grouped by (i, k), by j, by i and by k."""
        reg = self.reg
        by_ik, by_i, by_k = {}, {}, {}
        for op in self.ops:
            idx = reg["y"][(f, d, op.i, op.j, op.k, op.v)]
            by_ik.setdefault((op.i, op.k), []).append((idx, op))
            by_i.setdefault(op.i, []).append((idx, op))
            by_k.setdefault(op.k, []).append((idx, op))
        return by_ik, by_i, by_k

    def p(self, f: int, i: int, j: int) -> int:
        return self.reg["p"][(f, i, j)]

    # constraint groups

    def build(self) -> None:
        self.columns()
        inst, reg = self.inst, self.reg
        F, D = range(inst.n_tandems), range(inst.n_drones)
        C, N, end = inst.customers, inst.nodes, inst.end
        N0, Np = inst.departure_nodes, inst.arrival_nodes
        c = inst.c
        x, q = reg["x"], reg["q"]
        times, bat = inst.times, inst.battery
        M = times.max_route
        tt = inst.truck_time
        ph = hover_power_empty(inst)
        pc, E = bat.P_C, bat.E
        tl = times.launch_prep
        big = {i: M - tt[i][end] for i in N0}
        ops_per_j: dict[int, list[Operation]] = {}
        for op in self.ops:
            ops_per_j.setdefault(op.j, []).append(op)
        z_by_lik = {(t.l, t.i, t.k) for t in self.z}

        for j in C:
            coefs = [(q[(f, j)], 1.0) for f in F]
            for f in F:
                for d in D:
                    coefs += [(reg["y"][(f, d, op.i, op.j, op.k, op.v)], 1.0) for op in ops_per_j.get(j, [])]
            self.row(f"demand_j{j}", "demand", coefs, "=", 1.0)

        for f in F:
            for j in Np:
                self.row(f"inflow_f{f}_j{j}", "inflow",
                         [(x[(f, i, j)], 1.0) for i in N0 if i != j] + [(q[(f, j)], -1.0)], "=", 0.0)
            for i in N0:
                self.row(f"outflow_f{f}_i{i}", "outflow",
                         [(x[(f, i, j)], 1.0) for j in Np if j != i] + [(q[(f, i)], -1.0)], "=", 0.0)
            for i in C:
                for j in C:
                    if i == j:
                        continue
                    self.row(f"mtz_f{f}_i{i}_j{j}", "mtz",
                             [(reg["u"][(f, i)], 1.0), (reg["u"][(f, j)], -1.0),
                              (x[(f, i, j)], float(c)), (x[(f, j, i)], float(c - 2))], "<=", float(c - 1))
                    self.row(f"order_f{f}_i{i}_j{j}", "order",
                             [(self.p(f, i, j), float(c)), (reg["u"][(f, j)], -1.0), (reg["u"][(f, i)], 1.0)],
                             "<=", float(c - 1))
            for i in C:
                self.row(f"depot_before_f{f}_i{i}", "depot_before", [(self.p(f, 0, i), 1.0), (q[(f, i)], -1.0)], "=", 0.0)
                self.row(f"depot_after_f{f}_i{i}", "depot_after", [(self.p(f, i, end), 1.0), (q[(f, i)], -1.0)], "=", 0.0)
            self.row(f"depot_pair_f{f}", "depot_pair", [(self.p(f, 0, end), 1.0), (q[(f, 0)], -1.0)], "=", 0.0)
            for i in C:
                for j in C:
                    if i >= j:
                        continue
                    bij = reg["b"][(f, i, j)]
                    self.row(f"pair_f{f}_i{i}_j{j}", "pair",
                             [(self.p(f, i, j), 1.0), (self.p(f, j, i), 1.0), (bij, -1.0)], "=", 0.0)
                    self.row(f"pair_link_i_f{f}_i{i}_j{j}", "pair_link_i", [(bij, 1.0), (q[(f, i)], -1.0)], "<=", 0.0)
                    self.row(f"pair_link_j_f{f}_i{i}_j{j}", "pair_link_j", [(bij, 1.0), (q[(f, j)], -1.0)], "<=", 0.0)
                    self.row(f"pair_link_both_f{f}_i{i}_j{j}", "pair_link_both",
                             [(q[(f, i)], 1.0), (q[(f, j)], 1.0), (bij, -1.0)], "<=", 1.0)

            # truck timing
            att, dtt = reg["att"], reg["dtt"]
            for i in N0:
                for k in Np:
                    if i == k:
                        continue
                    self.row(f"truck_time_f{f}_i{i}_k{k}", "truck_time",
                             [(att[(f, k)], 1.0), (dtt[(f, i)], -1.0), (x[(f, i, k)], -(tt[i][k] + big[i]))],
                             ">=", -big[i])
            for i in N:
                self.row(f"truck_service_f{f}_i{i}", "truck_service",
                         [(dtt[(f, i)], 1.0), (att[(f, i)], -1.0)], ">=", inst.service_truck(i))
            for i in C:
                self.row(f"stationary_cap_f{f}_i{i}", "stationary_cap",
                         [(dtt[(f, i)], 1.0), (att[(f, i)], -1.0)], "<=", times.max_stationary)
            self.row(f"route_length_f{f}", "route_length", [(att[(f, end)], 1.0)], "<=", M)

            for d in D:
                self.drone_rows(f, d, big, z_by_lik)

        if self.opt.fleet_cut:
            rhs = (c - inst.n_drones * inst.n_tandems) / (inst.n_drones + 1)
            self.row("fleet", "fleet", [(q[(f, i)], 1.0) for f in F for i in C], ">=", rhs)
        for f in F:
            self.cut_rows(f)

    def drone_rows(self, f: int, d: int, big: dict[int, float], z_by_lik: set) -> None:
        inst, reg = self.inst, self.reg
        C, N, end = inst.customers, inst.nodes, inst.end
        N0, Np = inst.departure_nodes, inst.arrival_nodes
        x, q = reg["x"], reg["q"]
        att, dtt = reg["att"], reg["dtt"]
        atd, dtd, htd, ltd, r, w = (reg[k] for k in ("atd", "dtd", "htd", "ltd", "r", "w"))
        times, bat = inst.times, inst.battery
        tt = inst.truck_time
        ph = hover_power_empty(inst)
        pc, E = bat.P_C, bat.E
        tl = times.launch_prep
        by_ik, by_i, by_k = self.y_by(f, d)
        tag = f"f{f}_d{d}"

        for k in Np:
            if by_k.get(k):
                self.row(f"retrieval_{tag}_k{k}", "retrieval",
                         [(idx, 1.0) for idx, _ in by_k[k]] + [(q[(f, k)], -1.0)], "<=", 0.0)
        for i in N0:
            for k in Np:
                if i != k:
                    self.row(f"arc_charge_{tag}_i{i}_k{k}", "arc_charge",
                             [(w[(f, d, i, k)], 1.0), (x[(f, i, k)], -1.0)], "<=", 0.0)
        # airborne detection; eliminated triples keep the row without their z column
        for l in C:
            for i in N0:
                for k in Np:
                    if len({l, i, k}) < 3 or not by_ik.get((i, k)):
                        continue
                    coefs = [(self.p(f, i, l), 1.0), (self.p(f, l, k), 1.0)]
                    coefs += [(idx, 1.0) for idx, _ in by_ik[(i, k)]]
                    if (l, i, k) in z_by_lik:
                        coefs.append((reg["z"][(f, d, l, i, k)], -1.0))
                    self.row(f"in_air_{tag}_l{l}_i{i}_k{k}", "in_air", coefs, "<=", 2.0)
        z_at: dict[int, list[int]] = {}
        for t in self.z:
            z_at.setdefault(t.l, []).append(reg["z"][(f, d, t.l, t.i, t.k)])
        for l in C:
            coefs = [(w[(f, d, l, m)], 1.0) for m in Np if m != l]
            coefs += [(idx, 1.0) for idx, _ in by_i.get(l, [])]
            coefs += [(zi, 1.0) for zi in z_at.get(l, [])]
            coefs.append((q[(f, l)], -1.0))
            self.row(f"exclusive_{tag}_l{l}", "exclusive", coefs, "<=", 0.0)
        coefs = [(w[(f, d, 0, m)], 1.0) for m in Np]
        coefs += [(idx, 1.0) for idx, _ in by_i.get(0, [])]
        coefs.append((q[(f, 0)], -1.0))
        self.row(f"depot_launch_{tag}", "depot_launch", coefs, "<=", 0.0)

        # drone timing
        for (i, k), ys in sorted(by_ik.items()):
            Mi = big[i]
            self.row(f"drone_arrival_lb_{tag}_i{i}_k{k}", "drone_arrival_lb",
                     [(atd[(f, d, k)], 1.0), (dtd[(f, d, i)], -1.0)] + [(idx, -(op.tau + Mi)) for idx, op in ys],
                     ">=", -Mi)
            self.row(f"drone_arrival_ub_{tag}_i{i}_k{k}", "drone_arrival_ub",
                     [(atd[(f, d, k)], 1.0), (dtd[(f, d, i)], -1.0)] + [(idx, Mi - op.tau) for idx, op in ys],
                     "<=", Mi)
        for i in list(C) + [end]:
            self.row(f"hover_{tag}_i{i}", "hover",
                     [(htd[(f, d, i)], 1.0), (att[(f, i)], -1.0), (atd[(f, d, i)], 1.0)], ">=", 0.0)
            self.row(f"hover_cap_{tag}_i{i}", "hover_cap",
                     [(htd[(f, d, i)], 1.0), (q[(f, i)], -times.max_hover)], "<=", 0.0)
        for i in C:
            self.row(f"charge_cap_{tag}_i{i}", "charge_cap",
                     [(ltd[(f, d, i)], 1.0), (q[(f, i)], -times.max_stationary)], "<=", 0.0)
        for i in N:
            self.row(f"truck_after_drone_{tag}_i{i}", "truck_after_drone",
                     [(dtt[(f, i)], 1.0), (dtd[(f, d, i)], -1.0)], ">=", 0.0)
            self.row(f"drone_departure_{tag}_i{i}", "drone_departure",
                     [(dtd[(f, d, i)], 1.0), (atd[(f, d, i)], -1.0), (htd[(f, d, i)], -1.0), (ltd[(f, d, i)], -1.0)]
                     + [(idx, -tl) for idx, _ in by_i.get(i, [])], ">=", 0.0)

        # energy
        tec = reg["tec"][(f, d)]
        self.row(f"energy_total_{tag}", "energy_total",
                 [(tec, 1.0)] + [(idx, -op.e) for ys in by_ik.values() for idx, op in ys]
                 + [(htd[(f, d, i)], -ph) for i in list(C) + [end]], "=", 0.0)
        for (i, k), ys in sorted(by_ik.items()):
            self.row(f"energy_flight_{tag}_i{i}_k{k}", "energy_flight",
                     [(r[(f, d, k)], 1.0), (r[(f, d, i)], -1.0), (ltd[(f, d, i)], -pc), (htd[(f, d, k)], ph)]
                     + [(idx, op.e + E) for idx, op in ys], "<=", E)
        for i in N0:
            self.row(f"energy_departure_{tag}_i{i}", "energy_departure",
                     [(r[(f, d, i)], 1.0), (ltd[(f, d, i)], pc)], "<=", E)
        for i in N0:
            for j in Np:
                if i == j:
                    continue
                self.row(f"energy_arc_{tag}_i{i}_j{j}", "energy_arc",
                         [(r[(f, d, j)], 1.0), (r[(f, d, i)], -1.0), (ltd[(f, d, i)], -pc),
                          (w[(f, d, i, j)], -tt[i][j] * pc), (x[(f, i, j)], E)], "<=", E)

    def cut_rows(self, f: int) -> None:
        inst, reg, opt = self.inst, self.reg, self.opt
        C, N, end = inst.customers, inst.nodes, inst.end
        N0, Np = inst.departure_nodes, inst.arrival_nodes
        x, q = reg["x"], reg["q"]
        att, dtt = reg["att"], reg["dtt"]
        tt = inst.truck_time
        bat, times = inst.battery, inst.times
        pc = bat.P_C
        tl = times.launch_prep
        arcs = [(i, j) for i in N0 for j in Np if i != j]
        if opt.completion_bounds:
            self.row(f"lb_truck_completion_f{f}", "lb_truck_completion",
                     [(att[(f, end)], 1.0)] + [(x[(f, i, j)], -(tt[i][j] + inst.service_truck(j))) for i, j in arcs],
                     ">=", 0.0)
            for i in C:
                self.row(f"lb_completion_via_f{f}_i{i}", "lb_completion_via",
                         [(att[(f, end)], 1.0), (dtt[(f, i)], -1.0)]
                         + [(x[(f, i, k)], -(tt[i][k] + inst.service_truck(k) + tt[k][end])) for k in Np if k != i],
                         ">=", 0.0)
        if opt.node_bounds:
            for k in C:
                self.row(f"lb_arrival_node_f{f}_k{k}", "lb_arrival_node",
                         [(att[(f, k)], 1.0)]
                         + [(x[(f, i, k)], -(tt[0][i] + inst.service_truck(i) + tt[i][k])) for i in N0 if i != k],
                         ">=", 0.0)
        if opt.precedence_cuts:
            for i, k in arcs:
                self.row(f"prec_truck_f{f}_i{i}_k{k}", "prec_truck", [(x[(f, i, k)], 1.0), (self.p(f, i, k), -1.0)],
                         "<=", 0.0)
        if opt.depot_trip_cut:
            for j in C:
                self.row(f"no_artificial_trip_f{f}_j{j}", "no_artificial_trip",
                         [(x[(f, 0, end)], 1.0), (q[(f, j)], 1.0)], "<=", 1.0)
        for d in range(inst.n_drones):
            tag = f"f{f}_d{d}"
            by_ik, by_i, by_k = self.y_by(f, d)
            atd, dtd, htd, ltd, r, w = (reg[k] for k in ("atd", "dtd", "htd", "ltd", "r", "w"))
            if opt.completion_bounds:
                coefs = [(atd[(f, d, end)], 1.0)]
                coefs += [(idx, -(tl + op.tau)) for ys in by_ik.values() for idx, op in ys]
                coefs += [(htd[(f, d, i)], -1.0) for i in N if i != end]
                coefs += [(ltd[(f, d, i)], -1.0) for i in N if i != end]
                coefs += [(w[(f, d, i, j)], -tt[i][j]) for i, j in arcs]
                self.row(f"lb_drone_completion_{tag}", "lb_drone_completion", coefs, ">=", 0.0)
            if opt.node_bounds:
                for k in C:
                    coefs = [(dtd[(f, d, k)], 1.0), (htd[(f, d, k)], -1.0), (ltd[(f, d, k)], -1.0)]
                    coefs += [(idx, -(tt[0][op.i] + tl + op.tau)) for idx, op in by_k.get(k, [])]
                    self.row(f"lb_drone_departure_node_{tag}_k{k}", "lb_drone_departure_node", coefs, ">=", 0.0)
            if opt.precedence_cuts:
                for (i, k), ys in sorted(by_ik.items()):
                    self.row(f"prec_drone_{tag}_i{i}_k{k}", "prec_drone",
                             [(idx, 1.0) for idx, _ in ys] + [(self.p(f, i, k), -1.0)], "<=", 0.0)
            if opt.flight_visit_cut:
                z_ik: dict[tuple[int, int], list[int]] = {}
                for t in self.z:
                    z_ik.setdefault((t.i, t.k), []).append(reg["z"][(f, d, t.l, t.i, t.k)])
                for (i, k), ys in sorted(by_ik.items()):
                    coefs = [(idx, 1.0) for idx, _ in ys] + [(zi, -1.0) for zi in z_ik.get((i, k), [])]
                    coefs.append((x[(f, i, k)], -1.0))
                    self.row(f"visit_during_flight_{tag}_i{i}_k{k}", "visit_during_flight", coefs, "<=", 0.0)
            if opt.energy_lb_cut:
                for i in C:
                    coefs = [(r[(f, d, i)], 1.0), (ltd[(f, d, i)], pc)]
                    coefs += [(idx, -op.e) for idx, op in by_i.get(i, [])]
                    self.row(f"lb_energy_{tag}_i{i}", "lb_energy", coefs, ">=", bat.floor)
            if opt.energy_recharge_cut:
                coefs = [(reg["tec"][(f, d)], 1.0)]
                coefs += [(w[(f, d, i, j)], -tt[i][j] * pc) for i, j in arcs]
                coefs += [(ltd[(f, d, i)], -pc) for i in C]
                coefs += [(r[(f, d, 0)], -1.0), (r[(f, d, end)], 1.0)]
                self.row(f"energy_total_recharge_{tag}", "energy_total_recharge", coefs, "=", 0.0)


def build_model(instance: Instance, ops: Iterable[Operation], ztriples: Iterable[ZTriple],
                options: ModelOptions = ModelOptions()) -> ModelArtifact:
    ops = sorted(set(ops))
    z = sorted(set(ztriples))
    b = _Builder(instance, ops, z, options)
    b.build()
    meta = {
        "instance": instance.name,
        "instance_digest": instance.digest(),
        "options": asdict(options),
        "n_operations": len(ops),
        "n_ztriples": len(z),
        "model_digest": "",
    }
    art = ModelArtifact(instance, b.reg, b.rows, ops, z, options, meta)
    art.metadata["model_digest"] = model_digest(art)
    return art


def model_digest(model: ModelArtifact) -> str:
    h = hashlib.sha256()
    for c in model.columns:
        h.update(f"{c.name}|{c.lb!r}|{c.ub!r}|{c.integer}|{c.obj!r}\n".encode())
    for r in model.rows:
        h.update(f"{r.name}|{r.sense}|{r.rhs!r}|".encode())
        h.update(json.dumps(r.coefs).encode())
    return h.hexdigest()[:16]


def variable_values(model: ModelArtifact, by_name: dict[str, float]) -> list[float]:
    """Dense value vector (missing names default to 0, the CBC convention)."""
    vals = [0.0] * len(model.columns)
    for name, v in by_name.items():
        idx = model.registry.by_name.get(name)
        if idx is not None:
            vals[idx] = v
    return vals
