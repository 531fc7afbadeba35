import pytest

from vrpdss.milp import (CUT_GROUPS, GROUPS, BridgeConfig, ModelBuildError, ModelOptions, build_model, extract_solution,
                         solve_lazy)
from vrpdss.milp.model import model_digest, variable_values
from vrpdss.operations import Operation, ZTriple, make_operation, preprocess
from vrpdss.solution import evaluate

from tests.conftest import needs_solver, planar_instance, tiny


def expected_counts(c: int, ops: list[Operation], z: list[ZTriple], cuts: bool) -> dict[str, int]:
    """Closed-form row counts for one tandem and one drone."""
    arcs = (c + 1) ** 2 - c  # i in {0}+C, j in C+{end}, i != j
    pairs = {(op.i, op.k) for op in ops}
    in_air = sum(1 for (i, k) in pairs for l in range(1, c + 1) if l not in (i, k))
    n = {
        "demand": c, "inflow": c + 1, "outflow": c + 1, "mtz": c * (c - 1), "order": c * (c - 1),
        "depot_before": c, "depot_after": c, "depot_pair": 1,
        "pair": c * (c - 1) // 2, "pair_link_i": c * (c - 1) // 2, "pair_link_j": c * (c - 1) // 2,
        "pair_link_both": c * (c - 1) // 2,
        "retrieval": len({op.k for op in ops}), "arc_charge": arcs, "in_air": in_air, "exclusive": c,
        "depot_launch": 1, "truck_time": arcs, "drone_arrival_lb": len(pairs), "drone_arrival_ub": len(pairs),
        "hover": c + 1, "hover_cap": c + 1, "charge_cap": c, "truck_service": c + 2, "truck_after_drone": c + 2,
        "stationary_cap": c, "drone_departure": c + 2, "route_length": 1, "energy_total": 1,
        "energy_flight": len(pairs), "energy_departure": c + 1, "energy_arc": arcs,
    }
    if cuts:
        n.update({
            "lb_truck_completion": 1, "lb_drone_completion": 1, "lb_completion_via": c, "lb_arrival_node": c,
            "lb_drone_departure_node": c, "fleet": 1, "prec_truck": arcs, "prec_drone": len(pairs),
            "no_artificial_trip": c, "visit_during_flight": len(pairs), "lb_energy": c, "energy_total_recharge": 1,
        })
    return {k: v for k, v in n.items() if v}


@pytest.mark.parametrize("cuts", [True, False])
def test_row_counts_closed_form(cuts):
    inst = tiny(5, seed=3, drones=1)
    pp = preprocess(inst)
    opts = ModelOptions() if cuts else ModelOptions.no_cuts()
    model = build_model(inst, pp.ops, pp.z, opts)
    assert model.group_counts() == expected_counts(5, pp.ops, pp.z, cuts)
    assert model.group_counts()["mtz"] == 5 * 4


def test_column_counts_closed_form():
    inst = tiny(5, seed=3, drones=2)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    c, D = 5, 2
    arcs = (c + 1) ** 2 - c
    want = {"x": arcs, "y": D * len(pp.ops), "q": c + 2, "b": c * (c - 1) // 2, "u": c, "p": arcs,
            "z": D * len(pp.z), "att": c + 2, "dtt": c + 2, "atd": D * (c + 2), "dtd": D * (c + 2),
            "htd": D * (c + 2), "ltd": D * (c + 2), "r": D * (c + 2), "w": D * arcs, "tec": D}
    assert {f: len(model.registry[f]) for f in want} == want
    assert len(model.columns) == sum(want.values())


def test_groups_are_documented():
    inst = tiny(4, seed=1, drones=2, speeds=(8.0, 16.0))
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    assert set(model.group_counts()) <= set(GROUPS) | set(CUT_GROUPS)


def test_bounds_and_integrality():
    inst = tiny(4, seed=1)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    reg = model.registry
    for fam in ("x", "y", "q", "b", "p", "z"):
        for idx in reg[fam].values():
            c = model.columns[idx]
            assert c.integer and (c.lb, c.ub) == (0, 1)
    for idx in reg["u"].values():
        assert model.columns[idx].integer and (model.columns[idx].lb, model.columns[idx].ub) == (0, 4)
    for idx in reg["r"].values():
        assert (model.columns[idx].lb, model.columns[idx].ub) == (inst.battery.floor, inst.battery.E)
    for idx in reg["w"].values():
        assert (model.columns[idx].lb, model.columns[idx].ub) == (0, 1) and not model.columns[idx].integer


def test_no_columns_for_eliminated_entities():
    inst = tiny(5, seed=4, speeds=(8.0, 12.0, 16.0))
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    keys = {(i, j, k, v) for (_, _, i, j, k, v) in model.registry["y"]}
    assert keys == {op.key for op in pp.ops}
    assert {(l, i, k) for (_, _, l, i, k) in model.registry["z"]} == {(t.l, t.i, t.k) for t in pp.z}
    for op in pp.elimination.removed:
        assert f"y_f0_d0_v{op.v:g}_i{op.i}_j{op.j}_k{op.k}".replace(".", "p") not in model.registry.by_name


def test_objective_weights():
    inst = tiny(3, seed=2)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    cols = {c.name: c.obj for c in model.columns if c.obj}
    assert cols["att_f0_i4"] == pytest.approx(20.0 / 3600)
    assert cols["tec_f0_d0"] == pytest.approx(0.09 / 3600)
    assert cols["x_f0_i0_j1"] == pytest.approx(0.16 * inst.truck_dist[0][1])
    assert "x_f0_i0_j4" not in cols  # the depot-to-depot arc has zero length


def test_digest_is_stable():
    inst = tiny(4, seed=6)
    pp = preprocess(inst)
    a, b = build_model(inst, pp.ops, pp.z), build_model(inst, pp.ops, pp.z)
    assert a.metadata["model_digest"] == b.metadata["model_digest"] == model_digest(a)
    assert build_model(inst, pp.ops, pp.z, ModelOptions.no_cuts()).metadata["model_digest"] != model_digest(a)


def test_variable_values_defaults_to_zero():
    inst = tiny(2, seed=1)
    model = build_model(inst, [], [])
    vals = variable_values(model, {"x_f0_i0_j1": 1.0, "not_a_column": 5.0})
    assert sum(vals) == 1.0 and len(vals) == len(model.columns)


def test_build_errors():
    inst = tiny(3, seed=1).with_(mass=(1.0, 1.0, 1.0), drone_eligible=(True, True, False))
    good = make_operation(inst, 0, 1, 2, 12.0)
    with pytest.raises(ModelBuildError, match="unavailable speed"):
        build_model(inst, [make_operation(inst, 0, 1, 2, 9.0)], [])
    with pytest.raises(ModelBuildError, match="does not fit"):
        build_model(inst, [Operation(0, 3, 1, 12.0, 1.0, 1.0)], [])  # customer 3 is truck-only
    with pytest.raises(ModelBuildError, match="does not fit"):
        build_model(inst, [Operation(0, 1, 0, 12.0, 1.0, 1.0)], [])  # retrieval at the start depot
    with pytest.raises(ModelBuildError, match="does not fit"):
        build_model(inst, [good], [ZTriple(1, 1, 2)])
    assert len(build_model(inst, [good], [ZTriple(3, 0, 2)]).registry["y"]) == 1


@needs_solver
def test_single_customer_without_drones_is_a_round_trip():
    inst = planar_instance({"0": (0.0, 0.0), "J": (3.0, 4.0)}, ["0", "J", "0"], (1.0,), (True,), (12.0,),
                           drones=1).with_(n_drones=0)
    model = build_model(inst, [], [])
    assert "y" not in {c.name.split("_")[0] for c in model.columns}
    res = solve_lazy(model, BridgeConfig())
    c = inst.costs
    trip = c.wage_per_s * (2 * inst.truck_time[0][1] + 120.0) + c.fuel_per_km * 2 * inst.truck_dist[0][1]
    assert res.raw.status == "optimal"
    assert res.raw.objective == pytest.approx(trip, abs=1e-6)
    sol = extract_solution(model, res.raw)
    assert sol.tandems[0].route == (0, 1, 2)


@needs_solver
@pytest.mark.parametrize("seed", [21, 22])
def test_cuts_do_not_change_the_optimum(seed):
    inst = tiny(5, seed=seed, drones=1, speeds=(8.0, 16.0))
    pp = preprocess(inst)
    on = solve_lazy(build_model(inst, pp.ops, pp.z), BridgeConfig()).raw
    off = solve_lazy(build_model(inst, pp.ops, pp.z, ModelOptions.no_cuts()), BridgeConfig()).raw
    assert on.objective == pytest.approx(off.objective, abs=1e-6)


@needs_solver
def test_extracted_solution_reproduces_the_objective():
    inst = tiny(5, seed=7, drones=2, speeds=(8.0, 12.0, 16.0))
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    raw = solve_lazy(model, BridgeConfig()).raw
    sched, cost = evaluate(inst, extract_solution(model, raw), auto_wait=False)
    assert sched.feasible
    assert cost.total == pytest.approx(raw.objective, abs=1e-6)
    vals = variable_values(model, raw.values)
    assert model.objective(vals) == pytest.approx(raw.objective, abs=1e-6)
    # the solution file carries about 8 significant digits; big-M rows scale that up
    assert model.max_violation(vals)[0] < 1e-3
