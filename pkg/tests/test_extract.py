import pytest

from vrpdss.milp import ExtractionError, build_model, encode_solution, extract_solution, integer_start
from vrpdss.milp.bridge import RawSolution
from vrpdss.operations import preprocess
from vrpdss.solution import Solution, Sortie, TandemPlan, truck_only

from tests.conftest import tiny


def setup(c=3, drones=1):
    inst = tiny(c, seed=8, drones=drones)
    pp = preprocess(inst)
    return inst, build_model(inst, pp.ops, pp.z)


def x_name(model, i, j, f=0):
    reg = model.registry
    return reg.columns[reg["x"][(f, i, j)]].name


def one_sortie_plan(inst, model) -> Solution:
    """Route through every customer but the drone's; launch and retrieval nodes are adjacent."""
    op = next(o for o in model.ops if (o.i, o.k) != (0, inst.end))
    rest = [n for n in inst.customers if n not in (op.i, op.j, op.k)]
    if op.i == 0:
        route = (0, op.k, *rest, inst.end)
    elif op.k == inst.end:
        route = (0, *rest, op.i, inst.end)
    else:
        route = (0, op.i, op.k, *rest, inst.end)
    return Solution((TandemPlan(route, ((Sortie(op.i, op.j, op.k, op.v),),)),))


def test_truck_only_round_trip():
    inst, model = setup()
    sol = truck_only([[0, 2, 1, 3, inst.end]], n_drones=1)
    assert extract_solution(model, encode_solution(model, sol), keep_departures=False) == sol


def test_sortie_round_trip_and_start_agree():
    inst, model = setup()
    assert model.ops
    sol = one_sortie_plan(inst, model)
    enc = encode_solution(model, sol)
    assert extract_solution(model, enc, keep_departures=False) == sol
    start = integer_start(model, sol)
    assert {k: v for k, v in start.items() if k in enc} == enc
    raw = RawSolution("optimal", 0.0, start, True)
    assert extract_solution(model, raw, keep_departures=False) == sol


def test_unknown_sortie_column_is_an_error():
    inst, model = setup()
    enc = encode_solution(model, truck_only([[0, 1, 2, 3, inst.end]], n_drones=1))
    enc["y_f0_d0_i9_j9_k9_v12"] = 1.0
    with pytest.raises(ExtractionError, match="eliminated"):
        extract_solution(model, enc, keep_departures=False)
    with pytest.raises(ExtractionError, match="no column"):
        encode_solution(model, Solution((TandemPlan((0, 2, 3, inst.end), ((Sortie(0, 1, 0, 12.0),),)),)))


def test_fractional_binary_is_an_error():
    inst, model = setup()
    enc = encode_solution(model, truck_only([[0, 1, 2, 3, inst.end]], n_drones=1))
    enc[x_name(model, 0, 1)] = 0.6
    with pytest.raises(ExtractionError, match="not binary"):
        extract_solution(model, enc, keep_departures=False)


def test_subtour_and_branching_are_errors():
    inst, model = setup()
    end = inst.end
    values = {x_name(model, 0, 1): 1.0, x_name(model, 1, end): 1.0, x_name(model, 2, 3): 1.0,
              x_name(model, 3, 2): 1.0}
    with pytest.raises(ExtractionError, match="subtour"):
        extract_solution(model, values, keep_departures=False)
    values = {x_name(model, 0, 1): 1.0, x_name(model, 1, 2): 1.0, x_name(model, 2, 1): 1.0}
    with pytest.raises(ExtractionError, match="depot-to-depot"):
        extract_solution(model, values, keep_departures=False)


def test_sortie_off_the_route_is_an_error():
    inst, model = setup()
    sol = one_sortie_plan(inst, model)
    op = sol.tandems[0].drones[0][0]
    enc = encode_solution(model, sol)
    for a, b in zip(sol.tandems[0].route, sol.tandems[0].route[1:]):
        del enc[x_name(model, a, b)]
    with pytest.raises(ExtractionError, match="off the route"):
        extract_solution(model, enc, keep_departures=False)
    assert op.i in sol.tandems[0].route


def test_idle_tandem_is_a_direct_depot_trip():
    inst = tiny(2, seed=8, drones=1, tandems=2)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    sol = extract_solution(model, {x_name(model, 0, 1, 0): 1.0, x_name(model, 1, 2, 0): 1.0,
                                   x_name(model, 2, inst.end, 0): 1.0}, keep_departures=False)
    assert sol.tandems[1].route == (0, inst.end)
