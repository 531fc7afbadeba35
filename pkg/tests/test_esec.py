import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrpdss.milp import build_model, esec_lhs, esec_row, separate_esec, support_from_values, variable_values
from vrpdss.milp.esec import Support, add_esec_rows, is_violated
from vrpdss.operations import preprocess

from tests.conftest import needs_solver, tiny
from tests.supports import connected_cases, planted_cases, random_support


def test_two_customer_subtour():
    sup = Support((1, 2, 3, 4), x={(0, 1): 1.0, (1, 5): 1.0, (2, 3): 1.0, (3, 2): 1.0}, y={(0, 4, 1): 1.0})
    assert separate_esec(sup) == [frozenset({2, 3})]
    assert esec_lhs(sup, {2, 3}) == 2.0


def test_connected_tour_has_no_cut():
    sup = Support((1, 2, 3), x={(0, 2): 1.0, (2, 1): 1.0, (1, 4): 1.0}, y={(2, 3, 1): 1.0})
    assert separate_esec(sup) == []


def test_sorties_count_towards_the_set():
    # 2 -> 3 -> 2 cycle served partly by a sortie landing inside the set
    sup = Support((1, 2, 3, 4), x={(0, 1): 1.0, (1, 5): 1.0, (2, 3): 1.0, (3, 2): 1.0}, y={(2, 4, 3): 1.0})
    assert esec_lhs(sup, {2, 3, 4}) == 3.0
    assert is_violated(sup, {2, 3, 4})


def test_cycle_touching_the_path_is_not_cut():
    # customers 1, 2 are on the depot path; 3 and 4 hang off it only through a sortie
    sup = Support((1, 2, 3), x={(0, 1): 1.0, (1, 2): 1.0, (2, 4): 1.0}, y={(1, 3, 2): 1.0})
    assert separate_esec(sup, integer=True) == []


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.integers(4, 14), k=st.integers(1, 3))
def test_planted_subtours_are_found(seed, c, k):
    k = min(k, c // 2)
    sup, cycles = random_support(random.Random(seed), c, k)
    found = separate_esec(sup, integer=True)
    assert found
    assert set(found) == set(cycles)
    assert all(is_violated(sup, S) for S in found)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.integers(1, 14))
def test_connected_supports_give_no_false_positive(seed, c):
    sup, _ = random_support(random.Random(seed), c, 0)
    assert separate_esec(sup, integer=True) == []


def test_fixed_batches():
    assert all(separate_esec(s) for s, _ in planted_cases(20))
    assert not any(separate_esec(s) for s in connected_cases(20))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_fractional_sets_are_strictly_violated(seed):
    rng = random.Random(seed)
    sup, _ = random_support(rng, rng.randint(4, 10), rng.randint(0, 2))
    for key in list(sup.x):
        sup.x[key] *= rng.choice([0.3, 0.5, 0.7, 1.0])
    for key in list(sup.y):
        sup.y[key] *= rng.choice([0.5, 1.0])
    for S in separate_esec(sup, integer=False, threshold=0.3):
        assert esec_lhs(sup, S) > len(S) - 1


def test_row_matches_lhs():
    inst = tiny(4, seed=2, drones=1)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    S = {1, 2, 3}
    row = esec_row(model, S)
    assert row.sense == "<=" and row.rhs == 2.0 and row.group == "esec"
    rng = random.Random(5)
    vals = [rng.random() for _ in model.columns]
    assert row.activity(vals) == pytest.approx(esec_lhs(support_from_values(model, vals), S), abs=1e-12)
    n = len(model.rows)
    assert len(add_esec_rows(model, [S, S])) == 1 and len(model.rows) == n + 1
    assert add_esec_rows(model, [S]) == []


@needs_solver
def test_fractional_separation_on_lp_relaxation():
    from vrpdss.milp import BridgeConfig, solve_with_bridge

    for seed in (1, 2, 3):
        inst = tiny(6, seed=seed, drones=1, speeds=(8.0, 12.0, 16.0))
        pp = preprocess(inst)
        model = build_model(inst, pp.ops, pp.z)
        raw = solve_with_bridge(model, BridgeConfig(), relax=True)
        assert raw.status == "optimal"
        sup = support_from_values(model, variable_values(model, raw.values))
        for S in separate_esec(sup, integer=False):
            assert esec_lhs(sup, S) > len(S) - 1 + 1e-6
            assert esec_row(model, S).activity(variable_values(model, raw.values)) > len(S) - 1
