import copy
import json
import os
import stat
import sys

import pytest

from vrpdss.milp import (BridgeConfig, InfeasibleModelError, SolverExitError, SolverMissingError, SolverOutputError,
                         build_model, default_start, extract_solution, find_solver, integer_start,
                         nearest_neighbour_tours, solve_lazy, solve_with_bridge)
from vrpdss.milp import bridge
from vrpdss.milp.bridge import parse_solution_file, solver_version
from vrpdss.milp.model import Row
from vrpdss.operations import preprocess
from vrpdss.solution import evaluate

from tests.conftest import needs_solver, tiny


def small_model(c=4, seed=5, drones=1):
    inst = tiny(c, seed=seed, drones=drones)
    pp = preprocess(inst)
    return build_model(inst, pp.ops, pp.z)


def fake_solver(tmp_path, body: str) -> str:
    path = tmp_path / "fakecbc"
    path.write_text(f"#!{sys.executable}\nimport sys\n{body}\n")
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return str(path)


def write_solution(text: str) -> str:
    """Body of a fake solver that writes ``text`` to the path following "solu"."""
    return f"args = sys.argv\nopen(args[args.index('solu') + 1], 'w').write({text!r})"


# parsing

def test_parse_optimal_with_marked_lines():
    text = ("Optimal - objective value 12.5\n"
            "      0 x_0_0_1     1    3.5\n"
            "**    1 w_0_0_0_1   0.25 0\n"
            "\n")
    status, obj, values = parse_solution_file(text)
    assert status == "optimal"
    assert obj == 12.5
    assert values == {"x_0_0_1": 1.0, "w_0_0_0_1": 0.25}


@pytest.mark.parametrize("head, status", [
    ("Infeasible - objective value 0", "infeasible"),
    ("Integer infeasible - objective value 0", "infeasible"),
    ("Stopped on time - objective value 91.4", "limit"),
    ("Stopped on iterations - objective value 1e+50", "limit"),
    ("Unbounded - objective value 0", "unbounded"),
])
def test_parse_status_lines(head, status):
    assert parse_solution_file(head + "\n")[0] == status


def test_parse_rejects_unknown_and_malformed_files():
    with pytest.raises(ValueError, match="empty"):
        parse_solution_file("")
    with pytest.raises(ValueError, match="unknown status"):
        parse_solution_file("Something else\n")
    with pytest.raises(ValueError, match="bad solution line"):
        parse_solution_file("Optimal - objective value 1\n0 x\n")


# discovery and failure modes

def test_missing_solver_raises(monkeypatch, tmp_path):
    monkeypatch.delenv(bridge.ENV_SOLVER, raising=False)
    monkeypatch.delenv(bridge.ENV_CONFIG, raising=False)
    monkeypatch.setenv("PATH", str(tmp_path))
    monkeypatch.setattr(bridge, "_pulp_cbc", lambda: None)
    assert find_solver() is None
    assert solver_version() is None
    with pytest.raises(SolverMissingError, match="no CBC binary"):
        solve_with_bridge(small_model())


def test_discovery_order(monkeypatch, tmp_path):
    exe = fake_solver(tmp_path, "")
    monkeypatch.setattr(bridge, "_pulp_cbc", lambda: None)
    monkeypatch.setenv("PATH", str(tmp_path / "nowhere"))
    monkeypatch.delenv(bridge.ENV_SOLVER, raising=False)
    conf = tmp_path / "solver.json"
    conf.write_text(json.dumps({"cbc_path": exe}))
    monkeypatch.setenv(bridge.ENV_CONFIG, str(conf))
    assert find_solver() == exe
    other = tmp_path / "other"
    other.mkdir()
    exe2 = fake_solver(other, "")
    monkeypatch.setenv(bridge.ENV_SOLVER, exe2)
    assert find_solver() == exe2
    assert find_solver(BridgeConfig(solver_path=exe)) == exe
    conf.write_text("{not json")
    monkeypatch.delenv(bridge.ENV_SOLVER)
    assert find_solver() is None


def test_nonzero_exit_carries_the_log(tmp_path):
    exe = fake_solver(tmp_path, "print('licence trouble near row 7'); sys.exit(3)")
    with pytest.raises(SolverExitError, match="code 3") as err:
        solve_with_bridge(small_model(), BridgeConfig(solver_path=exe))
    assert "licence trouble" in err.value.log_excerpt


def test_missing_or_garbled_solution_file(tmp_path):
    exe = fake_solver(tmp_path, "print('done')")
    with pytest.raises(SolverOutputError, match="no solution file"):
        solve_with_bridge(small_model(), BridgeConfig(solver_path=exe))
    exe = fake_solver(tmp_path, write_solution("Who knows\n1 2 3\n"))
    with pytest.raises(SolverOutputError, match="cannot parse"):
        solve_with_bridge(small_model(), BridgeConfig(solver_path=exe))


def test_command_line_and_kept_files(tmp_path):
    model = small_model()
    col = model.columns[0].name
    exe = fake_solver(tmp_path, write_solution(f"Optimal - objective value 2\n0 {col} 1 0\n"))
    work = tmp_path / "work"
    cfg = BridgeConfig(solver_path=exe, time_limit=5, seed=3, threads=2, options=("ratio", "0"), fmt="LP",
                       workdir=str(work))
    start = {col: 1.0}
    raw = solve_with_bridge(model, cfg, start=start)
    assert raw.status == "optimal" and raw.objective == 2.0 and raw.has_incumbent
    cmd = raw.command
    assert cmd[1].endswith("model.lp") and cmd[2:4] == ["mips", str(work / "start.txt")]
    assert cmd[cmd.index("sec") + 1] == "5.0"
    assert cmd[cmd.index("randomCbcSeed") + 1] == "3" and cmd[cmd.index("threads") + 1] == "2"
    assert cmd[-3:] == ["solve", "solu", str(work / "solution.txt")]
    assert (work / "model.lp").is_file()
    lines = (work / "start.txt").read_text().splitlines()
    assert lines[0].startswith("Stopped")
    assert f"0 {col} 1.0 0" in lines
    assert len(lines) - 1 == sum(c.integer for c in model.columns)
    relaxed = solve_with_bridge(model, cfg, relax=True, start=start)
    assert "mips" not in relaxed.command and "initialSolve" in relaxed.command


def test_fractional_limit_result_has_no_incumbent(tmp_path):
    model = small_model()
    x = next(c.name for c in model.columns if c.integer)
    exe = fake_solver(tmp_path, write_solution(f"Stopped on time - objective value 3\n0 {x} 0.5 0\n"))
    raw = solve_with_bridge(model, BridgeConfig(solver_path=exe))
    assert raw.status == "limit" and not raw.has_incumbent and raw.objective is None
    with pytest.raises(InfeasibleModelError):
        raw.require_incumbent()


def test_crash_with_a_start_is_retried_without_it(tmp_path):
    model = small_model()
    body = ("import os, signal\nif 'mips' in sys.argv: os.kill(os.getpid(), signal.SIGSEGV)\n"
            + write_solution("Optimal - objective value 4\n"))
    exe = fake_solver(tmp_path, body)
    raw = solve_with_bridge(model, BridgeConfig(solver_path=exe), start={model.columns[0].name: 1.0})
    assert raw.status == "optimal" and raw.start_dropped and "mips" not in raw.command
    with pytest.raises(SolverExitError) as err:
        solve_with_bridge(model, BridgeConfig(solver_path=fake_solver(tmp_path, "sys.exit(2)")),
                          start={model.columns[0].name: 1.0})
    assert err.value.returncode == 2
    hang = fake_solver(tmp_path, "import time\nif 'mips' in sys.argv: time.sleep(30)\n"
                       + write_solution("Optimal - objective value 4\n"))
    raw = solve_with_bridge(model, BridgeConfig(solver_path=hang, time_limit=0.5, wall_slack=0.5),
                            start={model.columns[0].name: 1.0})
    assert raw.status == "optimal" and raw.start_dropped


def test_preprocessing_cut_off_by_the_limit_is_not_infeasibility(tmp_path):
    body = ("print('Pre-processing says infeasible or unbounded')\n"
            "print('Total time (CPU seconds):       2.04   (Wallclock seconds):       2.10')\n"
            + write_solution("Infeasible - objective value 16.78\n"))
    exe = fake_solver(tmp_path, body)
    raw = solve_with_bridge(small_model(), BridgeConfig(solver_path=exe, time_limit=2.0))
    assert raw.status == "limit" and not raw.has_incumbent and raw.objective is None
    # without a limit the verdict stands
    assert solve_with_bridge(small_model(), BridgeConfig(solver_path=exe)).status == "infeasible"


def test_temporary_directory_is_removed(tmp_path, monkeypatch):
    made = []
    real = bridge.tempfile.mkdtemp

    def spy(**kw):
        made.append(real(**kw))
        return made[-1]

    monkeypatch.setattr(bridge.tempfile, "mkdtemp", spy)
    exe = fake_solver(tmp_path, write_solution("Optimal - objective value 0\n"))
    solve_with_bridge(small_model(), BridgeConfig(solver_path=exe))
    assert made and not os.path.exists(made[0])


# real solver

@needs_solver
def test_solver_version_is_reported():
    assert solver_version()


@needs_solver
def test_infeasible_model_is_a_status():
    model = copy.deepcopy(small_model())
    idx = next(i for i, c in enumerate(model.columns) if c.integer and c.ub == 1)
    model.add_row(Row("force_two", "test", [(idx, 1.0)], ">=", 2.0))
    raw = solve_with_bridge(model)
    assert raw.status == "infeasible" and not raw.has_incumbent
    with pytest.raises(InfeasibleModelError):
        raw.require_incumbent()


@needs_solver
def test_start_assignment_is_feasible_for_the_model():
    """Fixing every integer column to the start leaves a feasible LP priced like the simulated tour."""
    model = copy.deepcopy(small_model(5, seed=9))
    sol = nearest_neighbour_tours(model.instance)
    start = integer_start(model, sol)
    for idx, c in enumerate(model.columns):
        if c.integer:
            model.add_row(Row(f"fix_{c.name}", "test", [(idx, 1.0)], "=", start.get(c.name, 0.0)))
    raw = solve_with_bridge(model)
    assert raw.status == "optimal"
    sched, cost = evaluate(model.instance, sol, auto_wait=False)
    assert sched.feasible
    assert raw.objective == pytest.approx(cost.total, abs=1e-6)


@needs_solver
def test_large_instance_under_a_short_limit_reports_limit():
    inst = tiny(50, seed=4, drones=1)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    raw = solve_with_bridge(model, BridgeConfig(time_limit=1.0, seed=1))
    assert raw.status == "limit"
    if not raw.has_incumbent:
        assert raw.objective is None


@needs_solver
def test_warm_start_gives_an_incumbent_at_the_limit():
    """A node limit stops right after the root, deterministically; only the start supplies an incumbent."""
    inst = tiny(12, seed=4, drones=1)
    pp = preprocess(inst)
    model = build_model(inst, pp.ops, pp.z)
    start = default_start(model)
    assert start is not None
    cfg = BridgeConfig(options=("maxNodes", "0"))
    assert not solve_with_bridge(model, cfg).has_incumbent
    res = solve_lazy(model, cfg, start=start)
    assert res.raw.status == "limit" and res.raw.has_incumbent
    assert res.rounds == 1 and res.cuts == []
    sched, cost = evaluate(inst, extract_solution(model, res.raw), auto_wait=False)
    assert sched.feasible
    assert cost.total == pytest.approx(res.raw.objective, abs=1e-4)
    nn = evaluate(inst, nearest_neighbour_tours(inst), auto_wait=False)[1].total
    assert cost.total <= nn + 1e-6


@needs_solver
def test_lazy_result_fields():
    model = small_model(5, seed=11)
    res = solve_lazy(model, BridgeConfig(), root_separation=True)
    assert res.raw.status == "optimal"
    assert res.rounds >= 1 and res.wall_s > 0
    assert all(isinstance(s, frozenset) for s in res.cuts + res.root_cuts)
    assert sum(r.group == "esec" for r in model.rows) == len(set(res.cuts) | set(res.root_cuts))
