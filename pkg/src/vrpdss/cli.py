"""Command-line driver: gen, ops, build, solve, validate, oracle, curves."""
from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .energy import octocopter, power_curves
from .instance import GenConfig, InstanceError, generate_instance, load_instance, save_instance
from .milp import (BridgeConfig, BridgeError, ExtractionError, ModelOptions, build_model, default_start,
                   export_model, extract_solution, solve_lazy)
from .operations import preprocess, write_operations_csv, ztriples
from .oracle import OracleConfig, OracleError, brute_force_optimal, compare_vrpd_vs_dss
from .report import FORMATS, comparison_table, cost_table, operations_table, render, violation_table
from .solution import Solution, evaluate, structure_violations

CUT_FLAGS = {
    "completion": "completion_bounds", "node": "node_bounds", "fleet": "fleet_cut", "precedence": "precedence_cuts",
    "depot-trip": "depot_trip_cut", "flight-visit": "flight_visit_cut", "energy-lb": "energy_lb_cut",
    "energy-recharge": "energy_recharge_cut",
}


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


def _load(path: str):
    try:
        return load_instance(path)
    except (OSError, InstanceError) as exc:
        _fail(str(exc))


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _options(no_cuts: bool, disable: tuple[str, ...]) -> ModelOptions:
    opts = ModelOptions.no_cuts() if no_cuts else ModelOptions()
    if disable:
        opts = replace(opts, **{CUT_FLAGS[d]: False for d in disable})
    return opts


def _preprocessed(inst, no_dominance: bool, no_zelim: bool):
    return preprocess(inst, dominance=not no_dominance, zelim=not no_zelim)


preprocessing = [
    click.option("--no-dominance", is_flag=True, help="Keep dominated operations."),
    click.option("--no-zelim", is_flag=True, help="Keep every airborne-at-l triple."),
]
cuts = [
    click.option("--no-cuts", is_flag=True, help="Drop every optional inequality family."),
    click.option("--disable-cut", "disable", multiple=True, type=click.Choice(sorted(CUT_FLAGS)),
                 help="Drop one inequality family (repeatable)."),
]


def _apply(opts):
    def deco(fn):
        for o in reversed(opts):
            fn = o(fn)
        return fn
    return deco


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="More logging.")
def main(verbose: int) -> None:
    """Truck-and-drone routing with drone speed selection."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--customers", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--area", type=(float, float), default=(20.0, 30.0), show_default=True, help="Width and height, km.")
@click.option("--tandems", type=int, default=1, show_default=True)
@click.option("--drones", type=int, default=1, show_default=True)
@click.option("--speed", "speeds", type=float, multiple=True, help="Drone speed in m/s (repeatable).")
@click.option("--depot", type=click.Choice(["corner", "center"]), default="corner", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen(customers, seed, area, tandems, drones, speeds, depot, out):
    """Generate a synthetic instance (deterministic in the seed)."""
    kw = {"speeds": tuple(sorted(speeds))} if speeds else {}
    try:
        inst = generate_instance(GenConfig(n_customers=customers, area_km=area, seed=seed, n_tandems=tandems,
                                           n_drones=drones, depot=depot, **kw))
    except InstanceError as exc:
        _fail(str(exc))
    save_instance(inst, out)
    click.echo(f"wrote {out} ({inst.c} customers, {len(inst.eligible_customers)} drone-eligible)")


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@_apply(preprocessing)
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False), help="Write every operation with its fate.")
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="text", show_default=True)
def ops(instance, no_dominance, no_zelim, csv_out, fmt):
    """Enumerate feasible operations and report elimination counts."""
    inst = _load(instance)
    pp = _preprocessed(inst, no_dominance, no_zelim)
    n_z_all = len(ztriples(inst, pp.all_ops, eliminate=False))
    click.echo(render(operations_table(len(pp.all_ops), pp.elimination, n_z_all, len(pp.z)), fmt), nl=False)
    if csv_out:
        write_operations_csv(csv_out, pp.all_ops, pp.elimination.removed if pp.elimination else None)


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@_apply(preprocessing)
@_apply(cuts)
@click.option("--format", "fmt", type=click.Choice(["LP", "MPS"], case_sensitive=False), default="LP",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def build(instance, no_dominance, no_zelim, no_cuts, disable, fmt, out):
    """Write the MILP as an LP or MPS file."""
    inst = _load(instance)
    pp = _preprocessed(inst, no_dominance, no_zelim)
    model = build_model(inst, pp.ops, pp.z, _options(no_cuts, disable))
    export_model(model, out, fmt)
    click.echo(f"wrote {out}: {len(model.columns)} columns, {len(model.rows)} rows, "
               f"digest {model.metadata['model_digest']}")


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@_apply(preprocessing)
@_apply(cuts)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--solver", "solver_path", type=click.Path(dir_okay=False), help="CBC binary (else env/config/PATH).")
@click.option("--time-limit", type=float)
@click.option("--seed", type=int)
@click.option("--threads", type=int)
@click.option("--solver-option", "solver_options", multiple=True, help="Token passed verbatim to the solver.")
@click.option("--format", "model_fmt", type=click.Choice(["LP", "MPS"], case_sensitive=False), default="MPS")
@click.option("--root-separation", is_flag=True, help="Also separate subtours on the LP relaxation first.")
@click.option("--warm-start/--no-warm-start", default=True, show_default=True,
              help="Hand the solver a nearest-neighbour truck tour as a starting solution.")
def solve(instance, no_dominance, no_zelim, no_cuts, disable, out_dir, solver_path, time_limit, seed, threads,
          solver_options, model_fmt, root_separation, warm_start):
    """Solve with the external solver and a lazy subtour loop; writes solution and report."""
    inst = _load(instance)
    pp = _preprocessed(inst, no_dominance, no_zelim)
    model = build_model(inst, pp.ops, pp.z, _options(no_cuts, disable))
    cfg = BridgeConfig(solver_path=solver_path, time_limit=time_limit, seed=seed, threads=threads,
                       options=tuple(solver_options), fmt=model_fmt.upper())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        start = default_start(model) if warm_start else None
        res = solve_lazy(model, cfg, root_separation=root_separation, start=start)
        raw = res.raw.require_incumbent()
        sol = extract_solution(model, raw)
    except (BridgeError, ExtractionError) as exc:
        _fail(str(exc))
    sched, cost = evaluate(inst, sol)
    (out / "solution.json").write_text(json.dumps(sol.to_dict(), indent=1) + "\n")
    meta = {
        "status": raw.status, "objective": raw.objective, "simulated_total": cost.total,
        "lazy_rounds": res.rounds, "esec_cuts": [sorted(s) for s in res.cuts],
        "root_cuts": [sorted(s) for s in res.root_cuts], "warm_start": start is not None,
        "wall_s": res.wall_s, "solver": raw.solver,
        "command": raw.command[1:], "model_digest": model.metadata["model_digest"],
        "nondeterministic": "solver wall time and tie-breaking may vary between runs",
    }
    (out / "run.json").write_text(json.dumps(meta, indent=1) + "\n")
    table = cost_table(inst, sched)
    (out / "cost.csv").write_text(render(table, "csv"))
    click.echo(render(table, "text"), nl=False)
    click.echo(f"status {raw.status}, objective {raw.objective}")
    sys.exit(0 if sched.feasible else 1)


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.argument("solution", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="text", show_default=True)
@click.option("--no-auto-wait", is_flag=True, help="Do not insert waits to fix energy shortfalls.")
@click.option("--out", type=click.Path(dir_okay=False))
def validate(instance, solution, fmt, no_auto_wait, out):
    """Check feasibility and print the cost breakdown; exit 1 on any violation."""
    inst = _load(instance)
    try:
        sol = Solution.from_dict(json.loads(Path(solution).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail(f"cannot read solution: {exc}")
    bad = structure_violations(inst, sol)
    if bad:
        for v in bad:
            click.echo(f"{v.code}: {v.message}", err=True)
        sys.exit(1)
    sched, _ = evaluate(inst, sol, auto_wait=not no_auto_wait)
    text = render(cost_table(inst, sched), fmt)
    if sched.violations:
        text += render(violation_table(sched), fmt)
    _emit(text, out)
    sys.exit(0 if sched.feasible else 1)


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--speed", "speeds", type=float, multiple=True, help="Restrict to these speeds (repeatable).")
@click.option("--compare", is_flag=True, help="Also solve once per single speed and report deltas.")
@click.option("--max-customers", type=int, default=7, show_default=True)
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="text", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False))
def oracle(instance, speeds, compare, max_customers, fmt, out_dir):
    """Exact enumeration for tiny instances."""
    inst = _load(instance)
    cfg = OracleConfig(max_customers=max_customers, speeds=tuple(sorted(speeds)) if speeds else None)
    try:
        res = brute_force_optimal(inst, cfg)
        rows = compare_vrpd_vs_dss(inst, cfg.speeds, cfg) if compare else None
    except OracleError as exc:
        _fail(str(exc))
    sched, _ = evaluate(inst, res.solution)
    text = render(cost_table(inst, sched), fmt)
    if rows:
        text += render(comparison_table(rows), fmt)
    click.echo(text, nl=False)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "solution.json").write_text(json.dumps(res.solution.to_dict(), indent=1) + "\n")
        if rows:
            (out / "comparison.csv").write_text(render(comparison_table(rows), "csv"))


@main.command()
@click.option("--mass", "masses", type=float, multiple=True, required=True, help="Payload in kg (repeatable).")
@click.option("--vmin", type=float, default=2.0, show_default=True)
@click.option("--vmax", type=float, default=20.0, show_default=True)
@click.option("--step", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def curves(masses, vmin, vmax, step, out):
    """Power and energy-per-distance sweeps as CSV."""
    if not (0 < vmin <= vmax) or step <= 0:
        _fail("need 0 < vmin <= vmax and step > 0")
    speeds = [float(v) for v in np.round(np.arange(vmin, vmax + step / 2, step), 10)]
    rows = power_curves(octocopter(), [float(m) for m in masses], speeds)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) for k, v in r.items()})
    finally:
        if out:
            fh.close()


if __name__ == "__main__":
    main()
