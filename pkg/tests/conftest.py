import itertools
import math

import pytest

from vrpdss.instance import GenConfig, Instance, generate_instance
from vrpdss.milp import solver_available

HAS_SOLVER = solver_available()
needs_solver = pytest.mark.skipif(not HAS_SOLVER, reason="no CBC binary found; MILP half skipped")


def tiny(c: int = 4, seed: int = 1, drones: int = 1, speeds=(12.0,), tandems: int = 1) -> Instance:
    return generate_instance(GenConfig(n_customers=c, area_km=(10.0, 10.0), seed=seed, n_drones=drones,
                                       n_tandems=tandems, speeds=tuple(speeds)))


def suite() -> list[Instance]:
    """24 seeded instances: |C| in {4,5,6}, |D| in {1,2}, |V| in {1,3}, two seeds each."""
    out = []
    combos = itertools.product((4, 5, 6), (1, 2), ((12.0,), (8.0, 12.0, 16.0)), (0, 1))
    for n, (c, d, v, rep) in enumerate(combos):
        out.append(tiny(c, 100 + n, d, v))
    return out


def planar_instance(points: dict, order: list, masses, eligible, speeds, drones=1, slow_nodes=(),
                    name="planar") -> Instance:
    """Instance from planar km coordinates; roads to slow_nodes are 4x the beeline."""
    n = len(order)
    dd = [[0.0] * n for _ in range(n)]
    td = [[0.0] * n for _ in range(n)]
    tt = [[0.0] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            (x1, y1), (x2, y2) = points[order[a]], points[order[b]]
            e = math.hypot(x1 - x2, y1 - y2)
            dd[a][b] = e * 1000.0
            f = 4.0 if (order[a] in slow_nodes or order[b] in slow_nodes) else 1.3
            td[a][b] = e * f
            tt[a][b] = td[a][b] * 1000.0 / (50 / 3.6)
    for m in (dd, td, tt):
        m[0][n - 1] = m[n - 1][0] = 0.0
    return Instance(td, tt, dd, mass=masses, drone_eligible=eligible, speeds=speeds, n_drones=drones, name=name)


def dss_strict_instance() -> Instance:
    """L is only in range at 8 m/s; S is cheapest at 16 m/s because the truck then waits less at U."""
    y = math.sqrt(4.9 ** 2 - 4.5 ** 2)  # L is 4.9 km from both the depot and T
    pts = {"0": (0.0, 0.0), "T": (9.0, 0.0), "U": (9.2, 0.0), "S": (9.1, 3.0), "L": (4.5, -y)}
    return planar_instance(pts, ["0", "T", "U", "S", "L", "0"], (0.0, 0.0, 0.05, 1.0),
                           (False, False, True, True), (8.0, 16.0), drones=2, slow_nodes=("S", "L"),
                           name="dss_strict")


@pytest.fixture(scope="session")
def oracle_suite():
    return suite()


def pytest_terminal_summary(terminalreporter):
    import sys
    results = {}
    for name, mod in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            results.update(getattr(mod, "RESULTS", {}))
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
