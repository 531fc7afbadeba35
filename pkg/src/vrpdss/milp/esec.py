"""Extended subtour elimination: separation on integer and fractional supports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .model import ModelArtifact, Row

VIOLATION_TOL = 1e-6


@dataclass
class Support:
    """Arc and sortie values aggregated over tandems, drones and speeds."""
    customers: tuple[int, ...]
    x: dict[tuple[int, int], float] = field(default_factory=dict)
    y: dict[tuple[int, int, int], float] = field(default_factory=dict)

    def is_integral(self, tol: float = 1e-6) -> bool:
        return all(abs(v - round(v)) <= tol for v in list(self.x.values()) + list(self.y.values()))


def support_from_values(model: ModelArtifact, values) -> Support:
    reg = model.registry
    sup = Support(tuple(model.instance.customers))
    for (f, i, j), idx in reg["x"].items():
        if values[idx] > 1e-9:
            sup.x[(i, j)] = sup.x.get((i, j), 0.0) + values[idx]
    for (f, d, i, j, k, v), idx in reg["y"].items():
        if values[idx] > 1e-9:
            sup.y[(i, j, k)] = sup.y.get((i, j, k), 0.0) + values[idx]
    return sup


def esec_lhs(support: Support, S: Iterable[int]) -> float:
    """Arcs inside S plus sorties serving S that launch or land in S."""
    S = set(S)
    lhs = sum(v for (i, j), v in support.x.items() if i in S and j in S)
    lhs += sum(v for (i, j, k), v in support.y.items() if j in S and (i in S or k in S))
    return lhs


def is_violated(support: Support, S: Iterable[int]) -> bool:
    S = set(S)
    return esec_lhs(support, S) > len(S) - 1 + VIOLATION_TOL


def _components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    parent = {n: n for n in nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for n in parent:
        groups.setdefault(find(n), []).append(n)
    return sorted(sorted(g) for g in groups.values())


def _integer_sets(support: Support) -> list[frozenset[int]]:
    C = set(support.customers)
    arcs = [(i, j) for (i, j), v in support.x.items() if v > 0.5]
    touched = {n for a in arcs for n in a if n in C}
    inner = [(i, j) for i, j in arcs if i in C and j in C]
    depot_reach = {j for i, j in arcs if i == 0 and j in C} | {i for i, j in arcs if j not in C and j != 0 and i in C}
    out = []
    for comp in _components(touched, inner):
        if depot_reach.isdisjoint(comp):
            out.append(frozenset(comp))
    return out


def _shrink(support: Support, S: set[int]) -> Optional[frozenset[int]]:
    """Drop the node whose removal raises the slack most until S is violated."""
    S = set(S)
    while len(S) >= 2:
        if is_violated(support, S):
            return frozenset(S)
        best, best_gap = None, None
        for n in sorted(S):
            T = S - {n}
            gap = esec_lhs(support, T) - (len(T) - 1)
            if best_gap is None or gap > best_gap + 1e-12:
                best, best_gap = n, gap
        S.discard(best)
    return None


def _fractional_sets(support: Support, threshold: float) -> list[frozenset[int]]:
    C = set(support.customers)
    weight: dict[tuple[int, int], float] = {}
    for (i, j), v in support.x.items():
        if i in C and j in C:
            key = (min(i, j), max(i, j))
            weight[key] = weight.get(key, 0.0) + v
    for (i, j, k), v in support.y.items():
        for a in (i, k):
            if a in C:
                key = (min(a, j), max(a, j))
                weight[key] = weight.get(key, 0.0) + v
    edges = [e for e, v in weight.items() if v >= threshold]
    nodes = {n for e in edges for n in e}
    out = []
    for comp in _components(nodes, edges):
        S = _shrink(support, set(comp))
        if S is not None and S not in out:
            out.append(S)
    return out


def separate_esec(support: Support, integer: Optional[bool] = None,
                  threshold: float = 0.5) -> list[frozenset[int]]:
    """Customer subsets whose extended subtour inequality is strictly violated.

    Integer supports use exact component detection; fractional supports use
    the thresholded-component heuristic. Every returned set is re-checked.
    """
    if integer is None:
        integer = support.is_integral()
    cands = _integer_sets(support) if integer else _fractional_sets(support, threshold)
    return [S for S in cands if is_violated(support, S)]


def esec_row(model: ModelArtifact, S: Iterable[int], name: Optional[str] = None) -> Row:
    S = frozenset(S)
    reg = model.registry
    coefs = []
    for f in range(model.instance.n_tandems):
        for i in sorted(S):
            for j in sorted(S):
                if i != j:
                    coefs.append((reg["x"][(f, i, j)], 1.0))
    for (f, d, i, j, k, v), idx in sorted(reg["y"].items()):
        if j in S and (i in S or k in S):
            coefs.append((idx, 1.0))
    label = name or "esec_" + "_".join(str(n) for n in sorted(S))
    return Row(label, "esec", coefs, "<=", float(len(S) - 1))


def add_esec_rows(model: ModelArtifact, sets: Iterable[Iterable[int]]) -> list[Row]:
    have = {r.name for r in model.rows if r.group == "esec"}
    added = []
    for S in sets:
        row = esec_row(model, S)
        if row.name in have:
            continue
        model.add_row(row)
        have.add(row.name)
        added.append(row)
    return added
