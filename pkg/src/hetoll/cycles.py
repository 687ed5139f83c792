"""Support graphs of routings and zero-curvature cycle breaking.

The support graph of a flow is bipartite: road nodes on one side, type nodes
on the other, an edge wherever ``f[i, j]`` is positive. Shifting flow around
one of its cycles leaves the social cost unchanged at a stationary point, so
cycles can be removed one by one without losing optimality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NetworkInstance, renormalize, social_cost

SUPPORT_THRESHOLD = 1e-7
COST_TOL = 1e-8


class CycleError(ValueError):
    pass


class SpuriousCycleError(CycleError):
    """Maximal step along a cycle direction is not positive."""


class CostDriftError(RuntimeError):
    """A break step changed the social cost; the input was not stationary."""


@dataclass(frozen=True)
class SupportGraph:
    n: int
    m: int
    edges: frozenset

    def road_neighbors(self, i: int) -> list[int]:
        return sorted(j for (r, j) in self.edges if r == i)

    def type_neighbors(self, j: int) -> list[int]:
        return sorted(i for (i, t) in self.edges if t == j)

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class Cycle:
    """Alternating closed walk ``roads[0], types[0], roads[1], ..., types[r-1], roads[0]``.

    Type ``types[k]`` sits on roads ``roads[k]`` and ``roads[k+1]`` (cyclically).
    """

    roads: tuple
    types: tuple

    def __post_init__(self):
        r = len(self.roads)
        if r < 2 or len(self.types) != r:
            raise CycleError("a cycle needs r >= 2 roads and as many types")
        if len(set(self.roads)) != r or len(set(self.types)) != r:
            raise CycleError("cycle must be simple")

    @property
    def length(self) -> int:
        return len(self.roads)

    def incidences(self) -> list[tuple[int, int]]:
        r = self.length
        out = []
        for k in range(r):
            out.append((self.roads[k], self.types[k]))
            out.append((self.roads[(k + 1) % r], self.types[k]))
        return out

    def canonical(self) -> Cycle:
        """Rotate so the smallest road index comes first."""
        k = self.roads.index(min(self.roads))
        return Cycle(self.roads[k:] + self.roads[:k], self.types[k:] + self.types[:k])


@dataclass(frozen=True)
class BreakStep:
    roads: tuple
    types: tuple
    alpha: float
    delta_cost: float
    edges_before: int
    edges_after: int


@dataclass
class BreakTrace:
    steps: list = field(default_factory=list)

    def to_list(self) -> list[dict]:
        return [
            {
                "roads": list(s.roads),
                "types": list(s.types),
                "alpha": s.alpha,
                "delta_cost": s.delta_cost,
                "edges_before": s.edges_before,
                "edges_after": s.edges_after,
            }
            for s in self.steps
        ]


def build_support_graph(f: np.ndarray, support_threshold: float = SUPPORT_THRESHOLD) -> SupportGraph:
    f = np.asarray(f, dtype=float)
    n, m = f.shape
    edges = frozenset((int(i), int(j)) for i, j in np.argwhere(f > support_threshold))
    return SupportGraph(n, m, edges)


def find_cycle(g: SupportGraph) -> Cycle | None:
    """Return some simple cycle of the support graph, or ``None`` if it is a forest.

    Iterative DFS from each unvisited road node, in index order; the first back
    edge found closes the cycle.
    """
    adj = {("r", i): [("t", j) for j in g.road_neighbors(i)] for i in range(g.n)}
    adj.update({("t", j): [("r", i) for i in g.type_neighbors(j)] for j in range(g.m)})
    parent = {}
    depth = {}
    for root in [("r", i) for i in range(g.n)] + [("t", j) for j in range(g.m)]:
        if root in depth:
            continue
        depth[root] = 0
        parent[root] = None
        stack = [(root, iter(adj[root]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                continue
            if nxt == parent[node]:
                continue
            if nxt in depth:
                if depth[nxt] < depth[node]:
                    return _close_cycle(node, nxt, parent)
                continue
            parent[nxt] = node
            depth[nxt] = depth[node] + 1
            stack.append((nxt, iter(adj[nxt])))
    return None


def _close_cycle(node, ancestor, parent) -> Cycle:
    path = [node]
    while path[-1] != ancestor:
        path.append(parent[path[-1]])
    path.reverse()
    # rotate so the walk starts on a road node
    if path[0][0] == "t":
        path = path[1:] + path[:1]
    roads = tuple(v for kind, v in path[0::2])
    types = tuple(v for kind, v in path[1::2])
    return Cycle(roads, types).canonical()


def cycle_direction(cycle: Cycle, n: int, m: int) -> np.ndarray:
    """Flow-shift pattern around ``cycle``.

    Type ``types[k]`` moves from ``roads[k]`` to ``roads[k+1]``; the last type
    wraps back to ``roads[0]``. Each road row gets one +1 and one -1, and each
    type column sums to zero.
    """
    if max(cycle.roads) >= n or max(cycle.types) >= m or min(cycle.roads + cycle.types) < 0:
        raise CycleError("cycle refers to roads or types outside the instance")
    d = np.zeros((n, m))
    r = cycle.length
    for k, j in enumerate(cycle.types):
        d[cycle.roads[k], j] = -1.0
        d[cycle.roads[(k + 1) % r], j] = 1.0
    return d


def max_step(f: np.ndarray, d: np.ndarray) -> float:
    """Largest ``alpha`` with ``f + alpha * d >= 0``."""
    dec = d < 0
    if not dec.any():
        raise CycleError("direction decreases no entry")
    alpha = float(f[dec].min())
    if alpha <= 0:
        raise SpuriousCycleError(f"maximal step {alpha} is not positive")
    return alpha


def max_types_sharing(f: np.ndarray, support_threshold: float = SUPPORT_THRESHOLD) -> int:
    """Largest number of roads any two distinct types both use."""
    used = (np.asarray(f) > support_threshold).astype(int)
    shared = used.T @ used
    np.fill_diagonal(shared, 0)
    return int(shared.max()) if shared.size else 0


def break_cycles(inst: NetworkInstance, f: np.ndarray, support_threshold: float = SUPPORT_THRESHOLD,
                 cost_tol: float = COST_TOL, trace: BreakTrace | None = None) -> np.ndarray:
    """Remove every cycle from the support of a stationary routing without changing its cost.

    Sub-threshold entries are zeroed and the columns rescaled to demand first.
    Each step pushes flow around one cycle until an entry hits zero.
    """
    f = np.array(f, dtype=float)
    f[f <= support_threshold] = 0.0
    f = renormalize(inst, f)
    scale = max(1.0, float(inst.demand.max()))
    for _ in range(inst.n * inst.m + 1):
        g = build_support_graph(f, support_threshold)
        cyc = find_cycle(g)
        if cyc is None:
            return f
        d = cycle_direction(cyc, inst.n, inst.m)
        alpha = max_step(f, d)
        before = social_cost(inst, f)
        f = f + alpha * d
        dec = d < 0
        f[dec & (f <= 1e-13 * scale)] = 0.0
        after = social_cost(inst, f)
        edges_after = len(build_support_graph(f, support_threshold))
        if abs(after - before) > cost_tol * (1 + abs(before)):
            raise CostDriftError(
                f"cost moved by {after - before:.3e} breaking cycle roads={cyc.roads} types={cyc.types}"
            )
        if edges_after >= len(g):
            raise RuntimeError("cycle break did not remove a support edge")
        if trace is not None:
            trace.steps.append(BreakStep(cyc.roads, cyc.types, alpha, after - before, len(g), edges_after))
    raise RuntimeError(f"cycle breaking exceeded {inst.n * inst.m} steps")
