"""Compiled and pure-Python kernels must agree; each is also checked against an independent oracle."""

import numpy as np
import pytest

from hetoll import _core_py
from hetoll.model import random_feasible_flow, random_instance, social_cost
from hetoll.optimum import _compositions

from .conftest import _core


def simplex_kkt_ok(v, x, total, tol=1e-10):
    # x = max(v - theta, 0) for a single threshold theta
    if abs(x.sum() - total) > tol or x.min() < 0:
        return False
    pos = x > 0
    theta = (v - x)[pos]
    if np.ptp(theta) > tol:
        return False
    return bool(np.all(v[~pos] <= theta[0] + tol))


def test_project_simplex_kkt(backend, rng):
    for _ in range(500):
        n = int(rng.integers(1, 12))
        v = rng.normal(scale=3, size=n)
        total = float(rng.uniform(0.1, 5))
        x = backend.project_simplex(v, total)
        assert simplex_kkt_ok(v, x, total)


def test_project_simplex_two_var_enumeration(backend):
    v = np.array([2.0, 0.0])
    ts = np.linspace(0, 1, 100001)
    dist = (ts - v[0]) ** 2 + (1 - ts - v[1]) ** 2
    best = ts[dist.argmin()]
    x = backend.project_simplex(v, 1.0)
    assert x == pytest.approx([best, 1 - best], abs=1e-5)


def waterfill_ok(base, slope, total, x, tol=1e-9):
    cost = base + slope * x
    used = x > 0
    level = cost[used].max()
    return (abs(x.sum() - total) < tol and np.ptp(cost[used]) < tol
            and np.all(cost[~used] >= level - tol))


def test_water_fill_equalizes(backend, rng):
    for _ in range(500):
        n = int(rng.integers(1, 8))
        base = rng.uniform(0, 5, n)
        slope = rng.uniform(0.1, 3, n)
        total = float(rng.uniform(0.1, 3))
        assert waterfill_ok(base, slope, total, backend.water_fill(base, slope, total))


def test_water_fill_ties_split_equally(backend):
    x = backend.water_fill(np.array([1.0, 1.0, 5.0]), np.array([2.0, 2.0, 1.0]), 1.0)
    assert x == pytest.approx([0.5, 0.5, 0.0])


def test_grid_search_matches_enumeration(backend, rng):
    for _ in range(20):
        n, m = rng.integers(1, 4, size=2)
        inst = random_instance(rng, n, m)
        splits = [np.ascontiguousarray(_compositions(4, n) * d / 4, dtype=float) for d in inst.demand]
        idx, cost = backend.grid_search(inst.a, inst.b, splits)
        costs = []
        for combo in np.ndindex(*[s.shape[0] for s in splits]):
            f = np.column_stack([splits[j][k] for j, k in enumerate(combo)])
            costs.append((social_cost(inst, f), combo))
        best = min(costs, key=lambda c: c[0])
        assert cost == pytest.approx(best[0], rel=1e-12)
        f = np.column_stack([splits[j][k] for j, k in enumerate(idx)])
        assert social_cost(inst, f) == pytest.approx(cost, rel=1e-12)


@pytest.mark.skipif(_core is None, reason="compiled extension not built")
def test_backends_agree(rng):
    for _ in range(30):
        n, m = rng.integers(1, 5, size=2)
        inst = random_instance(rng, n, m)
        f0 = random_feasible_flow(inst, rng)
        fp, _, rp, _ = _core_py.pgd(inst.a, inst.b, inst.demand, f0, 200, 1e-12)
        fc, _, rc, _ = _core.pgd(inst.a, inst.b, inst.demand, f0, 200, 1e-12)
        assert social_cost(inst, fp) == pytest.approx(social_cost(inst, fc), rel=1e-6)
        tolls = rng.uniform(0, 1, (n, m))
        ep = _core_py.br_dynamics(inst.a, inst.b, inst.demand, tolls, f0, 0.3, 1e-6, 5000, 1e-7, 500)
        ec = _core.br_dynamics(inst.a, inst.b, inst.demand, tolls, f0, 0.3, 1e-6, 5000, 1e-7, 500)
        assert ep[1] == ec[1] and ep[3] == ec[3]
        assert np.allclose(ep[0], ec[0], atol=1e-9)
        v = [k.wardrop_violation(inst.a, inst.b, tolls, f0, 1e-7) for k in (_core_py, _core)]
        assert v[0] == pytest.approx(v[1], abs=1e-12)
