import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetoll.model import (InstanceError, InvalidRoadError, NetworkInstance, check_feasible, hessian,
                          hessian_block, latency, load_instance, random_feasible_flow, random_instance,
                          renormalize, social_cost, social_cost_gradient)


def test_latency_examples():
    inst = NetworkInstance([[2.0, 1.0], [1.0, 1.0]], [3.0, 0.0], [1.0, 2.5])
    f = np.array([[1.0, 2.0], [0.0, 0.5]])
    assert latency(inst, f, 0) == 7.0
    g = np.array([[1.0, 2.0], [0.0, 0.0]])
    assert latency(inst, g, 1) == 0.0
    sym = NetworkInstance([[1.0, 1.0]], [0.0], [0.5, 0.5])
    assert latency(sym, np.array([[0.5, 0.5]]), 0) == 1.0


def test_latency_bad_road(two_road):
    with pytest.raises(InvalidRoadError):
        latency(two_road, np.zeros((2, 1)), 2)
    with pytest.raises(InvalidRoadError):
        hessian_block(two_road, -1)


def test_social_cost_examples(two_road):
    assert social_cost(two_road, np.array([[0.75], [0.25]])) == pytest.approx(0.875, abs=1e-15)
    assert social_cost(two_road, np.zeros((2, 1))) == 0.0
    single = NetworkInstance([[1.0, 2.0]], [0.5], [1.0, 2.0])
    f = np.array([[1.0, 2.0]])
    assert social_cost(single, f) == pytest.approx(3.0 * latency(single, f, 0))


def test_social_cost_grid_oracle(two_road):
    # independent check of the two-road optimum by dense enumeration
    xs = np.linspace(0, 1, 100001)
    costs = xs * xs + (1 - xs) * (1 + (1 - xs))
    assert costs.min() == pytest.approx(0.875, abs=1e-9)
    assert xs[costs.argmin()] == pytest.approx(0.75, abs=1e-5)


def test_social_cost_shape_mismatch(two_road):
    with pytest.raises(ValueError):
        social_cost(two_road, np.zeros((1, 2)))


def test_gradient_examples(two_road):
    g = social_cost_gradient(two_road, np.array([[1.0], [0.0]]))
    assert g[0, 0] == 2.0 and g[1, 0] == 1.0
    inst = NetworkInstance([[1.0, 2.0], [3.0, 4.0]], [0.5, 1.5], [1.0, 1.0])
    assert np.array_equal(social_cost_gradient(inst, np.zeros((2, 2))), np.array([[0.5, 0.5], [1.5, 1.5]]))


def central_diff(inst, f, h=1e-6):
    g = np.zeros_like(f)
    for idx in np.ndindex(f.shape):
        e = np.zeros_like(f)
        e[idx] = h
        g[idx] = (social_cost(inst, f + e) - social_cost(inst, f - e)) / (2 * h)
    return g


def test_gradient_matches_finite_differences(rng):
    for _ in range(200):
        n, m = rng.integers(1, 5, size=2)
        inst = random_instance(rng, n, m)
        f = random_feasible_flow(inst, rng)
        fd = central_diff(inst, f)
        g = social_cost_gradient(inst, f)
        assert np.all(np.abs(g - fd) <= 1e-5 * np.maximum(1.0, np.abs(fd)))


def test_hessian_examples():
    inst = NetworkInstance([[1.5, 4.0], [1.0, 1.0]], [0.0, 0.0], [1.0, 1.0])
    assert np.array_equal(hessian_block(inst, 0), [[3.0, 5.5], [5.5, 8.0]])
    assert np.array_equal(hessian_block(inst, 1), np.full((2, 2), 2.0))
    single = NetworkInstance([[2.5]], [0.0], [1.0])
    assert np.array_equal(hessian_block(single, 0), [[5.0]])


def test_hessian_matches_differentiated_gradient(rng):
    h = 1e-6
    for _ in range(50):
        n, m = rng.integers(1, 5, size=2)
        inst = random_instance(rng, n, m)
        f = random_feasible_flow(inst, rng)
        full = hessian(inst)
        for p in range(n * m):
            e = np.zeros(n * m)
            e[p] = h
            col = (social_cost_gradient(inst, f + e.reshape(n, m)).ravel()
                   - social_cost_gradient(inst, f - e.reshape(n, m)).ravel()) / (2 * h)
            assert np.allclose(col, full[:, p], atol=1e-5)
        off = full.copy()
        for i in range(n):
            off[i * m:(i + 1) * m, i * m:(i + 1) * m] = 0
        assert not off.any()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_block_structure_and_cost_identity(n, m, seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n, m)
    f = random_feasible_flow(inst, rng)
    for i in range(n):
        hb = hessian_block(inst, i)
        a = inst.a[i]
        assert np.array_equal(hb, hb.T)
        assert np.array_equal(hb, np.outer(a, np.ones(m)) + np.outer(np.ones(m), a))
    total = sum(latency(inst, f, i) * f[i].sum() for i in range(n))
    assert social_cost(inst, f) == pytest.approx(total, rel=1e-12)


def test_check_feasible_examples():
    inst = NetworkInstance([[1.0], [1.0]], [0.0, 0.0], [1.0])
    assert check_feasible(inst, np.array([[0.6], [0.4]]))
    v = check_feasible(inst, np.array([[0.6], [0.6]]))
    assert not v and v.worst_conservation == pytest.approx(0.2)
    assert check_feasible(inst, np.array([[-1e-12], [1.0]]), tol=1e-9)
    assert not check_feasible(inst, np.array([[-1e-3], [1.001]]))
    assert not check_feasible(inst, np.zeros((3, 1)))


def test_renormalize(rng):
    inst = random_instance(rng, 3, 2)
    f = renormalize(inst, np.array([[1.0, -0.1], [1.0, 2.0], [0.0, 2.0]]))
    assert check_feasible(inst, f, 1e-12)


@pytest.mark.parametrize("bad", [
    {"roads": [{"a": [0.0], "b": 0.0}], "demands": [1.0]},
    {"roads": [{"a": [1.0], "b": 0.0}], "demands": [0.0]},
    {"roads": [{"a": [1.0], "b": -1.0}], "demands": [1.0]},
    {"roads": [{"a": [1.0, 2.0], "b": 0.0}, {"a": [1.0], "b": 0.0}], "demands": [1.0, 1.0]},
    {"roads": [{"a": [1.0], "b": 0.0}], "demands": [1.0, 2.0]},
    {"roads": [], "demands": [1.0]},
    {"demands": [1.0]},
])
def test_instance_rejects(bad):
    with pytest.raises(InstanceError):
        NetworkInstance.from_dict(bad)


def test_instance_json_round_trip(tmp_path):
    doc = {"name": "x", "roads": [{"a": [1.0, 2.0], "b": 0.5}, {"a": [3.0, 1.0], "b": 0.0}], "demands": [1.0, 2.0]}
    p = tmp_path / "inst.json"
    p.write_text(json.dumps(doc))
    inst = load_instance(p)
    assert inst.n == 2 and inst.m == 2 and inst.a[1, 0] == 3.0 and inst.name == "x"
    assert inst.to_dict() == doc


def test_instance_is_immutable(two_road):
    with pytest.raises(ValueError):
        two_road.a[0, 0] = 5.0
