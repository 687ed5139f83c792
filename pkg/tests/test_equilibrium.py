import numpy as np
import pytest

from hetoll.equilibrium import (EquilibriumConfig, best_response, compute_equilibrium, uniqueness_probe,
                                wardrop_violation)
from hetoll.model import NetworkInstance, random_instance
from hetoll.tolls import synthesize_tolls

from .test_tolls import acyclic_optimum


def test_violation_examples(two_road):
    assert wardrop_violation(two_road, None, np.array([[1.0], [0.0]])) == 0.0
    assert wardrop_violation(two_road, None, np.array([[0.5], [0.5]])) == pytest.approx(1.0)
    fs = np.array([[0.75], [0.25]])
    assert wardrop_violation(two_road, synthesize_tolls(two_road, fs), fs) <= 1e-12


def test_best_response_examples(two_road):
    assert best_response(two_road, None, np.array([[0.0], [1.0]]), 0) == pytest.approx([1.0, 0.0])
    two = NetworkInstance([[1.0], [1.0]], [0.0, 0.0], [1.0])
    assert best_response(two, None, np.array([[1.0], [0.0]]), 0) == pytest.approx([0.5, 0.5])
    three = NetworkInstance([[1.0], [1.0], [1.0]], [0.0, 0.0, 0.0], [1.0])
    tolls = np.array([[100.0], [0.0], [100.0]])
    assert best_response(three, tolls, np.full((3, 1), 1 / 3), 0) == pytest.approx([0.0, 1.0, 0.0])


def test_two_road_untolled(two_road):
    rep = compute_equilibrium(two_road, None, EquilibriumConfig())
    assert rep.converged and rep.eps_violation <= 1e-6
    assert rep.flow.ravel() == pytest.approx([1.0, 0.0], abs=1e-5)
    assert rep.social_cost == pytest.approx(1.0, abs=1e-5)


def test_two_road_tolled(two_road):
    rep = compute_equilibrium(two_road, np.array([[0.5], [0.0]]))
    assert rep.flow.ravel() == pytest.approx([0.75, 0.25], abs=1e-5)
    assert rep.social_cost == pytest.approx(0.875, abs=1e-5)
    assert rep.costs.ravel() == pytest.approx([1.25, 1.25], abs=1e-5)


def test_start_at_reference_is_immediate(rng):
    inst = random_instance(rng, 4, 3)
    fs = acyclic_optimum(inst)
    rep = compute_equilibrium(inst, synthesize_tolls(inst, fs), f0=fs, reference=fs)
    assert rep.rounds == 0 and rep.distance_to_reference == 0.0
    probe = uniqueness_probe(inst, synthesize_tolls(inst, fs), fs, EquilibriumConfig(starts=1), include_reference=True)
    assert probe.max_distance == 0.0


@pytest.mark.parametrize("b2", [0.0, 0.3, 1.0, 2.5])
def test_homogeneous_closed_form(b2):
    # l1 = a1 f, l2 = b2 + a2 f, demand D: interior split solves a1 x = b2 + a2 (D - x)
    a1, a2, d = 1.5, 0.5, 2.0
    inst = NetworkInstance([[a1], [a2]], [0.0, b2], [d])
    x = min(d, (b2 + a2 * d) / (a1 + a2))
    rep = compute_equilibrium(inst, None)
    assert rep.flow.ravel() == pytest.approx([x, d - x], abs=1e-6)


def test_cost_equality_in_converged_reports(rng):
    for _ in range(10):
        inst = random_instance(rng, 3, 3)
        rep = compute_equilibrium(inst, rng.uniform(0, 1, (3, 3)))
        assert rep.converged
        for j in range(3):
            used = rep.flow[:, j] > 1e-7
            assert np.ptp(rep.costs[used, j]) <= 1e-6


def test_probe_reports_multiplicity(symmetric):
    probe = uniqueness_probe(symmetric, None, np.array([[1.0, 0.0], [0.0, 1.0]]), EquilibriumConfig(starts=20))
    assert not probe.non_converged
    assert probe.max_distance > 0.1


def test_non_convergence_is_reported(two_road):
    rep = compute_equilibrium(two_road, None, EquilibriumConfig(max_rounds=1, eps=1e-12), f0=np.array([[0.0], [1.0]]))
    assert not rep.converged and rep.status == "max_rounds"


def test_probe_parallel_matches_serial(rng):
    inst = random_instance(rng, 3, 3)
    fs = acyclic_optimum(inst)
    t = synthesize_tolls(inst, fs)
    a = uniqueness_probe(inst, t, fs, EquilibriumConfig(starts=12))
    b = uniqueness_probe(inst, t, fs, EquilibriumConfig(starts=12, workers=4))
    assert a.distances == b.distances


def test_config_validation():
    with pytest.raises(ValueError):
        EquilibriumConfig(damping=0.0)
    with pytest.raises(ValueError):
        EquilibriumConfig(eps=0.0)
