"""Equilibria of the tolled game via damped best-response dynamics.

A type's best response, holding the other types fixed, is a water-filling:
its demand goes to the cheapest roads until their experienced costs tie.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import CONVERGED, core
from .cycles import SUPPORT_THRESHOLD
from .model import NetworkInstance, latencies, random_feasible_flow, social_cost
from .tolls import TollMatrix

STATUS_NAMES = {0: "converged", 1: "max_rounds", 2: "stalled"}


@dataclass(frozen=True)
class EquilibriumConfig:
    starts: int = 100
    max_rounds: int = 20000
    damping: float = 0.3
    eps: float = 1e-6
    seed: int = 0
    support_threshold: float = SUPPORT_THRESHOLD
    window: int = 500
    workers: int = 1

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.starts < 1 or self.max_rounds < 0 or self.window < 1:
            raise ValueError("starts, max_rounds and window must be positive")


@dataclass(frozen=True)
class EquilibriumReport:
    flow: np.ndarray
    costs: np.ndarray
    eps_violation: float
    converged: bool
    social_cost: float
    rounds: int
    status: str
    distance_to_reference: float | None = None

    def to_dict(self) -> dict:
        return {
            "flow": self.flow.tolist(),
            "costs": self.costs.tolist(),
            "eps_violation": self.eps_violation,
            "converged": self.converged,
            "status": self.status,
            "rounds": self.rounds,
            "social_cost": self.social_cost,
            "distance_to_reference": self.distance_to_reference,
        }


@dataclass(frozen=True)
class ProbeReport:
    max_distance: float
    distances: list
    non_converged: list
    reports: list = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "starts": len(self.reports),
            "max_distance": self.max_distance,
            "non_converged": self.non_converged,
            "distances": self.distances,
        }


def toll_array(inst: NetworkInstance, tolls) -> np.ndarray:
    if tolls is None:
        return np.zeros((inst.n, inst.m))
    if isinstance(tolls, TollMatrix):
        tolls = tolls.tolls
    tolls = np.asarray(tolls, dtype=float)
    if tolls.shape != (inst.n, inst.m):
        raise ValueError(f"toll shape {tolls.shape} does not match instance ({inst.n}, {inst.m})")
    return tolls


def experienced_costs(inst: NetworkInstance, tolls, f: np.ndarray) -> np.ndarray:
    return latencies(inst, f)[:, None] + toll_array(inst, tolls)


def wardrop_violation(inst: NetworkInstance, tolls, f: np.ndarray,
                      support_threshold: float = SUPPORT_THRESHOLD) -> float:
    """Worst excess cost of a used road over the cheapest road, across types."""
    return float(core.wardrop_violation(inst.a, inst.b, toll_array(inst, tolls), np.asarray(f, float),
                                        support_threshold))


def best_response(inst: NetworkInstance, tolls, f: np.ndarray, j: int) -> np.ndarray:
    """Type ``j``'s equilibrium split against the other types' current flows."""
    f = np.asarray(f, dtype=float)
    tau = toll_array(inst, tolls)
    others = latencies(inst, f) - inst.a[:, j] * f[:, j]
    return core.water_fill(others + tau[:, j], inst.a[:, j], inst.demand[j])


def compute_equilibrium(inst: NetworkInstance, tolls, cfg: EquilibriumConfig | None = None,
                        f0: np.ndarray | None = None, reference: np.ndarray | None = None) -> EquilibriumReport:
    """Run damped round-robin best response from ``f0`` until the Wardrop gap is below ``eps``.

    Without ``f0`` the start is drawn from ``default_rng([seed, 0])``.
    Non-convergence is reported through ``converged``/``status``, never raised.
    """
    cfg = cfg or EquilibriumConfig()
    tau = toll_array(inst, tolls)
    if f0 is None:
        f0 = random_feasible_flow(inst, np.random.default_rng([cfg.seed, 0]))
    f, rounds, viol, status = core.br_dynamics(inst.a, inst.b, inst.demand, tau, np.asarray(f0, float),
                                               cfg.damping, cfg.eps, cfg.max_rounds,
                                               cfg.support_threshold, cfg.window)
    dist = None if reference is None else float(np.linalg.norm(f - reference))
    return EquilibriumReport(
        flow=f,
        costs=experienced_costs(inst, tau, f),
        eps_violation=float(viol),
        converged=status == CONVERGED,
        social_cost=social_cost(inst, f),
        rounds=int(rounds),
        status=STATUS_NAMES[status],
        distance_to_reference=dist,
    )


def uniqueness_probe(inst: NetworkInstance, tolls, f_ref: np.ndarray, cfg: EquilibriumConfig | None = None,
                     include_reference: bool = False) -> ProbeReport:
    """Equilibria reached from ``cfg.starts`` random starts and their distance to ``f_ref``.

    Start ``k`` uses ``default_rng([seed, k])``; with ``include_reference`` the
    first start is ``f_ref`` itself. Results are merged in start order.
    """
    cfg = cfg or EquilibriumConfig()
    f_ref = np.asarray(f_ref, dtype=float)

    def start(k):
        if include_reference and k == 0:
            f0 = f_ref
        else:
            f0 = random_feasible_flow(inst, np.random.default_rng([cfg.seed, k]))
        return compute_equilibrium(inst, tolls, cfg, f0=f0, reference=f_ref)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            reports = list(pool.map(start, range(cfg.starts)))
    else:
        reports = [start(k) for k in range(cfg.starts)]
    distances = [r.distance_to_reference for r in reports]
    return ProbeReport(
        max_distance=max(distances),
        distances=distances,
        non_converged=[k for k, r in enumerate(reports) if not r.converged],
        reports=reports,
    )

