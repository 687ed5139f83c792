"""Social-optimum search over the product of per-type scaled simplices.

The social cost is an indefinite quadratic in general, so the solver is a
multi-start local method; ``brute_force_optimum`` is the exhaustive grid
check used to certify it on small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import CONVERGED, core
from .model import NetworkInstance, random_feasible_flow, social_cost, social_cost_gradient

# residual at which the first gradient phase hands over to the face polish
COARSE_TOL = 1e-5


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, best: OptimizationResult | None = None):
        super().__init__(message)
        self.best = best


class InstanceTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    starts: int = 32
    max_iters: int = 20000
    step_rule: str = "armijo"
    armijo_c: float = 1e-4
    shrink: float = 0.5
    tol_grad: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_grad <= 0 or self.armijo_c <= 0 or not 0 < self.shrink < 1:
            raise ValueError("tolerances must be positive and 0 < shrink < 1")
        if self.step_rule != "armijo":
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class OptimizationResult:
    flow: np.ndarray
    cost: float
    stationarity_residual: float
    start_index: int
    converged: bool = True


def project_to_simplex(v, total: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = total}``."""
    if total < 0:
        raise ValueError("simplex total must be nonnegative")
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty vector")
    if total == 0:
        return np.zeros_like(v)
    if np.all(v >= 0) and math.isclose(v.sum(), total, rel_tol=0, abs_tol=1e-15 * max(1.0, total)):
        return v.copy()
    return core.project_simplex(v, float(total))


def projected_gradient_residual(inst: NetworkInstance, f: np.ndarray) -> float:
    """Norm of ``f - P(f - grad J(f))``; zero exactly at first-order stationary points."""
    g = social_cost_gradient(inst, f)
    proj = np.column_stack([core.project_simplex(f[:, j] - g[:, j], inst.demand[j]) for j in range(inst.m)])
    return float(np.linalg.norm(f - proj))


def _polish(inst: NetworkInstance, f: np.ndarray, rounds: int = 3) -> np.ndarray:
    """Newton steps on the current face: solve the equality-constrained KKT system on the support.

    The face system is singular when the support has cycles, so it is solved
    in the least-squares sense. A step is kept only if it stays feasible,
    does not raise the cost and lowers the stationarity residual.
    """
    cost = social_cost(inst, f)
    resid = projected_gradient_residual(inst, f)
    for _ in range(rounds):
        support = np.argwhere(f > 0)
        k = len(support)
        if k == 0:
            break
        g = social_cost_gradient(inst, f)
        m = inst.m
        kkt = np.zeros((k + m, k + m))
        rhs = np.zeros(k + m)
        for p, (i, j) in enumerate(support):
            for q, (i2, j2) in enumerate(support):
                if i == i2:
                    kkt[p, q] = inst.a[i, j] + inst.a[i, j2]
            kkt[p, k + j] = -1.0
            kkt[k + j, p] = 1.0
            rhs[p] = -g[i, j]
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        trial = f.copy()
        trial[support[:, 0], support[:, 1]] += sol[:k]
        if trial.min() < 0:
            break
        trial_cost = social_cost(inst, trial)
        trial_resid = projected_gradient_residual(inst, trial)
        if trial_cost > cost + 1e-12 * (1 + abs(cost)) or trial_resid >= resid:
            break
        f, cost, resid = trial, trial_cost, trial_resid
    return f


def local_descent(inst: NetworkInstance, f0: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, float, int]:
    """One projected-gradient run from ``f0`` followed by a face polish.

    Gradient steps converge linearly, so the run first stops at a coarse
    residual and tries the polish; only if that misses ``tol_grad`` does it
    carry on to the full tolerance. Returns ``(flow, residual, status)``.
    """
    coarse = max(cfg.tol_grad, COARSE_TOL)
    f, used, _, status = core.pgd(inst.a, inst.b, inst.demand, f0, cfg.max_iters,
                                  coarse, cfg.armijo_c, cfg.shrink)
    f = _polish(inst, f)
    resid = projected_gradient_residual(inst, f)
    if resid > cfg.tol_grad and status == CONVERGED:
        f, _, resid, status = core.pgd(inst.a, inst.b, inst.demand, f, cfg.max_iters - used,
                                       cfg.tol_grad, cfg.armijo_c, cfg.shrink)
        f = _polish(inst, f)
        resid = projected_gradient_residual(inst, f)
    if resid <= cfg.tol_grad:
        status = CONVERGED
    return f, resid, status


def solve_social_optimum(inst: NetworkInstance, cfg: SolverConfig | None = None) -> OptimizationResult:
    """Best stationary point over ``cfg.starts`` random starts.

    Start ``k`` draws its initial flow from ``default_rng([seed, k])``, so the
    result does not depend on evaluation order. Ties keep the lowest index.
    """
    cfg = cfg or SolverConfig()
    best = None
    fallback = None
    for k in range(cfg.starts):
        rng = np.random.default_rng([cfg.seed, k])
        f, resid, status = local_descent(inst, random_feasible_flow(inst, rng), cfg)
        cost = social_cost(inst, f)
        res = OptimizationResult(f, cost, resid, k, status == CONVERGED)
        if res.converged:
            if best is None or cost < best.cost - 1e-12 * (1 + abs(best.cost)):
                best = res
        elif fallback is None or cost < fallback.cost:
            fallback = res
    if best is None:
        raise ConvergenceError(f"no start reached tol_grad={cfg.tol_grad} in {cfg.max_iters} iterations",
                               fallback)
    return best


def _compositions(units: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``units``."""
    if parts == 1:
        return np.array([[units]])
    rows = []
    for bars in itertools.combinations(range(units + parts - 1), parts - 1):
        edges = (-1,) + bars + (units + parts - 1,)
        rows.append([edges[p + 1] - edges[p] - 1 for p in range(parts)])
    return np.array(rows)


def grid_size(inst: NetworkInstance, grid_step: float) -> int:
    total = 1
    for d in inst.demand:
        units = max(1, math.ceil(d / grid_step - 1e-9))
        total *= math.comb(units + inst.n - 1, inst.n - 1)
    return total


def brute_force_optimum(inst: NetworkInstance, grid_step: float,
                        max_candidates: float = 1e8) -> OptimizationResult:
    """Exhaustive grid minimum of the social cost.

    Type ``j`` is split in ``ceil(demand[j] / grid_step)`` equal units so the
    grid always contains the exact demand.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    count = grid_size(inst, grid_step)
    if count > max_candidates:
        raise InstanceTooLargeError(f"{count} grid candidates exceeds limit {max_candidates:g}")
    splits = []
    for d in inst.demand:
        units = max(1, math.ceil(d / grid_step - 1e-9))
        splits.append(np.ascontiguousarray(_compositions(units, inst.n) * (d / units), dtype=float))
    idx, _ = core.grid_search(inst.a, inst.b, splits)
    f = np.column_stack([splits[j][idx[j]] for j in range(inst.m)])
    return OptimizationResult(f, social_cost(inst, f), projected_gradient_residual(inst, f), -1, True)
