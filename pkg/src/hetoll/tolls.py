"""Toll schemes: type-differentiated optimal tolls and the comparison schemes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cycles import SUPPORT_THRESHOLD, build_support_graph, find_cycle
from .model import NetworkInstance, latencies


class TollPreconditionError(ValueError):
    pass


class TollConstantsError(ValueError):
    pass


@dataclass(frozen=True)
class TollConstants:
    mu: float
    big_p: float


@dataclass(frozen=True)
class TollMatrix:
    tolls: np.ndarray
    blocked: np.ndarray
    scheme: str = "paper"
    constants: TollConstants | None = None

    def to_dict(self) -> dict:
        out = {
            "scheme": self.scheme,
            "tolls": self.tolls.tolist(),
            "blocked": self.blocked.tolist(),
        }
        if self.constants is not None:
            out["mu"] = self.constants.mu
            out["P"] = self.constants.big_p
        return out


def _support_roads(f: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(f) > threshold


def choose_constants(inst: NetworkInstance, f_star: np.ndarray,
                     support_threshold: float = SUPPORT_THRESHOLD) -> TollConstants:
    """Smallest ``mu`` keeping tolls nonnegative, and a prohibitive ``P``.

    ``P`` exceeds ``mu`` plus the largest latency any road can reach at any
    feasible flow, so no type ever prefers a blocked road.
    """
    lat = latencies(inst, f_star)
    used_roads = _support_roads(f_star, support_threshold).any(axis=1)
    mu = float(lat[used_roads].max())
    bound = float((inst.b + inst.a.max(axis=1) * inst.total_demand).max())
    return TollConstants(mu, mu + bound + 1.0)


def synthesize_tolls(inst: NetworkInstance, f_star: np.ndarray, consts: TollConstants | None = None,
                     support_threshold: float = SUPPORT_THRESHOLD) -> TollMatrix:
    """Tolls under which ``f_star`` is the unique equilibrium.

    A type pays ``mu - l_i(f_star)`` on each road it uses in ``f_star`` and
    ``P`` everywhere else, so every used road costs exactly ``mu``.
    """
    f_star = np.asarray(f_star, dtype=float)
    if find_cycle(build_support_graph(f_star, support_threshold)) is not None:
        raise TollPreconditionError("support graph of f_star has a cycle; run break_cycles first")
    if consts is None:
        consts = choose_constants(inst, f_star, support_threshold)
    lat = latencies(inst, f_star)
    used = _support_roads(f_star, support_threshold)
    if consts.mu < lat[used.any(axis=1)].max():
        raise TollConstantsError(f"mu={consts.mu} is below the largest used-road latency")
    tolls = np.where(used, consts.mu - lat[:, None], consts.big_p)
    return TollMatrix(tolls, ~used, "paper", consts)


def anonymous_toll_costs(inst: NetworkInstance, tau_anon, f: np.ndarray) -> np.ndarray:
    """Experienced costs when every type pays the same toll on a road."""
    tau_anon = np.asarray(tau_anon, dtype=float)
    if tau_anon.shape != (inst.n,):
        raise ValueError(f"expected {inst.n} road tolls, got shape {tau_anon.shape}")
    if np.any(tau_anon < 0):
        raise ValueError("anonymous tolls must be nonnegative")
    return np.repeat((latencies(inst, f) + tau_anon)[:, None], inst.m, axis=1)


def anonymous_tolls_from_optimum(inst: NetworkInstance, f_star: np.ndarray,
                                 support_threshold: float = SUPPORT_THRESHOLD) -> TollMatrix:
    """Best guess at an anonymous analogue of the optimal tolls.

    Every road used by some type in ``f_star`` gets ``mu - l_i(f_star)`` for all
    types; roads nobody uses get ``P``.
    """
    consts = choose_constants(inst, f_star, support_threshold)
    lat = latencies(inst, f_star)
    road_used = _support_roads(f_star, support_threshold).any(axis=1)
    per_road = np.where(road_used, consts.mu - lat, consts.big_p)
    blocked = np.repeat(~road_used[:, None], inst.m, axis=1)
    return TollMatrix(np.repeat(per_road[:, None], inst.m, axis=1), blocked, "anonymous", consts)


def anonymous_tolls(inst: NetworkInstance, tau_anon) -> TollMatrix:
    tau_anon = np.asarray(tau_anon, dtype=float)
    if tau_anon.shape != (inst.n,) or np.any(tau_anon < 0):
        raise ValueError("anonymous tolls must be a nonnegative vector with one entry per road")
    return TollMatrix(np.repeat(tau_anon[:, None], inst.m, axis=1), np.zeros((inst.n, inst.m), bool),
                      "anonymous")


def marginal_cost_tolls(inst: NetworkInstance, f: np.ndarray) -> TollMatrix:
    """Per-type marginal externality ``a[i, j] * F_i`` evaluated at ``f``.

    Reduces to the classical ``a_i * f_i`` toll with a single type.
    """
    f = np.asarray(f, dtype=float)
    tolls = inst.a * f.sum(axis=1)[:, None]
    return TollMatrix(tolls, np.zeros((inst.n, inst.m), bool), "marginal")


def no_tolls(inst: NetworkInstance) -> TollMatrix:
    return TollMatrix(np.zeros((inst.n, inst.m)), np.zeros((inst.n, inst.m), bool), "none")
