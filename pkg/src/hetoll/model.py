"""Parallel-road congestion game with heterogeneous vehicle types.

Road ``i`` has affine latency ``l_i(f) = b[i] + sum_j a[i, j] * f[i, j]``.
Flows are dense ``(n, m)`` arrays: row = road, column = vehicle type.
Social cost is total latency weighted by road flow,
``J(f) = sum_i l_i(f) * sum_j f[i, j]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEAS_TOL = 1e-9


class InstanceError(ValueError):
    """Malformed or invalid network instance."""


class InvalidRoadError(IndexError):
    pass


@dataclass(frozen=True)
class NetworkInstance:
    a: np.ndarray
    b: np.ndarray
    demand: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = np.array(self.a, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float, ndmin=1)
        demand = np.array(self.demand, dtype=float, ndmin=1)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise InstanceError(f"latency slopes must be an (n, m) matrix, got shape {a.shape}")
        n, m = a.shape
        if b.shape != (n,):
            raise InstanceError(f"expected {n} free-flow latencies, got shape {b.shape}")
        if demand.shape != (m,):
            raise InstanceError(f"expected {m} demands, got shape {demand.shape}")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise InstanceError("all latency slopes a[i][j] must be finite and > 0")
        if not np.all(np.isfinite(b)) or np.any(b < 0):
            raise InstanceError("all free-flow latencies b[i] must be finite and >= 0")
        if not np.all(np.isfinite(demand)) or np.any(demand <= 0):
            raise InstanceError("all demands must be finite and > 0")
        for arr in (a, b, demand):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "demand", demand)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.a.shape[1]

    @property
    def total_demand(self) -> float:
        return float(self.demand.sum())

    def to_dict(self) -> dict:
        out = {
            "roads": [{"a": [float(x) for x in self.a[i]], "b": float(self.b[i])} for i in range(self.n)],
            "demands": [float(x) for x in self.demand],
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> NetworkInstance:
        try:
            roads = doc["roads"]
            demands = doc["demands"]
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"instance document missing key {exc}") from None
        if not isinstance(roads, list) or not roads:
            raise InstanceError("'roads' must be a non-empty array")
        try:
            a = [[float(x) for x in r["a"]] for r in roads]
            b = [float(r["b"]) for r in roads]
            d = [float(x) for x in demands]
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"bad road or demand entry: {exc}") from None
        if len({len(row) for row in a}) != 1:
            raise InstanceError("every road must list the same number of slopes")
        return cls(np.array(a), np.array(b), np.array(d), name=str(doc.get("name", "")))


def load_instance(path: str | Path) -> NetworkInstance:
    with open(path) as fh:
        return NetworkInstance.from_dict(json.load(fh))


def _check_shape(inst: NetworkInstance, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (inst.n, inst.m):
        raise ValueError(f"flow shape {f.shape} does not match instance ({inst.n}, {inst.m})")
    return f


def _check_road(inst: NetworkInstance, i: int) -> int:
    if not 0 <= i < inst.n:
        raise InvalidRoadError(f"road index {i} out of range for {inst.n} roads")
    return i


def latency(inst: NetworkInstance, f: np.ndarray, i: int) -> float:
    f = _check_shape(inst, f)
    i = _check_road(inst, i)
    return float(inst.b[i] + inst.a[i] @ f[i])


def latencies(inst: NetworkInstance, f: np.ndarray) -> np.ndarray:
    """All road latencies at once, shape ``(n,)``."""
    f = _check_shape(inst, f)
    return inst.b + np.einsum("ij,ij->i", inst.a, f)


def social_cost(inst: NetworkInstance, f: np.ndarray) -> float:
    f = _check_shape(inst, f)
    return float(latencies(inst, f) @ f.sum(axis=1))


def social_cost_gradient(inst: NetworkInstance, f: np.ndarray) -> np.ndarray:
    """Gradient of the social cost as an ``(n, m)`` array.

    Entry ``(i, j)`` is ``l_i(f) + a[i, j] * F_i`` with ``F_i`` the road total.
    Use ``.ravel()`` for the road-major flat ordering.
    """
    f = _check_shape(inst, f)
    return latencies(inst, f)[:, None] + inst.a * f.sum(axis=1)[:, None]


def hessian_block(inst: NetworkInstance, i: int) -> np.ndarray:
    """Second derivatives of the social cost within road ``i``.

    ``H_i[j, k] = a[i, j] + a[i, k]``; blocks for distinct roads are zero.
    """
    i = _check_road(inst, i)
    row = inst.a[i]
    return row[:, None] + row[None, :]


def hessian(inst: NetworkInstance) -> np.ndarray:
    """Full block-diagonal Hessian in road-major flat ordering."""
    n, m = inst.n, inst.m
    h = np.zeros((n * m, n * m))
    for i in range(n):
        h[i * m:(i + 1) * m, i * m:(i + 1) * m] = hessian_block(inst, i)
    return h


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    worst_negativity: float
    worst_conservation: float
    conservation_residuals: np.ndarray = field(repr=False)

    def __bool__(self):
        return self.feasible


def check_feasible(inst: NetworkInstance, f: np.ndarray, tol: float = FEAS_TOL) -> FeasibilityVerdict:
    """Nonnegativity and per-type conservation, each within ``tol``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (inst.n, inst.m):
        return FeasibilityVerdict(False, np.inf, np.inf, np.full(inst.m, np.inf))
    neg = float(max(0.0, -f.min()))
    resid = f.sum(axis=0) - inst.demand
    cons = float(np.abs(resid).max())
    return FeasibilityVerdict(neg <= tol and cons <= tol, neg, cons, resid)


def renormalize(inst: NetworkInstance, f: np.ndarray) -> np.ndarray:
    """Clip negatives and rescale each type column to its demand."""
    f = np.clip(_check_shape(inst, f), 0.0, None)
    totals = f.sum(axis=0)
    out = f.copy()
    for j in range(inst.m):
        if totals[j] > 0:
            out[:, j] *= inst.demand[j] / totals[j]
        else:
            out[:, j] = inst.demand[j] / inst.n
    return out


def random_instance(rng: np.random.Generator, n: int, m: int, *, slope=(0.5, 3.0),
                    free_flow=(0.0, 2.0), demand=(0.5, 2.0), name: str = "") -> NetworkInstance:
    return NetworkInstance(
        rng.uniform(*slope, size=(n, m)),
        rng.uniform(*free_flow, size=n),
        rng.uniform(*demand, size=m),
        name=name,
    )


def random_feasible_flow(inst: NetworkInstance, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the product of scaled simplices (exponential spacings)."""
    e = rng.exponential(size=(inst.n, inst.m))
    return e / e.sum(axis=0) * inst.demand


def _verify_hessian_consistency() -> None:
    # second differences of social_cost must reproduce hessian_block exactly
    inst = NetworkInstance([[1.0, 2.0], [3.0, 0.5]], [0.5, 1.0], [1.0, 1.0])
    f = np.array([[0.25, 0.5], [0.75, 0.5]])
    for i in range(inst.n):
        hb = hessian_block(inst, i)
        for j in range(inst.m):
            for k in range(inst.m):
                e_j = np.zeros_like(f)
                e_k = np.zeros_like(f)
                e_j[i, j] = 1.0
                e_k[i, k] = 1.0
                d2 = (social_cost(inst, f + e_j + e_k) - social_cost(inst, f + e_j)
                      - social_cost(inst, f + e_k) + social_cost(inst, f))
                assert abs(d2 - hb[j, k]) < 1e-9, "social cost form disagrees with Hessian blocks"


_verify_hessian_consistency()
