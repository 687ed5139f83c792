"""Scenario files, the optimum -> acyclic -> tolls -> equilibrium pipeline, and ratio sweeps."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .cycles import BreakTrace, break_cycles, build_support_graph, find_cycle, max_types_sharing
from .equilibrium import EquilibriumConfig, uniqueness_probe
from .model import InstanceError, NetworkInstance, check_feasible, social_cost
from .optimum import (ConvergenceError, SolverConfig, brute_force_optimum, grid_size,
                      solve_social_optimum)
from .tolls import (anonymous_tolls, anonymous_tolls_from_optimum, choose_constants,
                    marginal_cost_tolls, no_tolls, synthesize_tolls)

MODES = ("optimum", "pipeline", "equilibrium", "poa-study")
SCHEMES = ("paper", "anonymous", "marginal", "none")
ORACLE_STEPS = (0.02, 0.05, 0.1, 0.2, 0.25, 0.5, 1.0)
ORACLE_BUDGET = 1e8
ORACLE_SLACK = 0.05
UNIQUENESS_TOL = 1e-4
RATIO_TOL = 1e-6

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_STAGE = 3
EXIT_NONCONVERGED = 4


class ScenarioError(ValueError):
    """Unreadable or invalid scenario/instance file."""


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, report: dict | None = None):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
        self.report = report


@dataclass(frozen=True)
class Sweep:
    field: str
    values: tuple


@dataclass(frozen=True)
class Scenario:
    instance: NetworkInstance
    mode: str = "pipeline"
    toll_scheme: str = "paper"
    sweep: Sweep | None = None
    anonymous_tolls: tuple | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    equilibrium: EquilibriumConfig = field(default_factory=EquilibriumConfig)
    oracle: bool = False
    name: str = ""
    raw_instance: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.toll_scheme not in SCHEMES:
            raise ScenarioError(f"toll_scheme must be one of {SCHEMES}, got {self.toll_scheme!r}")
        if self.sweep is not None and self.mode != "poa-study":
            raise ScenarioError("a sweep is only valid in poa-study mode")
        if self.anonymous_tolls is not None and len(self.anonymous_tolls) != self.instance.n:
            raise ScenarioError("anonymous_tolls needs one entry per road")

    def provenance(self) -> dict:
        return {
            "seed": self.solver.seed,
            "solver": asdict(self.solver),
            "equilibrium": asdict(self.equilibrium),
            "oracle": self.oracle,
            "backend": _kernels.BACKEND,
        }

    def echo(self) -> dict:
        out = {
            "name": self.name,
            "mode": self.mode,
            "toll_scheme": self.toll_scheme,
            "instance": self.instance.to_dict(),
        }
        if self.sweep is not None:
            out["sweep"] = {"field": self.sweep.field, "values": list(self.sweep.values)}
        if self.anonymous_tolls is not None:
            out["anonymous_tolls"] = list(self.anonymous_tolls)
        return out


def _read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read file: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_instance_file(path: str | Path) -> NetworkInstance:
    try:
        return NetworkInstance.from_dict(_read_json(path))
    except InstanceError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def scenario_from_dict(doc: dict, *, source: str = "<scenario>", seed: int | None = None,
                       starts: int | None = None, tol: float | None = None,
                       oracle: bool | None = None) -> Scenario:
    """Build a scenario; command-line overrides win over file values."""
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: scenario must be a JSON object")
    inst_doc = doc.get("instance", doc)
    try:
        inst = NetworkInstance.from_dict(inst_doc)
    except InstanceError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    sweep = None
    if doc.get("sweep") is not None:
        sw = doc["sweep"]
        try:
            sweep = Sweep(str(sw["field"]), tuple(float(v) for v in sw["values"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"{source}: bad sweep descriptor: {exc}") from None
        _set_path(copy.deepcopy(inst_doc), sweep.field, 1.0, source)
    solver_kw = dict(doc.get("solver", {}))
    eq_kw = dict(doc.get("equilibrium", {}))
    seed = seed if seed is not None else doc.get("seed", 0)
    solver_kw["seed"] = eq_kw["seed"] = int(seed)
    if starts is not None:
        solver_kw["starts"] = eq_kw["starts"] = int(starts)
    if tol is not None:
        eq_kw["eps"] = float(tol)
    try:
        solver = SolverConfig(**solver_kw)
        eq = EquilibriumConfig(**eq_kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: bad solver/equilibrium settings: {exc}") from None
    anon = doc.get("anonymous_tolls")
    return Scenario(
        instance=inst,
        mode=doc.get("mode", "pipeline"),
        toll_scheme=doc.get("toll_scheme", "paper"),
        sweep=sweep,
        anonymous_tolls=None if anon is None else tuple(float(x) for x in anon),
        solver=solver,
        equilibrium=eq,
        oracle=bool(doc.get("oracle", False) if oracle is None else oracle),
        name=str(doc.get("name", inst.name)),
        raw_instance=inst_doc,
    )


def load_scenario(path: str | Path, **overrides) -> Scenario:
    doc = _read_json(path)
    try:
        return scenario_from_dict(doc, source=str(path), **overrides)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def _set_path(doc, path: str, value: float, source: str = "<scenario>"):
    """Assign ``value`` at a dotted path such as ``roads.1.a.0`` or ``demands.0``."""
    parts = path.split(".")
    node = doc
    try:
        for p in parts[:-1]:
            node = node[int(p)] if isinstance(node, list) else node[p]
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        elif last in node:
            node[last] = value
        else:
            raise KeyError(last)
    except (KeyError, IndexError, ValueError, TypeError):
        raise ScenarioError(f"{source}: sweep field '{path}' does not name a numeric instance entry") from None
    return doc


def oracle_certify(inst: NetworkInstance, cost: float) -> dict:
    """Grid oracle at the finest step that fits the candidate budget."""
    for step in ORACLE_STEPS:
        if grid_size(inst, step) <= ORACLE_BUDGET:
            res = brute_force_optimum(inst, step, ORACLE_BUDGET)
            return {"grid_step": step, "oracle_cost": res.cost,
                    "certified": bool(cost <= res.cost + ORACLE_SLACK)}
    return {"grid_step": None, "oracle_cost": None, "certified": False}


def _tolls_for(scn: Scenario, inst: NetworkInstance, f_star: np.ndarray):
    if scn.toll_scheme == "paper":
        return synthesize_tolls(inst, f_star, choose_constants(inst, f_star))
    if scn.toll_scheme == "anonymous":
        if scn.anonymous_tolls is not None:
            return anonymous_tolls(inst, scn.anonymous_tolls)
        return anonymous_tolls_from_optimum(inst, f_star)
    if scn.toll_scheme == "marginal":
        return marginal_cost_tolls(inst, f_star)
    return no_tolls(inst)


def _run_one(scn: Scenario, inst: NetworkInstance, mode: str) -> dict:
    report: dict = {}
    try:
        opt = solve_social_optimum(inst, scn.solver)
    except ConvergenceError as exc:
        raise StageError("optimum", str(exc), report) from None
    report["optimum"] = {
        "flow": opt.flow.tolist(),
        "cost": opt.cost,
        "stationarity_residual": opt.stationarity_residual,
        "start_index": opt.start_index,
    }
    if scn.oracle:
        cert = oracle_certify(inst, opt.cost)
        report["optimum"]["oracle"] = cert
        if not cert["certified"]:
            raise StageError("oracle", f"solver cost {opt.cost} not within {ORACLE_SLACK} of grid oracle", report)

    trace = BreakTrace()
    try:
        f_star = break_cycles(inst, opt.flow, trace=trace)
    except Exception as exc:
        raise StageError("break_cycles", str(exc), report) from None
    report["acyclic"] = {
        "flow": f_star.tolist(),
        "cost": social_cost(inst, f_star),
        "acyclic": find_cycle(build_support_graph(f_star)) is None,
        "max_shared_roads": max_types_sharing(f_star),
        "trace": trace.to_list(),
    }
    if not check_feasible(inst, f_star, 1e-9):
        raise StageError("break_cycles", "acyclic routing is infeasible", report)
    if mode == "optimum":
        return report

    tolls = _tolls_for(scn, inst, f_star)
    report["tolls"] = tolls.to_dict()
    probe = uniqueness_probe(inst, tolls, f_star, scn.equilibrium)
    converged = [r for r in probe.reports if r.converged]
    report["equilibrium"] = probe.to_dict()
    if converged:
        worst = max(converged, key=lambda r: r.social_cost)
        report["equilibrium"]["worst"] = worst.to_dict()
        report["ratio"] = worst.social_cost / opt.cost if opt.cost > 0 else math.nan
    else:
        report["ratio"] = None
    report["converged"] = not probe.non_converged
    if scn.toll_scheme == "paper" and mode == "pipeline" and converged:
        if probe.max_distance > UNIQUENESS_TOL:
            raise StageError("uniqueness", f"equilibrium at distance {probe.max_distance:.3e} from f*", report)
    if scn.oracle and report["ratio"] is not None and report["ratio"] < 1 - RATIO_TOL:
        raise StageError("ratio", f"equilibrium beats certified optimum (ratio {report['ratio']})", report)
    return report


def run_pipeline(scn: Scenario) -> dict:
    """Optimum, acyclic optimum, tolls and equilibrium probe for one scenario.

    Raises ``StageError`` when a stage misses its postcondition; the partial
    report travels on the exception.
    """
    mode = "pipeline" if scn.mode == "poa-study" else scn.mode
    report = {"scenario": scn.echo(), "provenance": scn.provenance()}
    try:
        report.update(_run_one(scn, scn.instance, mode))
    except StageError as exc:
        report.update(exc.report or {})
        report["failed_stage"] = exc.stage
        exc.report = report
        raise
    return report


def run_poa_study(scn: Scenario) -> dict:
    """Equilibrium-to-optimum ratio at each sweep value, in sweep order."""
    rows = []
    values = scn.sweep.values if scn.sweep is not None else ()
    for v in values:
        doc = _set_path(copy.deepcopy(scn.raw_instance), scn.sweep.field, v)
        try:
            inst = NetworkInstance.from_dict(doc)
        except InstanceError as exc:
            raise ScenarioError(f"sweep value {v}: {exc}") from None
        try:
            point = _run_one(scn, inst, "pipeline")
        except StageError as exc:
            exc.report = {"scenario": scn.echo(), "provenance": scn.provenance(), "rows": rows,
                          "failed_stage": exc.stage, "failed_value": v}
            raise
        rows.append({
            "value": v,
            "optimum_cost": point["optimum"]["cost"],
            "equilibrium_cost": point["equilibrium"].get("worst", {}).get("social_cost"),
            "ratio": point["ratio"],
            "converged": point["converged"],
            "max_distance": point["equilibrium"]["max_distance"],
        })
    return {"scenario": scn.echo(), "provenance": scn.provenance(), "rows": rows}


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["value", "optimum_cost", "equilibrium_cost", "ratio", "converged", "max_distance"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k) for k in cols})
    return buf.getvalue()


def report_to_text(report: dict) -> str:
    lines = []
    scn = report.get("scenario", {})
    lines.append(f"scenario: {scn.get('name') or '(unnamed)'}  mode={scn.get('mode')}  tolls={scn.get('toll_scheme')}")
    if "rows" in report:
        lines.append(f"{'value':>10} {'J(opt)':>12} {'J(eq)':>12} {'ratio':>10}  converged")
        for r in report["rows"]:
            eq = "nan" if r["equilibrium_cost"] is None else f"{r['equilibrium_cost']:12.6f}"
            ratio = "nan" if r["ratio"] is None else f"{r['ratio']:10.6f}"
            lines.append(f"{r['value']:>10g} {r['optimum_cost']:12.6f} {eq:>12} {ratio:>10}  {r['converged']}")
        return "\n".join(lines) + "\n"
    if "optimum" in report:
        opt = report["optimum"]
        lines.append(f"optimal cost: {opt['cost']:.9g} (residual {opt['stationarity_residual']:.2e})")
        if "oracle" in opt:
            o = opt["oracle"]
            lines.append(f"oracle: grid {o['grid_step']} cost {o['oracle_cost']} certified={o['certified']}")
    if "acyclic" in report:
        ac = report["acyclic"]
        lines.append(f"acyclic routing ({len(ac['trace'])} break steps), cost {ac['cost']:.9g}:")
        lines.extend("  road %d: %s" % (i, " ".join(f"{x:.6f}" for x in row)) for i, row in enumerate(ac["flow"]))
    if "tolls" in report:
        t = report["tolls"]
        head = f"tolls ({t['scheme']})"
        if "mu" in t:
            head += f" mu={t['mu']:.6g} P={t['P']:.6g}"
        lines.append(head + ":")
        for i, (row, blk) in enumerate(zip(t["tolls"], t["blocked"])):
            cells = ["P" if b else f"{x:.6f}" for x, b in zip(row, blk)]
            lines.append(f"  road {i}: " + " ".join(cells))
    if "equilibrium" in report:
        eq = report["equilibrium"]
        lines.append(f"equilibrium probe: {eq['starts']} starts, max distance to f* {eq['max_distance']:.3e}, "
                     f"non-converged {len(eq['non_converged'])}")
        if report.get("ratio") is not None:
            lines.append(f"efficiency ratio J(eq)/J(opt): {report['ratio']:.6f}")
    if "failed_stage" in report:
        lines.append(f"FAILED at stage {report['failed_stage']}")
    return "\n".join(lines) + "\n"
