"""Command-line entry point: ``hetoll {solve,tolls,equilibrium,pipeline,poa}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import (EXIT_NONCONVERGED, EXIT_OK, EXIT_PARSE, EXIT_STAGE, ScenarioError, StageError,
                          dumps_report, load_instance_file, load_scenario, report_to_text, rows_to_csv,
                          run_pipeline, run_poa_study, scenario_from_dict)

COMMAND_MODES = {"solve": "optimum", "tolls": "pipeline", "equilibrium": "equilibrium",
                 "pipeline": "pipeline", "poa": "poa-study"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetoll", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("solve", "social optimum and its acyclic counterpart"),
        ("tolls", "type-differentiated tolls for the acyclic optimum"),
        ("equilibrium", "equilibria under a toll scheme"),
        ("pipeline", "optimum -> acyclic -> tolls -> uniqueness probe"),
        ("poa", "equilibrium/optimum ratio over a parameter sweep"),
    ]:
        sp = sub.add_parser(name, help=help_text)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--instance", help="instance JSON file")
        src.add_argument("--scenario", help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--starts", type=int, default=None, help="solver and probe start count")
        sp.add_argument("--tol", type=float, default=None, help="equilibrium tolerance eps")
        sp.add_argument("--oracle", action="store_true", default=None, help="certify with the grid oracle")
        sp.add_argument("--scheme", choices=["paper", "anonymous", "marginal", "none"], default=None,
                        help="toll scheme (overrides the scenario)")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=["json", "csv", "text"], default="json")
    return p


def _load(args):
    overrides = {"seed": args.seed, "starts": args.starts, "tol": args.tol, "oracle": args.oracle}
    if args.scenario:
        scn = load_scenario(args.scenario, **overrides)
        doc_mode = scn.mode
    else:
        inst = load_instance_file(args.instance)
        scn = scenario_from_dict({"instance": inst.to_dict()}, source=args.instance, **overrides)
        doc_mode = None
    mode = COMMAND_MODES[args.command]
    if args.command == "pipeline" and doc_mode in ("optimum", "equilibrium"):
        mode = doc_mode
    scheme = args.scheme or scn.toll_scheme
    if args.command == "tolls":
        scheme = "paper"
    if mode != "poa-study" and scn.sweep is not None:
        raise ScenarioError("sweep given but command is not 'poa'")
    return replace(scn, mode=mode, toll_scheme=scheme)


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return dumps_report(report)
    if fmt == "text":
        return report_to_text(report)
    if "rows" not in report:
        raise ScenarioError("csv output is only available for poa ratio tables")
    return rows_to_csv(report["rows"])


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        scn = _load(args)
        if scn.mode == "poa-study":
            report = run_poa_study(scn)
            converged = all(r["converged"] for r in report["rows"])
        else:
            report = run_pipeline(scn)
            converged = report.get("converged", True)
        _emit(_render(report, args.format), args.out)
    except ScenarioError as exc:
        print(f"hetoll: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except StageError as exc:
        print(f"hetoll: {exc}", file=sys.stderr)
        if exc.report is not None and args.format != "csv":
            _emit(_render(exc.report, args.format), args.out)
        return EXIT_STAGE
    if not converged:
        print("hetoll: equilibrium dynamics did not converge for every start", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
