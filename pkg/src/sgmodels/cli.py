"""Command-line surface: simulate, trajectories, compare, plot, scenarios.

Exit codes: 0 on success, 1 on a usage error, 2 on any runtime failure
(unreadable or invalid scenario files, model constraint violations, IO).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import SimulationError, ValidationError
from .experiments import (
    Model,
    builtin_scenarios,
    device_dependence_test,
    run_ensemble,
    stabilizer_from_weights,
)
from .plotting import render_trace, trace_scenario
from .rng import sample_rng
from .scenario_io import (
    parse_scenario,
    report_document,
    trace_sample_rows,
    write_report,
    write_trajectory_csv,
)


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage failures exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve_scenario(ref: str):
    for scenario in builtin_scenarios():
        if scenario.name == ref:
            return scenario
    return parse_scenario(ref)


def _ensure_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _models_to_run(scenario, requested: str | None) -> list[Model]:
    model = scenario.model if requested is None else Model(requested)
    if model is Model.BOTH:
        return [Model.BOHMIAN, Model.COM]
    if scenario.model is not Model.BOTH and model is not scenario.model:
        raise ValidationError(
            f"scenario {scenario.name!r} supports only the "
            f"{scenario.model.value} engine")
    return [model]


def _cmd_scenarios(_args) -> int:
    for scenario in builtin_scenarios():
        chain = "".join(
            {"Device": "D", "Block": "B", "Recollimate": "R"}[type(el).__name__]
            for el in scenario.chain)
        print(f"{scenario.name:16s} model={scenario.model.value:8s} "
              f"chain={chain} weight_up={scenario.weights.p_up:.4g}")
    return 0


def _cmd_simulate(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    out = _ensure_out(args.out)
    for model in _models_to_run(scenario, args.model):
        report = run_ensemble(scenario, args.samples, args.seed, model=model)
        doc = report_document(scenario, model, args.samples, args.seed, report)
        path = out / f"{scenario.name}_{model.value}.report.json"
        write_report(path, doc)
        survived = report.n_survived / report.n_total
        print(f"{scenario.name} [{model.value}] n={args.samples} seed={args.seed}: "
              f"p_up_first={report.p_up_first:.4f} survived={survived:.4f} "
              f"p_up_final={report.p_up_final:.4f} -> {path}")
    return 0


def _cmd_trajectories(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    out = _ensure_out(args.out)
    trace = trace_scenario(scenario, args.grid)
    for i in range(trace.n_samples):
        path = out / f"{scenario.name}_trajectory_{i:03d}.csv"
        count = write_trajectory_csv(path, trace_sample_rows(trace, i))
        print(f"{path} ({count} samples)")
    return 0


def _cmd_plot(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    out = _ensure_out(args.out)
    trace = trace_scenario(scenario, args.grid)
    svg = render_trace(trace, scenario, out / f"{scenario.name}.svg")
    print(svg)
    for i in range(trace.n_samples):
        path = out / f"{scenario.name}_trajectory_{i:03d}.csv"
        write_trajectory_csv(path, trace_sample_rows(trace, i))
    print(f"{trace.n_samples} trajectory files alongside")
    return 0


def _cmd_compare(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    geom = scenario.geometry

    rng = sample_rng(args.seed, 0)
    z0s = rng.uniform(-geom.height / 2, geom.height / 2, size=args.samples)
    hits = sum(device_dependence_test(Model.BOHMIAN, z0, scenario.weights, geom)
               for z0 in z0s)
    bohm_fraction = hits / len(z0s)

    try:
        stabilizer_from_weights(scenario.weights)
        com_flags = [device_dependence_test(Model.COM, s, scenario.weights, geom)
                     for s in (1, -1)]
        com_fraction = sum(com_flags) / 2
        com_cell = f"{com_fraction:.4f}"
        com_verdict = ("device-dependent" if any(com_flags)
                       else "device-independent")
    except ValidationError:
        com_cell = "n/a"
        com_verdict = "not a stabilizer state"

    print(f"scenario: {scenario.name} (weight up = {scenario.weights.p_up:.4g})")
    print(f"first-device spin under SG_S vs SG_N at the same hidden state, "
          f"n={args.samples} seed={args.seed}")
    print(f"{'model':10s} {'hidden variable':22s} {'dependent fraction':20s} verdict")
    print(f"{'bohmian':10s} {'z0 (packet offset)':22s} {bohm_fraction:<20.4f} "
          + ("device-dependent" if bohm_fraction > 0 else "device-independent"))
    print(f"{'com':10s} {'destabilizer sign':22s} {com_cell:20s} {com_verdict}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="sgmodels", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, samples_default=10000):
        p.add_argument("--scenario", required=True,
                       help="builtin scenario name or scenario file path")
        p.add_argument("--seed", type=int, default=0,
                       help="unsigned ensemble seed (default 0)")
        p.add_argument("--samples", type=int, default=samples_default,
                       help=f"ensemble size (default {samples_default})")

    p = sub.add_parser("simulate", help="run an ensemble and write a JSON report")
    common(p)
    p.add_argument("--model", choices=[m.value for m in Model], default=None,
                   help="engine to run (default: the scenario's)")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("trajectories", help="write trajectory CSV files")
    p.add_argument("--scenario", required=True)
    p.add_argument("--grid", type=int, default=9,
                   help="number of starting offsets across the packet")
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_trajectories)

    p = sub.add_parser("compare",
                       help="print the device-dependence verdict table")
    common(p, samples_default=1000)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("plot", help="render the chain and trajectory fan as SVG")
    p.add_argument("--scenario", required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("scenarios", help="list builtin scenarios")
    p.set_defaults(func=_cmd_scenarios)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("sgmodels: error: --seed must be non-negative", file=sys.stderr)
        return 1
    if getattr(args, "samples", None) is not None and args.samples < 1:
        print("sgmodels: error: --samples must be positive", file=sys.stderr)
        return 1
    if getattr(args, "grid", None) is not None and args.grid < 1:
        print("sgmodels: error: --grid must be positive", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (SimulationError, OSError) as exc:
        print(f"sgmodels: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
