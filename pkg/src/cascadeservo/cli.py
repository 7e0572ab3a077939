"""``cascadeservo`` command line.

Exit status: 0 when every run converged (or matched ``--expect``), 2 when a
run diverged or hit a singularity, 1 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import MODE_ALIASES, PRESETS, _angle, resolve_scenario
from .errors import CascadeServoError, ParseError, UnknownParameter, ValidationError
from . import runner

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


def _scenario(args):
    cfg = resolve_scenario(args.scenario)
    kw = {}
    if getattr(args, "dt", None) is not None:
        kw["dt"] = args.dt
    if getattr(args, "t_final", None) is not None:
        kw["t_final"] = args.t_final
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "method", None):
        kw["method"] = args.method
    if getattr(args, "mode", None):
        kw["modes"] = (MODE_ALIASES[args.mode],)
    return cfg.with_(**kw) if kw else cfg


def _status(verdict: str, expect: str | None) -> int:
    if expect is None:
        return EXIT_OK if verdict == "converged" else EXIT_FAILED
    if expect == "converged":
        ok = verdict == "converged"
    elif expect == "singular":
        ok = verdict == "singular"
    else:  # "diverged" accepts any failure to converge
        ok = verdict != "converged"
    return EXIT_OK if ok else EXIT_FAILED


def cmd_run(args) -> int:
    cfg = _scenario(args)
    man = runner.run(cfg, args.out, plots=not args.no_plots)
    for r in man["runs"]:
        line = f"{r['name']}: {r['verdict']}"
        print(line + (f" ({r['message']})" if r["message"] else ""))
    print(f"verdict: {man['verdict']}  ->  {args.out}/manifest.json")
    return _status(man["verdict"], args.expect)


def _sweep_value(text: str, parameter: str) -> float:
    if parameter == "d":
        return _angle(text if text.endswith(("deg", "rad")) else float(text), "d")
    return float(text)


def cmd_sweep(args) -> int:
    cfg = _scenario(args)
    if args.parameter not in runner.SWEEPABLE:
        raise UnknownParameter(args.parameter)
    values = [_sweep_value(v, args.parameter) for v in args.values.split(",") if v.strip()]
    rows = runner.sweep(cfg, args.parameter, values, args.out, plots=not args.no_plots)
    print(f"{'value':>12}  {'run':<32} {'verdict':<10} {'overshoot':>10} {'settling':>10}")
    for r in rows:
        print(f"{r['value']:>12.6g}  {r['run']:<32} {r['verdict']:<10} "
              f"{r['overshoot_fraction']:>10.4f} {r['settling_time']:>10.4f}")
    verdict = runner.overall_verdict_from([r["verdict"] for r in rows])
    return _status(verdict, args.expect)


def cmd_metrics(args) -> int:
    m = runner.recompute_metrics(args.csv, args.signal, args.reference, args.band)
    print(json.dumps(runner.json_safe(m), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_design(args) -> int:
    print(json.dumps(runner.json_safe(runner.design_report(_scenario(args))),
                     indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cascadeservo",
                                description="Cascaded joint/visual servo simulations.")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, solver=True):
        sp.add_argument("--scenario", required=True,
                        help=f"preset ({', '.join(PRESETS)}) or path to a JSON scenario")
        sp.add_argument("--method", choices=("fl", "ml"))
        sp.add_argument("--mode", choices=sorted(MODE_ALIASES))
        if solver:
            sp.add_argument("--dt", type=float)
            sp.add_argument("--t-final", dest="t_final", type=float)
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("run", help="simulate a scenario and write CSV, metrics and plots")
    scenario_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--expect", choices=("converged", "diverged", "singular"))
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="repeat a scenario over one parameter")
    scenario_args(sp)
    sp.add_argument("--parameter", required=True, help=", ".join(runner.SWEEPABLE))
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--out", required=True)
    sp.add_argument("--expect", choices=("converged", "diverged", "singular"))
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("metrics", help="step metrics of one column of a trace CSV")
    sp.add_argument("csv")
    sp.add_argument("--signal", required=True)
    sp.add_argument("--reference", type=float)
    sp.add_argument("--band", type=float, default=0.02)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("design", help="print the synthesized controllers")
    scenario_args(sp, solver=False)
    sp.set_defaults(func=cmd_design)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownParameter as err:
        print(f"error: unknown sweep parameter {err.args[0]!r}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CascadeServoError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
