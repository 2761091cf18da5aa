"""Command-line interface: ``zofo <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error,
3 infeasible parameters, 4 validation failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import experiments as ex
from .controllers import REFERENCE_DELTA, REFERENCE_STEPSIZES, ControllerConfig, Method
from .errors import ExperimentError, ZofoError
from .metrics import MetricSeries
from .objective import ReducedObjective, derived_constants, random_objective
from .plant import DEFAULT_A_NORM, DEFAULT_DIMS, DEFAULT_F_NORM, generate_random_plant, save_instance
from .theory import TheoryConstants, select_parameters
from .validation import run_suite

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_VALIDATION = 4
EXIT_IO = 5


class UsageError(ZofoError):
    pass


def _dims(text: str) -> tuple:
    try:
        dims = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must be four integers n,p,q,r, got {text!r}")
    if len(dims) != 4 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"dims must be four positive integers n,p,q,r, got {text!r}")
    return dims


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {val}")
    return val


def _positive_float(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not (val > 0 and np.isfinite(val)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
    return val


def _a_norm(text: str) -> float:
    val = float(text)
    if not 0 <= val < 1:
        raise argparse.ArgumentTypeError(f"--a-norm must lie in [0, 1) for a stable plant, got {val}")
    return val


def _nonneg_float(text: str) -> float:
    val = float(text)
    if val < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {val}")
    return val


def _float_list(text: str) -> list:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError(f"values must be positive, got {text!r}")
    return vals


def _echo(name: str, config: dict) -> None:
    print(f"# zofo {name} config: {json.dumps(config, sort_keys=True)}")


def _add_experiment_flags(sp) -> None:
    sp.add_argument("--config", help="experiment config file (JSON); flags override its keys")
    sp.add_argument("--plant-seed", type=int)
    sp.add_argument("--objective-seed", type=int)
    sp.add_argument("--seeds", type=_positive_int, help="use controller seeds 0..k-1")
    sp.add_argument("--budget", type=_positive_int, help="plant steps per run")
    sp.add_argument("--record-stride", type=_positive_int)
    sp.add_argument("--dims", type=_dims)
    sp.add_argument("--a-norm", type=_a_norm)
    sp.add_argument("--f-norm", type=_nonneg_float)
    sp.add_argument("--plant-file", help="plant/objective file written by gen-plant")
    sp.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    sp.add_argument("--out-csv")
    sp.add_argument("--out-plot")
    _add_plot_flags(sp)


def _add_plot_flags(sp) -> None:
    sp.add_argument("--axis", choices=("updates", "plant_steps"), default="updates")
    sp.add_argument("--metric", choices=("grad_norm_sq", "optimality_gap"),
                    default="grad_norm_sq")
    sp.add_argument("--linear", action="store_true", help="linear instead of log y-axis")


def _experiment_config(args) -> ex.ExperimentConfig:
    cfg = ex.load_experiment_config(args.config) if args.config else ex.ExperimentConfig()
    overrides = {
        "plant_seed": args.plant_seed,
        "objective_seed": args.objective_seed,
        "controller_seeds": None if args.seeds is None else list(range(args.seeds)),
        "plant_step_budget": args.budget,
        "record_stride": args.record_stride,
        "dims": args.dims,
        "a_norm": args.a_norm,
        "f_norm": args.f_norm,
        "plant_file": args.plant_file,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if cfg.plant_step_budget < 2:
        raise UsageError("--budget must be at least 2")
    return cfg


def _write_outputs(args, result, title=None) -> None:
    if args.out_csv:
        ex.export_csv(result, args.out_csv)
        print(f"wrote {args.out_csv}")
    if args.out_plot:
        ex.emit_plot(result, args.out_plot, log_y=not args.linear, axis=args.axis,
                     metric=args.metric, title=title)
        print(f"wrote {args.out_plot}")


def cmd_gen_plant(args) -> int:
    config = {"seed": args.seed, "objective_seed": args.objective_seed, "dims": list(args.dims),
              "a_norm": args.a_norm, "f_norm": args.f_norm, "out": args.out}
    _echo("gen-plant", config)
    plant = generate_random_plant(args.seed, args.dims, args.a_norm, args.f_norm)
    obj_seed = args.seed if args.objective_seed is None else args.objective_seed
    objective = random_objective(obj_seed, args.dims[1])
    save_instance(args.out, plant, objective)
    consts = derived_constants(ReducedObjective(objective, plant))
    print(f"wrote {args.out}")
    print(f"||G||_2 = {np.linalg.norm(plant.G, 2):.10g}")
    print(f"L       = {consts.L:.10g}")
    return EXIT_OK


def cmd_select_params(args) -> int:
    tc = TheoryConstants(L=args.L, M_phi=args.Mphi, p=args.p, mu=args.mu, eps=args.eps,
                         eps_phi=args.eps_phi, phi_low=args.phi_low,
                         phi_delta_u0=args.phi_delta_u0)
    _echo("select-params", tc.to_dict())
    sel = select_parameters(tc)
    for key in ("eta", "delta", "delta_sq", "mu1", "mu2", "T_min", "c1", "c2", "c3"):
        val = getattr(sel, key)
        print(f"{key:<8} = {val:.17g}" if isinstance(val, float) else f"{key:<8} = {val}")
    if sel.feasible:
        print("verdict  = feasible")
        return EXIT_OK
    print(f"verdict  = infeasible (mu={tc.mu:.6g} exceeds {sel.binding}; "
          f"mu1={sel.mu1:.6g}, mu2={sel.mu2:.6g})")
    return EXIT_INFEASIBLE


def cmd_compare(args) -> int:
    cfg = _experiment_config(args)
    if args.delta is not None:
        cfg = replace(cfg, methods=[replace(m, delta=args.delta) for m in cfg.methods])
    _echo("compare", cfg.to_dict())
    result = ex.run_comparison(cfg, n_jobs=args.jobs)
    print(ex.final_table(result))
    _write_outputs(args, result)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    method = Method(args.method)
    eta = REFERENCE_STEPSIZES[method] if args.eta is None else args.eta
    delta = REFERENCE_DELTA if args.delta is None else args.delta
    cfg = replace(cfg, methods=[ControllerConfig(method, eta, delta)])
    _echo("run", cfg.to_dict())
    result = ex.run_comparison(cfg, n_jobs=args.jobs)
    print(ex.final_table(result))
    _write_outputs(args, result)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    template = ControllerConfig(
        Method.TWO_POINT_RGF,
        REFERENCE_STEPSIZES[Method.TWO_POINT_RGF] if args.eta is None else args.eta,
        REFERENCE_DELTA if args.delta is None else args.delta,
    )
    cfg = replace(cfg, methods=[template])
    config = cfg.to_dict() | {"parameter": args.parameter, "values": args.values}
    _echo("sweep", config)
    results = ex.sweep(args.parameter, args.values, cfg, n_jobs=args.jobs)
    relabeled = []
    print(f"{args.parameter:>12} {'final grad_norm_sq':>20} {'final gap':>14} {'diverged':>9}")
    for val, res in results.items():
        f = res.final[Method.TWO_POINT_RGF.value]
        print(f"{val:>12.6g} {f['grad_norm_sq']['mean']:>20.6g} "
              f"{f['optimality_gap']['mean']:>14.6g} {f['diverged']:>9d}")
        for s in res.all_series():
            relabeled.append(replace(s, method=f"{s.method}[{args.parameter}={val!r}]"))
    _write_outputs(args, ex.result_from_series(relabeled),
                   title=f"{args.parameter} sweep")
    return EXIT_OK


def cmd_validate(args) -> int:
    _echo("validate", {"suite": args.suite, "samples": args.samples, "seed": args.seed})
    if args.suite == "lemmas" and args.samples < 2:
        raise UsageError("--samples must be at least 2 for Monte Carlo checks")
    checks = run_suite(args.suite, args.samples, args.seed)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def cmd_plot(args) -> int:
    _echo("plot", {"csv": args.csv, "out": args.out, "axis": args.axis,
                   "metric": args.metric, "log_y": not args.linear})
    series: list[MetricSeries] = ex.import_csv(args.csv)
    ex.emit_plot(ex.result_from_series(series), args.out, log_y=not args.linear,
                 axis=args.axis, metric=args.metric)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zofo",
                                     description="Zeroth-order feedback optimization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-plant", help="draw a random plant and objective")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--objective-seed", type=int, help="defaults to --seed")
    sp.add_argument("--dims", type=_dims, default=DEFAULT_DIMS)
    sp.add_argument("--a-norm", type=_a_norm, default=DEFAULT_A_NORM)
    sp.add_argument("--f-norm", type=_nonneg_float, default=DEFAULT_F_NORM)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_plant)

    sp = sub.add_parser("select-params", help="stepsize and smoothing parameter from constants")
    sp.add_argument("--L", type=_positive_float, required=True)
    sp.add_argument("--Mphi", type=_positive_float, required=True)
    sp.add_argument("--mu", type=_positive_float, required=True)
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--eps", type=_positive_float, required=True)
    sp.add_argument("--eps-phi", type=_positive_float, required=True)
    sp.add_argument("--phi-low", type=float, default=0.0)
    sp.add_argument("--phi-delta-u0", type=float, default=1.0)
    sp.set_defaults(func=cmd_select_params)

    sp = sub.add_parser("run", help="run one controller over several seeds")
    sp.add_argument("--method", choices=[m.value for m in Method],
                    default=Method.TWO_POINT_RGF.value)
    sp.add_argument("--eta", type=_positive_float)
    sp.add_argument("--delta", type=_positive_float)
    _add_experiment_flags(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="compare all configured controllers")
    sp.add_argument("--delta", type=_positive_float, help="override delta for every method")
    _add_experiment_flags(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="sweep eta or delta of the two-point controller")
    sp.add_argument("--parameter", choices=("eta", "delta"), required=True)
    sp.add_argument("--values", type=_float_list, required=True)
    sp.add_argument("--eta", type=_positive_float)
    sp.add_argument("--delta", type=_positive_float)
    _add_experiment_flags(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="numerical checks of estimator properties and bounds")
    sp.add_argument("--suite", choices=("lemmas", "bounds", "plant"), required=True)
    sp.add_argument("--samples", type=_positive_int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("plot", help="plot a CSV written by run/compare/sweep")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--out", required=True)
    _add_plot_flags(sp)
    sp.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ZofoError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
