"""Command-line interface: simulate, fit, benchmark, bootstrap, eval."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .bench import (bootstrap_estimator, emit_report, evaluate_mse,
                    run_benchmark, svg_curves)
from .config import (estimator_from_config, load_config, plan_from_config,
                     schema_from_config)
from .data import load_joint_csv, load_two_sample_csvs, write_joint_csv
from .estimators import CapceModel
from .scm import default_grid, get_setting, make_grid, simulate, true_capce


def _add_data_args(p):
    p.add_argument("--data", help="joint CSV with all four roles")
    p.add_argument("--data1", help="(x, w, z) sample CSV for pre-split input")
    p.add_argument("--data2", help="(y, z) sample CSV for pre-split input")
    p.add_argument("--treatment", help="treatment column name")
    p.add_argument("--outcome", help="outcome column name")
    p.add_argument("--instrument", help="instrument column name")
    p.add_argument("--covariates", help="comma-separated covariate columns")


def _load_dataset(args, cfg):
    schema = schema_from_config(cfg, args)
    if args.data:
        return load_joint_csv(args.data, schema)
    if args.data1 and args.data2:
        return load_two_sample_csvs(args.data1, args.data2, schema)
    raise SystemExit("provide --data or both --data1 and --data2")


def _out_dir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _grid_from_args(args):
    if args.grid_box:
        box = tuple(float(v) for v in args.grid_box.split(","))
        return make_grid(box, args.grid_nx, args.grid_nw)
    return default_grid()


def cmd_simulate(args, cfg):
    ds = simulate(get_setting(args.setting), args.n, args.seed)
    write_joint_csv(args.out, ds)
    print(f"wrote {args.n} rows (setting {get_setting(args.setting).name}, "
          f"seed {args.seed}) to {args.out}")
    return 0


def cmd_fit(args, cfg):
    ds = _load_dataset(args, cfg)
    est_cfg = dict(cfg.get("estimator", {}))
    if args.estimator:
        est_cfg["kind"] = args.estimator.replace("-", "_")
    if "kind" not in est_cfg:
        raise SystemExit("choose an estimator via --estimator or config [estimator]")
    if args.z0 is not None:
        est_cfg["z0"] = args.z0
    if args.p_degree is not None:
        est_cfg["p_degree"] = args.p_degree
    econf = estimator_from_config(est_cfg)

    from .bench import _fit_one, _resolve_kernel
    from .data import split_train_test

    train, test = split_train_test(ds, args.test_fraction, args.seed)
    kernel_cfg = _resolve_kernel(econf, train, test, args.seed)
    model = _fit_one(econf, train, test, kernel_cfg, args.seed, {})

    out = _out_dir(args)
    model_path = os.path.join(out, "model.json")
    payload = (model.to_json_dict() if isinstance(model, CapceModel)
               else _structural_json(model))
    with open(model_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    report = {"estimator": econf.label, "kind": econf.kind,
              "n1": ds.n1, "n2": ds.n2, "metadata": model.metadata}
    try:
        report["coefficients"] = {k: float(v) for k, v in model.coefficient_table()}
    except (ValueError, AttributeError):
        pass
    report_path = os.path.join(out, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {model_path} and {report_path}")
    return 0


def _structural_json(model):
    out = {"kind": model.kind,
           "coefficients": [float(v) for v in model.coefficients]}
    if model.kind == "kernel_iv":
        out["kernel"] = model.kernel.to_config()
        out["anchors"] = [[float(v) for v in row] for row in model.anchors]
        out["fd_step"] = model.fd_step
    else:
        out["basis"] = model.basis.to_config()
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_benchmark(args, cfg):
    plan = plan_from_config(cfg, args)
    results = run_benchmark(plan)
    paths = emit_report(results, _out_dir(args))
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_bootstrap(args, cfg):
    ds = _load_dataset(args, cfg)
    est_cfg = dict(cfg.get("estimator", {}))
    if args.estimator:
        est_cfg["kind"] = args.estimator.replace("-", "_")
    if args.z0 is not None:
        est_cfg["z0"] = args.z0
    econf = estimator_from_config(est_cfg)
    grid = _grid_from_args(args)
    report = bootstrap_estimator(ds, econf, args.B, args.seed, grid,
                                 test_fraction=args.test_fraction)
    out = _out_dir(args)
    path = os.path.join(out, "bootstrap_report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path} ({report.b_successful}/{report.b_requested} "
          "resamples succeeded)")
    return 0


def _load_model_json(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") in ("ptsls", "ntsls", "kernel_iv"):
        from .baselines import structural_from_json_dict

        return structural_from_json_dict(payload)
    return CapceModel.from_json_dict(payload)


def cmd_eval(args, cfg):
    model = _load_model_json(args.model)
    grid = _grid_from_args(args)
    setting = get_setting(args.setting)
    mse = evaluate_mse(model, setting, grid)
    print(f"grid MSE vs setting-{setting.name} oracle: {mse:.6g}")
    if args.curves:
        xs = grid.x_points
        series = {"oracle": true_capce(setting, xs, np.full_like(xs, args.curve_w)),
                  "estimate": np.asarray(model.capce(xs, args.curve_w)).ravel()}
        out = _out_dir(args)
        path = os.path.join(out, f"curves_eval_{setting.name}.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg_curves(xs, series,
                                title=f"Model vs oracle at w={args.curve_w:g}"))
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="capce",
        description="Conditional average partial causal effect estimation "
                    "via instrumental variables")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="TOML config file", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")
    # The global flags are also accepted after the subcommand; SUPPRESS keeps
    # an omitted postfix flag from clobbering a prefix value.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("simulate", help="draw a synthetic dataset to CSV")
    p.add_argument("--setting", required=True, help="SCM setting name (A-F)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to CSV data")
    _add_data_args(p)
    p.add_argument("--estimator",
                   choices=["parametric", "sieve", "rkhs", "ptsls", "ntsls",
                            "kernel-iv"])
    p.add_argument("--z0", type=float, default=None)
    p.add_argument("--p-degree", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("benchmark", help="run the synthetic benchmark")
    p.add_argument("--settings", help="comma list, e.g. A,B")
    p.add_argument("--sizes", help="comma list, e.g. 1000,10000")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--estimators", help="comma list of presets, e.g. P-CAPCE,PTSLS")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("bootstrap", help="bootstrap an estimator on CSV data")
    _add_data_args(p)
    p.add_argument("--estimator",
                   choices=["parametric", "sieve", "rkhs", "ptsls", "ntsls",
                            "kernel-iv"])
    p.add_argument("-B", type=int, default=1000)
    p.add_argument("--z0", type=float, default=None)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--grid-box", help="x_lo,x_hi,w_lo,w_hi")
    p.add_argument("--grid-nx", type=int, default=11)
    p.add_argument("--grid-nw", type=int, default=11)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("eval", help="evaluate a saved model against an oracle")
    p.add_argument("--model", required=True, help="model.json path")
    p.add_argument("--setting", required=True)
    p.add_argument("--grid-box", help="x_lo,x_hi,w_lo,w_hi")
    p.add_argument("--grid-nx", type=int, default=41)
    p.add_argument("--grid-nw", type=int, default=21)
    p.add_argument("--curves", action="store_true")
    p.add_argument("--curve-w", type=float, default=1.0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = load_config(args.config) if args.config else {}
    try:
        return args.func(args, cfg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
