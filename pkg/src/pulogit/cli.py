"""Command-line front end: fit / predict / simulate / cv / diagnose / bench-*.

Every command accepts --seed and an optional JSON --config whose keys
(matching the long flag names with underscores) override the parsed flags.
Exit codes: 0 success, 1 usage or data error, 2 solver ran out of iterations.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .core_math import CaseControlRatios, SingleTrainingProbs
from .em import EMConfig, em_fit_mn, em_fit_on
from .errors import DimensionMismatch, InvalidConfig, PulogitError
from .evaluate import (
    CVPlan,
    comparison_experiment,
    default_lambda_grid,
    kfold_cv,
    rate_regression,
    scaling_experiment,
)
from .io import ModelArtifact, load_covariates, load_dataset, save_dataset
from .models import (
    MultinomialParams,
    OrdinalParams,
    mn_predict_proba,
    on_predict_proba,
    predict_label,
)
from .optimizer import GroupStructure, SolverConfig, pgd_fit_mn, pgd_fit_on
from .simulate import SimConfig, case_control_sample, gen_mn_truth, gen_on_truth, single_training_sample
from .theory_diag import TheoryInputs, h_mn, h_on, r0_bound_mn, r0_bound_on, region_report

_MODELS = ("mn", "on")


class _Parser(argparse.ArgumentParser):
    """argparse with the documented exit code for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InvalidConfig(f"expected comma-separated numbers, got {text!r}") from None


def _default_threads() -> int:
    env = os.environ.get("PULOGIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _scenario_from_args(args):
    if args.scenario == "cc":
        if not args.ratios:
            raise InvalidConfig("case-control scenario needs --ratios")
        return CaseControlRatios(np.asarray(_floats(args.ratios)))
    if not args.pi_st:
        raise InvalidConfig("single-training scenario needs --pi-st")
    return SingleTrainingProbs(np.asarray(_floats(args.pi_st)))


def _group_structure(kind: str, p: int, K: int) -> GroupStructure:
    if kind == "rows":
        return GroupStructure.covariate_rows(p, K)
    if kind == "entrywise":
        return GroupStructure.entrywise(p, K)
    raise InvalidConfig(f"unknown group structure {kind!r}")


def _default_groups(model: str) -> str:
    return "rows" if model == "mn" else "entrywise"


def _solver_config(args, lam: float) -> SolverConfig:
    return SolverConfig(lam=lam, max_iter=args.max_iter, tol=args.tol)


def _final_fit(model, solver, data, gs, cfg, init=None):
    if solver == "em":
        fit = em_fit_mn if model == "mn" else em_fit_on
        return fit(data, gs, EMConfig(inner=cfg), init=init)
    fit = pgd_fit_mn if model == "mn" else pgd_fit_on
    return fit(data, gs, cfg, init=init)


def _apply_config(args):
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise InvalidConfig(f"{args.config}: config must be a JSON object")
    known = vars(args)
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise InvalidConfig(f"{args.config}: unknown config key {key!r}")
        setattr(args, dest, value)
    return args


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    scenario = _scenario_from_args(args)
    data = load_dataset(args.data, scenario)
    model = args.model
    gs = _group_structure(args.groups or _default_groups(model), data.p, data.K)
    lam = args.lam
    if args.cv:
        grid = default_lambda_grid(data, gs, model, "pu", args.cv_grid_size, args.cv_span)
        plan = CVPlan(grid, folds=args.cv_folds, metric="loss", seed=args.seed)
        lam, _ = kfold_cv(data, gs, plan, model, "pu", method=args.solver,
                          cfg=_solver_config(args, 0.0))
        print(f"cross-validated lambda: {lam:.6g}")
    elif lam is None:
        raise InvalidConfig("need --lambda or --cv")
    cfg = _solver_config(args, lam)
    res = _final_fit(model, args.solver, data, gs, cfg)
    meta = {
        "solver": args.solver,
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "objective": float(res.objective_trace[-1]),
        "stationarity_gap": float(res.stationarity_gap),
        "seed": args.seed,
    }
    artifact = ModelArtifact.from_fit(
        res.params, data, lam, args.groups or _default_groups(model), meta
    )
    artifact.save(args.out)
    print(f"model written to {args.out}")
    print(
        f"iterations: {res.iterations}  converged: {res.converged}  "
        f"objective: {meta['objective']:.8g}  stationarity gap: {res.stationarity_gap:.3g}"
    )
    return 0 if res.converged else 2


def _cmd_predict(args) -> int:
    artifact = ModelArtifact.load(args.model_file)
    params = artifact.to_params()
    X, _, _ = load_covariates(args.data)
    if X.shape[1] != artifact.p:
        raise DimensionMismatch(
            f"data has {X.shape[1]} covariates, model expects {artifact.p}"
        )
    if isinstance(params, MultinomialParams):
        proba = mn_predict_proba(params, X)
    else:
        proba = on_predict_proba(params, X)
    labels = predict_label(proba)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["label"]
        if args.proba:
            header += [f"p{k}" for k in range(proba.shape[1])]
        writer.writerow(header)
        for i in range(X.shape[0]):
            row = [int(labels[i])]
            if args.proba:
                row += [repr(float(v)) for v in proba[i]]
            writer.writerow(row)
    print(f"predictions written to {args.out}")
    return 0


def _parse_target(text):
    if text == "balanced":
        return "balanced"
    values = _floats(text)
    return values[0] if len(values) == 1 else values


def _sim_config(args) -> SimConfig:
    kwargs = dict(
        n=args.n,
        p=args.p,
        K=args.K,
        s=args.s,
        covariate_sd=args.covariate_sd,
        seed=args.seed,
        intercept_target=_parse_target(args.intercept_target),
    )
    if args.scenario == "st":
        if not args.pi_st:
            raise InvalidConfig("single-training simulation needs --pi-st")
        kwargs["pi_st"] = _floats(args.pi_st)
    return SimConfig(**kwargs)


def _cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    truth = gen_mn_truth(cfg) if args.model == "mn" else gen_on_truth(cfg)
    if args.scenario == "st":
        data = single_training_sample(truth, cfg)
        print(f"pi_st: {','.join(f'{v:g}' for v in data.scenario.pi_st)}")
    else:
        data = case_control_sample(truth, cfg)
        print(f"realized ratios: {','.join(f'{v:.8g}' for v in data.scenario.kappa)}")
    save_dataset(args.out, data)
    print(f"dataset written to {args.out}")
    if args.truth_out:
        meta = {"solver": "none", "iterations": 0, "converged": True,
                "objective": 0.0, "stationarity_gap": 0.0, "seed": args.seed}
        ModelArtifact.from_fit(truth, data, 0.0, _default_groups(args.model), meta).save(
            args.truth_out
        )
        print(f"truth written to {args.truth_out}")
    return 0


def _cmd_cv(args) -> int:
    scenario = _scenario_from_args(args)
    data = load_dataset(args.data, scenario)
    model = args.model
    gs = _group_structure(args.groups or _default_groups(model), data.p, data.K)
    grid = default_lambda_grid(data, gs, model, args.estimator, args.grid_size, args.span)
    plan = CVPlan(grid, folds=args.folds, metric=args.metric, seed=args.seed)
    best, curve = kfold_cv(data, gs, plan, model, args.estimator, method=args.solver,
                           cfg=_solver_config(args, 0.0))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lam", args.metric])
        for lam, val in zip(grid, curve):
            writer.writerow([repr(float(lam)), repr(float(val))])
    print(f"cv curve written to {args.out}")
    print(f"best lambda: {best:.6g}")
    return 0


def _cmd_diagnose(args) -> int:
    est = ModelArtifact.load(args.model_file)
    tru = ModelArtifact.load(args.truth_file)
    if tru.scenario["type"] != "case-control":
        raise InvalidConfig("diagnostics need case-control ratios on the truth artifact")
    truth = tru.to_params()
    estimate = est.to_params()
    ratios = tru.scenario_object()
    if isinstance(truth, MultinomialParams):
        R_star = float(np.max(np.abs(truth.Theta).sum(axis=0))) if truth.p else 0.0
        ti = TheoryInputs(args.C_x, R_star, truth.K, ratios)
        rep = region_report(estimate, truth, ti)
        payload = {
            "model": rep.model,
            "distances": list(rep.distances),
            "bounds": list(rep.bounds),
            "inside": rep.inside,
            "R_star": R_star,
            "h_at_zero": h_mn(0.0, ti),
            "h_at_bound": h_mn(r0_bound_mn(ti), ti),
            "r0_bound": r0_bound_mn(ti),
        }
    else:
        if truth.K < 2:
            raise InvalidConfig("ordinal diagnostics need K >= 2")
        R_star = float(
            max(np.abs(truth.beta).sum(), np.abs(truth.theta[truth.p:]).sum())
        )
        r_star = float(truth.theta[truth.p + 1:].min())
        ti = TheoryInputs(args.C_x, R_star, truth.K, ratios, r_star=r_star)
        r0 = args.r0 if args.r0 is not None else 0.5 * r_star
        rep = region_report(estimate, truth, ti, r0=r0)
        payload = {
            "model": rep.model,
            "distances": list(rep.distances),
            "bounds": list(rep.bounds),
            "inside": rep.inside,
            "R_star": R_star,
            "r_star": r_star,
            "h_at_zero": h_on(0.0, 0.0, ti),
            "r0_bound": r0_bound_on(r0, ti),
        }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"diagnostics written to {args.out}")
    print(f"inside admissible region: {rep.inside}")
    return 0


def _parse_cells(text: str):
    cells = []
    for part in text.split(";"):
        values = part.split(",")
        if len(values) != 4:
            raise InvalidConfig(f"cell {part!r} must be s,p,n,K")
        cells.append(tuple(int(v) for v in values))
    return cells


def _cmd_bench_scaling(args) -> int:
    report = scaling_experiment(
        args.model,
        _parse_cells(args.cells),
        args.replicates,
        seed=args.seed,
        c=args.c,
        threads=args.threads,
    )
    report.to_csv(args.out + ".csv")
    slope, r2 = rate_regression(report)
    summary = {
        "model": args.model,
        "cells": [list(c) for c in _parse_cells(args.cells)],
        "replicates": args.replicates,
        "slope": slope,
        "r_squared": r2,
    }
    with open(args.out + ".json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"report written to {args.out}.csv and {args.out}.json")
    print(f"slope: {slope:.4g}  r_squared: {r2:.4f}")
    return 0


def _cmd_bench_compare(args) -> int:
    base = dict(n=args.n, p=args.p, K=args.K, s=args.s, covariate_sd=args.covariate_sd)
    sweep = []
    if args.prevalence_sweep:
        for t in _floats(args.prevalence_sweep):
            sweep.append(SimConfig(**base, intercept_target=float(t)))
    elif args.pi_st_sweep:
        for pi in _floats(args.pi_st_sweep):
            sweep.append(
                SimConfig(
                    **base,
                    pi_st=(pi,) * args.K,
                    intercept_target=_parse_target(args.intercept_target),
                )
            )
    else:
        raise InvalidConfig("need --prevalence-sweep or --pi-st-sweep")
    report = comparison_experiment(
        args.model,
        sweep,
        args.replicates,
        seed=args.seed,
        folds=args.folds,
        grid_size=args.grid_size,
        grid_span=args.span,
        threads=args.threads,
    )
    report.to_csv(args.out + ".csv")
    summary = {
        "model": args.model,
        "cells": len(sweep),
        "replicates": args.replicates,
        "misclassification": report.aggregate("err_misclass"),
        "mse": report.aggregate("err_mse"),
    }
    with open(args.out + ".json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"report written to {args.out}.csv and {args.out}.json")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def _add_common(sub, scenario=True, solver=True):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--config", help="JSON file whose keys override flags")
    if scenario:
        sub.add_argument("--scenario", choices=("cc", "st"), default="cc")
        sub.add_argument("--ratios", help="comma-separated case-control ratios")
        sub.add_argument("--pi-st", dest="pi_st", help="comma-separated labeling probabilities")
    if solver:
        sub.add_argument("--solver", choices=("pgd", "em"), default="pgd")
        sub.add_argument("--tol", type=float, default=1e-9)
        sub.add_argument("--max-iter", dest="max_iter", type=int, default=5000)
        sub.add_argument("--groups", choices=("rows", "entrywise"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pulogit", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit a PU model", parents=[], add_help=True)
    fit.add_argument("--data", required=True)
    fit.add_argument("--model", choices=_MODELS, required=True)
    fit.add_argument("--lambda", dest="lam", type=float)
    fit.add_argument("--cv", action="store_true", help="choose lambda by cross-validation")
    fit.add_argument("--cv-folds", dest="cv_folds", type=int, default=5)
    fit.add_argument("--cv-grid-size", dest="cv_grid_size", type=int, default=30)
    fit.add_argument("--cv-span", dest="cv_span", type=float, default=1e3)
    fit.add_argument("--out", required=True)
    _add_common(fit)
    fit.set_defaults(func=_cmd_fit)

    pred = subs.add_parser("predict", help="predict labels with a saved model")
    pred.add_argument("--model-file", dest="model_file", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)
    pred.add_argument("--proba", action="store_true", help="also write class probabilities")
    pred.set_defaults(func=_cmd_predict)

    sim = subs.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--model", choices=_MODELS, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--K", type=int, required=True)
    sim.add_argument("--s", type=int, required=True)
    sim.add_argument("--covariate-sd", dest="covariate_sd", type=float, default=1.0)
    sim.add_argument("--intercept-target", dest="intercept_target", default="balanced")
    sim.add_argument("--out", required=True)
    sim.add_argument("--truth-out", dest="truth_out")
    _add_common(sim, solver=False)
    sim.set_defaults(func=_cmd_simulate)

    cv = subs.add_parser("cv", help="cross-validate the penalty level")
    cv.add_argument("--data", required=True)
    cv.add_argument("--model", choices=_MODELS, required=True)
    cv.add_argument("--estimator", choices=("pu", "naive"), default="pu")
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--grid-size", dest="grid_size", type=int, default=30)
    cv.add_argument("--span", type=float, default=1e3)
    cv.add_argument("--metric", choices=("loss", "misclassification", "mse"), default="loss")
    cv.add_argument("--out", required=True)
    _add_common(cv)
    cv.set_defaults(func=_cmd_cv)

    diag = subs.add_parser("diagnose", help="feasible-region diagnostics vs a truth")
    diag.add_argument("--model-file", dest="model_file", required=True)
    diag.add_argument("--truth-file", dest="truth_file", required=True)
    diag.add_argument("--C-x", dest="C_x", type=float, required=True)
    diag.add_argument("--r0", type=float)
    diag.add_argument("--out", required=True)
    diag.add_argument("--seed", type=int, default=0)
    diag.add_argument("--config")
    diag.set_defaults(func=_cmd_diagnose)

    bs = subs.add_parser("bench-scaling", help="estimation error vs theoretical rate")
    bs.add_argument("--model", choices=_MODELS, required=True)
    bs.add_argument("--cells", required=True, help="semicolon-separated s,p,n,K cells")
    bs.add_argument("--replicates", type=int, default=10)
    bs.add_argument("--c", type=float, help="penalty constant; calibrated when omitted")
    bs.add_argument("--threads", type=int, default=_default_threads())
    bs.add_argument("--out", required=True, help="output path prefix")
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--config")
    bs.set_defaults(func=_cmd_bench_scaling)

    bc = subs.add_parser("bench-compare", help="PU vs naive vs oracle prediction error")
    bc.add_argument("--model", choices=_MODELS, required=True)
    bc.add_argument("--n", type=int, required=True)
    bc.add_argument("--p", type=int, required=True)
    bc.add_argument("--K", type=int, required=True)
    bc.add_argument("--s", type=int, required=True)
    bc.add_argument("--covariate-sd", dest="covariate_sd", type=float, default=1.0)
    bc.add_argument("--intercept-target", dest="intercept_target", default="balanced")
    bc.add_argument("--prevalence-sweep", dest="prevalence_sweep",
                    help="comma-separated total positive prevalences (case-control)")
    bc.add_argument("--pi-st-sweep", dest="pi_st_sweep",
                    help="comma-separated labeling probabilities (single-training)")
    bc.add_argument("--replicates", type=int, default=10)
    bc.add_argument("--folds", type=int, default=5)
    bc.add_argument("--grid-size", dest="grid_size", type=int, default=30)
    bc.add_argument("--span", type=float, default=1e3)
    bc.add_argument("--threads", type=int, default=_default_threads())
    bc.add_argument("--out", required=True, help="output path prefix")
    bc.add_argument("--seed", type=int, default=0)
    bc.add_argument("--config")
    bc.set_defaults(func=_cmd_bench_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args)
        return args.func(args)
    except PulogitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
