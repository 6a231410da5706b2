"""Model selection, metrics, naive baselines, and benchmark harnesses.

The naive baselines treat every unlabeled row as a true class-0 row and fit
ordinary penalized multinomial / cumulative-logit likelihoods with the same
proximal solver.  The two experiment drivers mirror the synthetic studies:
estimation error against the theoretical rate, and PU-vs-naive-vs-oracle
prediction error.
"""

from __future__ import annotations

import csv
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logit

from .em import EMConfig, em_fit_mn, em_fit_on
from .errors import DegenerateWarning, InvalidPlan, LengthMismatch
from .models import (
    MultinomialParams,
    OrdinalParams,
    PUDataset,
    mn_naive_grad,
    mn_naive_loss,
    mn_observed_loss,
    mn_predict_proba,
    on_naive_grad,
    on_naive_loss,
    on_observed_loss,
    on_predict_proba,
    predict_label,
)
from .optimizer import (
    FitResult,
    GroupStructure,
    SolverConfig,
    _block_norms,
    _offset_projector,
    lambda_max_mn,
    lambda_max_on,
    pack_mn,
    pgd_fit_mn,
    pgd_fit_on,
    pgd_minimize,
    unpack_mn,
)
from .simulate import (
    SimConfig,
    case_control_sample,
    gen_mn_truth,
    gen_on_truth,
    sample_labels,
    single_training_sample,
)

__all__ = [
    "CVPlan",
    "ExperimentReport",
    "kfold_cv",
    "lambda_path",
    "default_lambda_grid",
    "naive_fit_mn",
    "naive_fit_on",
    "misclassification_rate",
    "pred_mse",
    "scaling_experiment",
    "comparison_experiment",
    "rate_regression",
]

_METRICS = ("loss", "misclassification", "mse")


@dataclass(frozen=True)
class CVPlan:
    """K-fold cross-validation settings over a descending penalty grid."""

    lambda_grid: np.ndarray
    folds: int = 5
    metric: str = "loss"
    seed: int = 0

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.lambda_grid, dtype=float))
        if grid.size == 0 or np.any(grid <= 0):
            raise InvalidPlan("lambda grid must be nonempty and positive")
        if grid.size > 1 and np.any(np.diff(grid) >= 0):
            raise InvalidPlan("lambda grid must be strictly descending")
        if self.folds < 2:
            raise InvalidPlan("need at least 2 folds")
        if self.metric not in _METRICS:
            raise InvalidPlan(f"metric must be one of {_METRICS}")
        object.__setattr__(self, "lambda_grid", grid)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def misclassification_rate(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    return float(np.mean(pred != truth))


def pred_mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def _predict_labels(params, X) -> np.ndarray:
    if isinstance(params, MultinomialParams):
        return predict_label(mn_predict_proba(params, X))
    return predict_label(on_predict_proba(params, X))


# ---------------------------------------------------------------------------
# naive baselines (identity link, unlabeled treated as class 0)
# ---------------------------------------------------------------------------

def _naive_init_mn(data: PUDataset) -> MultinomialParams:
    counts = data.label_counts
    if counts.min() == 0:
        warnings.warn(
            "some label never occurs; naive intercepts set to zero",
            DegenerateWarning,
            stacklevel=3,
        )
        b = np.zeros(data.K)
    else:
        b = np.log(counts[1:] / counts[0])
    return MultinomialParams(np.zeros((data.p, data.K)), b)


def _naive_init_on(data: PUDataset, floor: float) -> OrdinalParams:
    cum = np.cumsum(data.label_counts)[:-1] / data.n
    if cum.min() <= 0 or cum.max() >= 1 or (cum.size > 1 and np.any(np.diff(cum) <= 0)):
        warnings.warn(
            "degenerate label frequencies; naive cut-points set near zero",
            DegenerateWarning,
            stacklevel=3,
        )
        off = np.concatenate([[0.0], np.full(data.K - 1, max(floor, 1e-8))])
    else:
        nu = logit(cum)
        off = np.concatenate([nu[:1], np.diff(nu)])
    return OrdinalParams(np.concatenate([np.zeros(data.p), off]), p=data.p)


def naive_fit_mn(
    data: PUDataset,
    gs: GroupStructure | None,
    cfg: SolverConfig,
    init: MultinomialParams | None = None,
) -> FitResult:
    """Penalized multinomial fit of z as if it were the complete label."""
    p, K = data.p, data.K
    if gs is None:
        gs = GroupStructure.covariate_rows(p, K)
    if init is None:
        init = _naive_init_mn(data)

    def smooth(x):
        return mn_naive_loss(unpack_mn(x, p, K), data)

    def grad(x):
        g_T, g_b = mn_naive_grad(unpack_mn(x, p, K), data)
        return np.concatenate([g_T.ravel(), g_b])

    x, trace, iters, conv, gap = pgd_minimize(pack_mn(init), smooth, grad, gs, cfg)
    return FitResult(unpack_mn(x, p, K), trace, iters, conv, gap)


def naive_fit_on(
    data: PUDataset,
    gs: GroupStructure | None,
    cfg: SolverConfig,
    init: OrdinalParams | None = None,
) -> FitResult:
    """Penalized cumulative-logit fit of z as if it were the complete label."""
    p, K = data.p, data.K
    if gs is None:
        gs = GroupStructure.entrywise(p, K)
    if init is None:
        init = _naive_init_on(data, cfg.offset_floor)

    def smooth(x):
        return on_naive_loss(OrdinalParams(x, p=p), data)

    def grad(x):
        return on_naive_grad(OrdinalParams(x, p=p), data)

    x, trace, iters, conv, gap = pgd_minimize(
        init.theta, smooth, grad, gs, cfg, project=_offset_projector(p, K, cfg.offset_floor)
    )
    return FitResult(OrdinalParams(x, p=p), trace, iters, conv, gap)


# ---------------------------------------------------------------------------
# penalty grids and warm-started paths
# ---------------------------------------------------------------------------

def _naive_lambda_max(data: PUDataset, gs: GroupStructure, model: str) -> float:
    if model == "mn":
        init = _naive_init_mn(data)
        g_T, g_b = mn_naive_grad(init, data)
        g = np.concatenate([g_T.ravel(), g_b])
    else:
        init = _naive_init_on(data, 1e-8)
        g = on_naive_grad(init, data)
    return float(np.max(_block_norms(g, gs) / gs.weights))


def default_lambda_grid(
    data: PUDataset,
    gs: GroupStructure | None = None,
    model: str = "mn",
    estimator: str = "pu",
    size: int = 30,
    span: float = 1e3,
) -> np.ndarray:
    """Log-spaced descending grid from lambda_max down to lambda_max/span."""
    if gs is None:
        gs = _default_gs(data, model)
    if estimator == "pu":
        lam_max = lambda_max_mn(data, gs) if model == "mn" else lambda_max_on(data, gs)
    else:
        lam_max = _naive_lambda_max(data, gs, model)
    lam_max = max(lam_max, 1e-10)
    return np.geomspace(lam_max, lam_max / span, size)


def _default_gs(data: PUDataset, model: str) -> GroupStructure:
    if model == "mn":
        return GroupStructure.covariate_rows(data.p, data.K)
    return GroupStructure.entrywise(data.p, data.K)


def _fit_one(data, gs, cfg, model, estimator, method, init):
    if estimator == "naive":
        fit = naive_fit_mn if model == "mn" else naive_fit_on
        return fit(data, gs, cfg, init=init)
    if method == "em":
        fit = em_fit_mn if model == "mn" else em_fit_on
        return fit(data, gs, EMConfig(inner=cfg), init=init)
    fit = pgd_fit_mn if model == "mn" else pgd_fit_on
    return fit(data, gs, cfg, init=init)


def lambda_path(
    data: PUDataset,
    gs: GroupStructure | None,
    grid,
    cfg: SolverConfig,
    model: str = "mn",
    estimator: str = "pu",
    method: str = "pgd",
) -> list[FitResult]:
    """Fits along a descending penalty grid, each warm-started from the last."""
    if gs is None:
        gs = _default_gs(data, model)
    results = []
    init = None
    for lam in np.asarray(grid, dtype=float):
        res = _fit_one(data, gs, replace(cfg, lam=float(lam)), model, estimator, method, init)
        results.append(res)
        init = res.params
    return results


def _heldout_metric(params, heldout: PUDataset, model, estimator, metric) -> float:
    if metric == "loss":
        if estimator == "naive":
            fn = mn_naive_loss if model == "mn" else on_naive_loss
        else:
            fn = mn_observed_loss if model == "mn" else on_observed_loss
        return fn(params, heldout)
    pred = _predict_labels(params, heldout.X)
    if metric == "misclassification":
        return misclassification_rate(pred, heldout.y)
    return pred_mse(pred, heldout.y)


def kfold_cv(
    data: PUDataset,
    gs: GroupStructure | None,
    plan: CVPlan,
    model: str = "mn",
    estimator: str = "pu",
    method: str = "pgd",
    cfg: SolverConfig | None = None,
):
    """Cross-validated penalty selection; returns (best lambda, metric curve).

    Fold assignment is a seeded permutation split, each index held out exactly
    once.  Ties in the averaged metric go to the larger lambda.
    """
    if data.n < plan.folds:
        raise InvalidPlan(f"cannot make {plan.folds} folds from {data.n} rows")
    if plan.metric != "loss" and data.y is None:
        raise InvalidPlan(f"metric {plan.metric!r} needs true labels on the data")
    if gs is None:
        gs = _default_gs(data, model)
    if cfg is None:
        cfg = SolverConfig(lam=0.0, tol=1e-8, max_iter=2000)
    perm = np.random.Generator(np.random.Philox(np.random.SeedSequence(plan.seed))).permutation(
        data.n
    )
    folds = np.array_split(perm, plan.folds)
    curve = np.zeros((plan.folds, plan.lambda_grid.size))
    for f, heldout_idx in enumerate(folds):
        train_idx = np.setdiff1d(perm, heldout_idx, assume_unique=True)
        train = data.subset(train_idx)
        heldout = data.subset(heldout_idx)
        path = lambda_path(train, gs, plan.lambda_grid, cfg, model, estimator, method)
        for i, res in enumerate(path):
            curve[f, i] = _heldout_metric(res.params, heldout, model, estimator, plan.metric)
    mean_curve = curve.mean(axis=0)
    best = int(np.argmin(mean_curve))  # first occurrence = largest lambda on ties
    return float(plan.lambda_grid[best]), mean_curve


# ---------------------------------------------------------------------------
# experiment reports
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Long-format records of (cell, replicate, estimator) results."""

    records: list = field(default_factory=list)

    def add(self, **record):
        self.records.append(record)

    def aggregate(self, value: str, by=("cell", "estimator")) -> list:
        """Mean and standard error of `value` grouped by the `by` keys."""
        groups: dict = {}
        for rec in self.records:
            key = tuple(rec[k] for k in by)
            groups.setdefault(key, []).append(rec[value])
        out = []
        for key, vals in groups.items():
            arr = np.asarray(vals, dtype=float)
            se = arr.std(ddof=1) / np.sqrt(arr.size) if arr.size > 1 else 0.0
            out.append(dict(zip(by, key)) | {"mean": float(arr.mean()), "se": float(se), "n": arr.size})
        return out

    def to_csv(self, path):
        if not self.records:
            raise InvalidPlan("nothing to write")
        keys = list(self.records[0])
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.records)


def rate_regression(report: ExperimentReport):
    """Through-origin regression of per-cell mean error on the theoretical rate.

    Returns (slope, r_squared) with the uncentered R^2 convention that is
    appropriate for a no-intercept fit.
    """
    cells = report.aggregate("err", by=("cell",))
    rate_by_cell = {}
    for rec in report.records:
        rate_by_cell[rec["cell"]] = rec["rate"]
    x = np.array([rate_by_cell[rec["cell"]] for rec in cells])
    y = np.array([rec["mean"] for rec in cells])
    slope = float((x @ y) / (x @ x))
    resid = y - slope * x
    r2 = float(1.0 - (resid @ resid) / (y @ y))
    return slope, r2


# ---------------------------------------------------------------------------
# benchmark drivers
# ---------------------------------------------------------------------------

def _spawn_seeds(seed: int, count: int) -> list:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(count)]


def _gen_truth(model: str, cfg: SimConfig):
    return gen_mn_truth(cfg) if model == "mn" else gen_on_truth(cfg)


def _estimation_error(params, truth) -> float:
    if isinstance(truth, MultinomialParams):
        return float(np.linalg.norm(params.Theta - truth.Theta))
    return float(np.linalg.norm(params.theta - truth.theta))


def _theory_rate(model: str, s: int, p: int, n: int, K: int) -> float:
    if model == "mn":
        return float(np.sqrt(s * (np.log(p) + K) / n))
    return float(np.sqrt(s * np.log(p) / n))


def calibrate_scale(model: str, cell, seed: int = 0, c_grid=None, cfg: SolverConfig | None = None) -> float:
    """Pick the constant c in lambda = c*sqrt(log p / n) minimizing error on one replicate."""
    s, p, n, K = cell
    if c_grid is None:
        c_grid = np.geomspace(0.05, 3.2, 7)
    if cfg is None:
        cfg = SolverConfig(lam=0.0, tol=1e-7, max_iter=2000)
    sim = SimConfig(n=n, p=p, K=K, s=s, seed=seed)
    truth = _gen_truth(model, sim)
    data = case_control_sample(truth, sim)
    gs = _default_gs(data, model)
    base = np.sqrt(np.log(p) / data.n)
    best_c, best_err = None, np.inf
    init = None
    for c in np.sort(np.asarray(c_grid, dtype=float))[::-1]:
        res = _fit_one(data, gs, replace(cfg, lam=float(c * base)), model, "pu", "pgd", init)
        init = res.params
        err = _estimation_error(res.params, truth)
        if err < best_err:
            best_c, best_err = float(c), err
    return best_c


def _run_tasks(fn, tasks, threads: int) -> list:
    if threads <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _scaling_task(task) -> dict:
    model, cell, lam, rep, seed, cfg = task
    s, p, n_adj, K = cell
    sim = SimConfig(n=n_adj, p=p, K=K, s=s, seed=seed)
    truth = _gen_truth(model, sim)
    data = case_control_sample(truth, sim)
    gs = _default_gs(data, model)
    t0 = time.perf_counter()
    res = _fit_one(data, gs, replace(cfg, lam=float(lam)), model, "pu", "pgd", None)
    return dict(
        cell=cell,
        replicate=rep,
        estimator=f"pu-{model}",
        err=_estimation_error(res.params, truth),
        rate=_theory_rate(model, s, p, n_adj, K),
        lam=float(lam),
        converged=res.converged,
        runtime=time.perf_counter() - t0,
    )


def scaling_experiment(
    model: str,
    cells,
    replicates: int,
    seed: int = 0,
    c: float | dict | None = None,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> ExperimentReport:
    """Estimation error across (s, p, n, K) cells with lambda = c*sqrt(log p / n).

    `cells` is an iterable of (s, p, n, K); n is rounded up to a multiple of
    2K so the case-control counts are integral, and the recorded rate uses
    the realized n.  `c` may be one constant, a {(s, K): c} table, or None to
    calibrate per (s, K) with a coarse pre-sweep.  Results are identical for
    any thread count: every task carries its own pre-spawned seed.
    """
    cells = [tuple(int(v) for v in cell) for cell in cells]
    if cfg is None:
        cfg = SolverConfig(lam=0.0, tol=1e-7, max_iter=2000)
    if c is None:
        c = {}
        for s, K in sorted({(s, K) for s, _, _, K in cells}):
            # calibrate on the smallest cell with this (s, K)
            cal_cell = min((cl for cl in cells if cl[0] == s and cl[3] == K), key=lambda cl: cl[2])
            c[(s, K)] = calibrate_scale(model, cal_cell, seed=seed, cfg=cfg)
    seeds = _spawn_seeds(seed, len(cells) * replicates)
    tasks = []
    for ci, (s, p, n, K) in enumerate(cells):
        n_adj = int(2 * K * np.ceil(n / (2 * K)))
        c_cell = c[(s, K)] if isinstance(c, dict) else float(c)
        lam = c_cell * np.sqrt(np.log(p) / n_adj)
        for rep in range(replicates):
            tasks.append((model, (s, p, n_adj, K), lam, rep, seeds[ci * replicates + rep], cfg))
    return ExperimentReport(_run_tasks(_scaling_task, tasks, threads))


def _compare_task(task) -> list:
    model, sim_rep, ci, rep, folds, grid_size, grid_span, test_size, cfg = task
    truth = _gen_truth(model, sim_rep)
    train = (
        single_training_sample(truth, sim_rep)
        if sim_rep.pi_st is not None
        else case_control_sample(truth, sim_rep)
    )
    gs = _default_gs(train, model)
    test_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((sim_rep.seed, 0xC0FFEE)))
    )
    X_test = test_rng.normal(0.0, sim_rep.covariate_sd, size=(test_size, sim_rep.p))
    y_test = sample_labels(truth, X_test, test_rng)

    fitted = {"oracle": truth}
    lams = {"oracle": 0.0}
    for estimator in ("pu", "naive"):
        grid = default_lambda_grid(train, gs, model, estimator, grid_size, grid_span)
        plan = CVPlan(grid, folds=folds, metric="loss", seed=sim_rep.seed)
        best_lam, _ = kfold_cv(train, gs, plan, model, estimator, cfg=cfg)
        res = _fit_one(train, gs, replace(cfg, lam=best_lam), model, estimator, "pgd", None)
        fitted[estimator] = res.params
        lams[estimator] = best_lam
    records = []
    for estimator in ("pu", "naive", "oracle"):
        t0 = time.perf_counter()
        pred = _predict_labels(fitted[estimator], X_test)
        records.append(
            dict(
                cell=ci,
                replicate=rep,
                estimator=estimator,
                err_misclass=misclassification_rate(pred, y_test),
                err_mse=pred_mse(pred, y_test),
                lam=lams[estimator],
                runtime=time.perf_counter() - t0,
            )
        )
    return records


def comparison_experiment(
    model: str,
    sweep,
    replicates: int,
    seed: int = 0,
    folds: int = 5,
    grid_size: int = 30,
    grid_span: float = 1e3,
    test_size: int = 100,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> ExperimentReport:
    """PU estimator vs naive baseline vs oracle over a sweep of SimConfigs.

    Each replicate draws a training set and an independent test set of
    `test_size` rows from the same truth; the penalty for the PU and naive
    fits is chosen by k-fold cross-validation on the training data.  Both the
    misclassification rate and the label MSE are recorded for every
    estimator.
    """
    if cfg is None:
        cfg = SolverConfig(lam=0.0, tol=1e-7, max_iter=2000)
    sweep = list(sweep)
    seeds = _spawn_seeds(seed, len(sweep) * replicates)
    tasks = []
    for ci, sim in enumerate(sweep):
        for rep in range(replicates):
            sim_rep = replace(sim, seed=seeds[ci * replicates + rep])
            tasks.append((model, sim_rep, ci, rep, folds, grid_size, grid_span, test_size, cfg))
    report = ExperimentReport()
    for group in _run_tasks(_compare_task, tasks, threads):
        report.records.extend(group)
    return report
