"""Regularized EM for both models: posterior E-steps, penalized PGD M-steps.

Each outer iteration computes posterior class weights at the current
parameters and then runs the proximal gradient solver on the penalized
full-likelihood surrogate, warm-started from the current iterate.  Because
the M-step never increases its surrogate, the penalized *observed* objective
— which is what the trace records — cannot increase either.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NonFinite
from .models import (
    MultinomialParams,
    OrdinalParams,
    PUDataset,
    mn_full_grad,
    mn_full_loss,
    mn_observed_grad,
    mn_observed_loss,
    mn_posterior,
    on_full_grad,
    on_full_loss,
    on_observed_grad,
    on_observed_loss,
    on_posterior,
)
from .optimizer import (
    FitResult,
    GroupStructure,
    SolverConfig,
    _offset_projector,
    group_norm,
    intercept_only_init_mn,
    intercept_only_init_on,
    pack_mn,
    pgd_minimize,
    prox_group,
    unpack_mn,
)

__all__ = ["EMConfig", "em_fit_mn", "em_fit_on"]


@dataclass(frozen=True)
class EMConfig:
    outer_max_iter: int = 200
    outer_tol: float = 1e-8
    inner: SolverConfig = field(default_factory=lambda: SolverConfig(lam=0.0))

    def __post_init__(self):
        if self.outer_max_iter < 1 or self.outer_tol <= 0:
            raise InvalidConfig("outer_max_iter >= 1 and outer_tol > 0 required")


def _em_loop(x0, observed_obj, mstep, observed_grad, gs, cfg, project=None):
    """Shared outer loop; everything model-specific arrives as closures.

    observed_obj(x) -> penalized observed objective (the monotone quantity);
    mstep(x) -> next packed iterate; observed_grad(x) -> smooth gradient of
    the observed loss, used only for the final stationarity residual.
    """
    x = np.array(x0, dtype=float, copy=True)
    F = observed_obj(x)
    if not np.isfinite(F):
        raise NonFinite("observed objective is non-finite at the starting point")
    trace = [F]
    converged = False
    iterations = 0
    for _ in range(cfg.outer_max_iter):
        x = mstep(x)
        F_new = observed_obj(x)
        if not np.isfinite(F_new):
            raise NonFinite("observed objective became non-finite")
        iterations += 1
        trace.append(F_new)
        rel = abs(F - F_new) / max(1.0, abs(F))
        F = F_new
        if rel < cfg.outer_tol:
            converged = True
            break
    g = observed_grad(x)
    step = prox_group(x - g, gs, cfg.inner.lam)
    if project is not None:
        step = project(step)
    gap = float(np.linalg.norm(x - step))
    return x, np.asarray(trace), iterations, converged, gap


def em_fit_mn(
    data: PUDataset,
    gs: GroupStructure | None,
    cfg: EMConfig,
    init: MultinomialParams | None = None,
) -> FitResult:
    """EM for the multinomial model (either scenario).

    With no unlabeled rows the posterior weights are exact label indicators,
    so the whole algorithm collapses to a single penalized M-step.
    """
    p, K = data.p, data.K
    if gs is None:
        gs = GroupStructure.covariate_rows(p, K)
    if gs.dim != p * K + K:
        raise DimensionMismatch("group structure does not match (p, K)")
    data.warn_if_empty_classes()
    if init is None:
        init = intercept_only_init_mn(data)
    lam = cfg.inner.lam

    def observed_obj(x):
        return mn_observed_loss(unpack_mn(x, p, K), data) + lam * group_norm(x, gs)

    def observed_grad(x):
        g_T, g_b = mn_observed_grad(unpack_mn(x, p, K), data)
        return np.concatenate([g_T.ravel(), g_b])

    no_unlabeled = bool(np.all(data.z > 0))

    def mstep(x):
        w = mn_posterior(unpack_mn(x, p, K), data)

        def smooth(v):
            return mn_full_loss(unpack_mn(v, p, K), data, w)

        def grad(v):
            g_T, g_b = mn_full_grad(unpack_mn(v, p, K), data, w)
            return np.concatenate([g_T.ravel(), g_b])

        v, _, _, _, _ = pgd_minimize(x, smooth, grad, gs, cfg.inner)
        return v

    outer_cfg = cfg if not no_unlabeled else EMConfig(1, cfg.outer_tol, cfg.inner)
    x, trace, iters, conv, gap = _em_loop(
        pack_mn(init), observed_obj, mstep, observed_grad, gs, outer_cfg
    )
    if no_unlabeled:
        conv = True
    return FitResult(unpack_mn(x, p, K), trace, iters, conv, gap)


def em_fit_on(
    data: PUDataset,
    gs: GroupStructure | None,
    cfg: EMConfig,
    init: OrdinalParams | None = None,
) -> FitResult:
    """EM for the ordinal model (either scenario)."""
    p, K = data.p, data.K
    if gs is None:
        gs = GroupStructure.entrywise(p, K)
    if gs.dim != p + K:
        raise DimensionMismatch("group structure does not match (p, K)")
    data.warn_if_empty_classes()
    if init is None:
        init = intercept_only_init_on(data, floor=cfg.inner.offset_floor)
    lam = cfg.inner.lam
    project = _offset_projector(p, K, cfg.inner.offset_floor)

    def observed_obj(x):
        return on_observed_loss(OrdinalParams(x, p=p), data) + lam * group_norm(x, gs)

    def observed_grad(x):
        return on_observed_grad(OrdinalParams(x, p=p), data)

    no_unlabeled = bool(np.all(data.z > 0))

    def mstep(x):
        w = on_posterior(OrdinalParams(x, p=p), data)

        def smooth(v):
            return on_full_loss(OrdinalParams(v, p=p), data, w)

        def grad(v):
            return on_full_grad(OrdinalParams(v, p=p), data, w)

        v, _, _, _, _ = pgd_minimize(x, smooth, grad, gs, cfg.inner, project=project)
        return v

    outer_cfg = cfg if not no_unlabeled else EMConfig(1, cfg.outer_tol, cfg.inner)
    x, trace, iters, conv, gap = _em_loop(
        init.theta, observed_obj, mstep, observed_grad, gs, outer_cfg, project=project
    )
    if no_unlabeled:
        conv = True
    return FitResult(OrdinalParams(x, p=p), trace, iters, conv, gap)
