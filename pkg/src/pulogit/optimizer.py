"""Group-lasso penalty, proximal operator, and proximal gradient solvers.

Parameters are packed into flat vectors (multinomial: Theta.ravel() followed
by b; ordinal: theta as-is) so one PGD loop serves both models and also the
EM M-step surrogates.  The penalty is lam * sum_j omega_j ||x_{G_j}||_2 over
disjoint groups of penalized coordinates; coordinates outside every group
(the intercepts / cut-point offsets) are never shrunk.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .core_math import (
    CaseControlRatios,
    grad_log_partition,
    hess_log_partition,
    log_partition,
)
from .errors import (
    DegenerateWarning,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidConfig,
    NonFinite,
)
from .models import (
    MultinomialParams,
    OrdinalParams,
    PUDataset,
    _OrdinalPieces,
    mn_observed_grad,
    mn_observed_loss,
    on_observed_grad,
    on_observed_loss,
)

__all__ = [
    "GroupStructure",
    "LineSearch",
    "SolverConfig",
    "FitResult",
    "group_norm",
    "prox_group",
    "pgd_minimize",
    "pgd_fit_mn",
    "pgd_fit_on",
    "intercept_only_init_mn",
    "intercept_only_init_on",
    "lambda_max_mn",
    "lambda_max_on",
    "pack_mn",
    "unpack_mn",
]


# ---------------------------------------------------------------------------
# penalty structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupStructure:
    """Disjoint index groups over a packed parameter vector of length dim.

    groups hold flat indices; weights are the per-group penalty multipliers
    omega_j.  Coordinates not covered by any group are unpenalized.
    """

    groups: tuple
    weights: np.ndarray
    dim: int

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=np.intp).ravel() for g in self.groups)
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if len(groups) == 0 or weights.size != len(groups):
            raise DimensionMismatch("need one positive weight per group")
        if np.any(weights <= 0):
            raise InvalidConfig("group weights must be positive")
        sizes = np.array([g.size for g in groups])
        if np.any(sizes < 1):
            raise InvalidConfig("groups must be nonempty")
        flat = np.concatenate(groups)
        if flat.min() < 0 or flat.max() >= self.dim:
            raise IndexOutOfRange("group index outside the packed vector")
        if np.unique(flat).size != flat.size:
            raise InvalidConfig("groups must be disjoint")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "weights", weights)
        # uniform group size admits a fully vectorized prox
        stack = np.stack(groups) if np.all(sizes == sizes[0]) else None
        object.__setattr__(self, "_stack", stack)

    @classmethod
    def covariate_rows(cls, p: int, K: int) -> "GroupStructure":
        """One group per covariate: row j of Theta, weight sqrt(K).

        Matches a packing of [Theta.ravel(), b]; the K intercepts at the tail
        are left unpenalized.
        """
        idx = np.arange(p)[:, None] * K + np.arange(K)[None, :]
        return cls(tuple(idx), np.full(p, np.sqrt(K)), p * K + K)

    @classmethod
    def entrywise(cls, p: int, K: int) -> "GroupStructure":
        """Singleton groups over theta[:p] (plain lasso); offsets unpenalized."""
        return cls(tuple(np.array([j]) for j in range(p)), np.ones(p), p + K)

    @property
    def J(self) -> int:
        return len(self.groups)


def _block_norms(v: np.ndarray, gs: GroupStructure) -> np.ndarray:
    if gs._stack is not None:
        return np.sqrt((v[gs._stack] ** 2).sum(axis=1))
    return np.array([np.linalg.norm(v[g]) for g in gs.groups])


def group_norm(v, gs: GroupStructure) -> float:
    """Weighted group norm sum_j omega_j * ||v_{G_j}||_2."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != gs.dim:
        raise IndexOutOfRange(f"vector of length {v.size}, structure expects {gs.dim}")
    return float(gs.weights @ _block_norms(v, gs))


def prox_group(v, gs: GroupStructure, t: float) -> np.ndarray:
    """Block soft-threshold: each group scaled by max(0, 1 - t*omega/||v_G||).

    Unpenalized coordinates pass through unchanged; t = 0 is the identity.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size != gs.dim:
        raise IndexOutOfRange(f"vector of length {v.size}, structure expects {gs.dim}")
    if t < 0:
        raise InvalidConfig("threshold must be nonnegative")
    out = v.copy()
    if t == 0:
        return out
    thresh = t * gs.weights
    if gs._stack is not None:
        block = out[gs._stack]
        norms = np.sqrt((block**2).sum(axis=1))
        scale = np.where(norms > thresh, 1.0 - thresh / np.where(norms > 0, norms, 1.0), 0.0)
        out[gs._stack] = scale[:, None] * block
    else:
        for g, tw in zip(gs.groups, thresh):
            nrm = np.linalg.norm(out[g])
            out[g] = 0.0 if nrm <= tw else (1.0 - tw / nrm) * out[g]
    return out


# ---------------------------------------------------------------------------
# solver configuration and result
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LineSearch:
    eta0: float = 1.0
    shrink: float = 0.5
    max_halvings: int = 50

    def __post_init__(self):
        if self.eta0 <= 0 or not (0 < self.shrink < 1) or self.max_halvings < 1:
            raise InvalidConfig("need eta0 > 0, shrink in (0,1), max_halvings >= 1")


@dataclass(frozen=True)
class SolverConfig:
    """PGD settings.  lam is the penalty level lambda."""

    lam: float
    max_iter: int = 5000
    tol: float = 1e-9
    line_search: LineSearch = field(default_factory=LineSearch)
    offset_floor: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidConfig("lam must be nonnegative")
        if self.max_iter < 1 or self.tol <= 0 or self.offset_floor <= 0:
            raise InvalidConfig("max_iter >= 1 and positive tol/offset_floor required")


@dataclass
class FitResult:
    params: object
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    stationarity_gap: float


# ---------------------------------------------------------------------------
# the PGD loop
# ---------------------------------------------------------------------------

# Absolute slack for the sufficient-decrease test: protects the line search
# against failing on pure floating-point noise near a stationary point while
# keeping any recorded objective increase far below the monotonicity contract.
_DECREASE_SLACK = 1e-13


def pgd_minimize(
    x0: np.ndarray,
    smooth: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    gs: GroupStructure,
    cfg: SolverConfig,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
):
    """Backtracking proximal gradient descent on smooth(x) + lam*group_norm(x).

    `project` (applied right after the prox) must act on coordinates disjoint
    from every penalized group, so the combined map is still an exact
    proximal operator and the sufficient-decrease guarantee applies.

    Returns (x, trace, iterations, converged, stationarity_gap).
    """
    ls = cfg.line_search
    x = np.array(x0, dtype=float, copy=True)
    if project is not None:
        x = project(x)
    F = smooth(x) + cfg.lam * group_norm(x, gs)
    if not np.isfinite(F):
        raise NonFinite("objective is non-finite at the starting point")
    trace = [F]
    g = grad(x)
    eta_prev = ls.eta0
    streak = 0
    converged = False
    iterations = 0
    for _ in range(cfg.max_iter):
        # warm-started trial step: try a slightly larger step than last time
        eta = min(ls.eta0, 2.0 * eta_prev)
        accepted = False
        for _ in range(ls.max_halvings + 1):
            cand = prox_group(x - eta * g, gs, eta * cfg.lam)
            if project is not None:
                cand = project(cand)
            F_cand = smooth(cand) + cfg.lam * group_norm(cand, gs)
            if np.isfinite(F_cand):
                dx = cand - x
                if F_cand <= F - (dx @ dx) / (2.0 * eta) + _DECREASE_SLACK:
                    accepted = True
                    break
            eta *= ls.shrink
        if not accepted:
            # no step of any size buys a measurable decrease: numerically
            # stationary, so stop without recording an increase
            converged = True
            break
        iterations += 1
        rel = abs(F - F_cand) / max(1.0, abs(F))
        x, F = cand, min(F, F_cand)
        trace.append(F)
        eta_prev = eta
        g = grad(x)
        if rel < cfg.tol:
            streak += 1
            if streak >= 3:
                converged = True
                break
        else:
            streak = 0
    step = prox_group(x - eta_prev * g, gs, eta_prev * cfg.lam)
    if project is not None:
        step = project(step)
    gap = float(np.linalg.norm(x - step) / eta_prev)
    return x, np.asarray(trace), iterations, converged, gap


# ---------------------------------------------------------------------------
# packing helpers
# ---------------------------------------------------------------------------

def pack_mn(params: MultinomialParams) -> np.ndarray:
    return np.concatenate([params.Theta.ravel(), params.b])


def unpack_mn(x: np.ndarray, p: int, K: int) -> MultinomialParams:
    return MultinomialParams(x[: p * K].reshape(p, K), x[p * K:])


def _offset_projector(p: int, K: int, floor: float):
    if K < 2:
        return lambda x: x

    def project(x):
        np.maximum(x[p + 1:], floor, out=x[p + 1:])
        return x

    return project


# ---------------------------------------------------------------------------
# model-facing fits
# ---------------------------------------------------------------------------

def pgd_fit_mn(
    data: PUDataset,
    gs: GroupStructure | None,
    cfg: SolverConfig,
    init: MultinomialParams | None = None,
) -> FitResult:
    """Penalized multinomial fit: mn_observed_loss + lam * group_norm(Theta)."""
    p, K = data.p, data.K
    if gs is None:
        gs = GroupStructure.covariate_rows(p, K)
    if gs.dim != p * K + K:
        raise DimensionMismatch("group structure does not match (p, K)")
    data.warn_if_empty_classes()
    if init is None:
        init = intercept_only_init_mn(data)

    def smooth(x):
        return mn_observed_loss(unpack_mn(x, p, K), data)

    def grad(x):
        g_T, g_b = mn_observed_grad(unpack_mn(x, p, K), data)
        return np.concatenate([g_T.ravel(), g_b])

    x, trace, iters, conv, gap = pgd_minimize(pack_mn(init), smooth, grad, gs, cfg)
    return FitResult(unpack_mn(x, p, K), trace, iters, conv, gap)


def pgd_fit_on(
    data: PUDataset,
    gs: GroupStructure | None,
    cfg: SolverConfig,
    init: OrdinalParams | None = None,
) -> FitResult:
    """Penalized ordinal fit: on_observed_loss + lam * group_norm(theta[:p]).

    After every prox step the cut-point increments are projected back to
    [offset_floor, inf) so the category probabilities stay positive.
    """
    p, K = data.p, data.K
    if gs is None:
        gs = GroupStructure.entrywise(p, K)
    if gs.dim != p + K:
        raise DimensionMismatch("group structure does not match (p, K)")
    data.warn_if_empty_classes()
    if init is None:
        init = intercept_only_init_on(data, floor=cfg.offset_floor)

    def smooth(x):
        return on_observed_loss(OrdinalParams(x, p=p), data)

    def grad(x):
        return on_observed_grad(OrdinalParams(x, p=p), data)

    x, trace, iters, conv, gap = pgd_minimize(
        init.theta, smooth, grad, gs, cfg, project=_offset_projector(p, K, cfg.offset_floor)
    )
    return FitResult(OrdinalParams(x, p=p), trace, iters, conv, gap)


# ---------------------------------------------------------------------------
# intercept-only maximum likelihood (the standard initialization)
# ---------------------------------------------------------------------------

_NEWTON_TOL = 1e-10
_NEWTON_MAX_ITER = 200
_DIVERGE_BOUND = 40.0


def _mn_intercept_pieces(b: np.ndarray, data: PUDataset, freq: np.ndarray):
    """Value, gradient and analytic Hessian of the intercept-restricted loss."""
    if data.is_case_control:
        W = b
        c = np.log(data.scenario.kappa)
    else:
        pi = data.scenario.pi_st
        W = b + np.log1p(-pi)
        c = np.log(pi) - np.log1p(-pi)
    A_W = log_partition(W)
    s_W = grad_log_partition(W)
    V = W + c - A_W
    val = float(log_partition(V) - freq @ V)
    G_V = grad_log_partition(V) - freq
    g = G_V - s_W * G_V.sum()
    J = np.eye(b.size) - np.outer(np.ones(b.size), s_W)
    H = J.T @ hess_log_partition(V) @ J - G_V.sum() * hess_log_partition(W)
    return val, g, H


def _damped_newton(x0, value_grad_hess, feasible=None):
    """Newton iteration with Levenberg damping and halving line search.

    Returns (x, ok); ok is False when the iterates escape the divergence
    bound or the gradient tolerance is never reached.
    """
    x = np.array(x0, dtype=float)
    val, g, H = value_grad_hess(x)
    for _ in range(_NEWTON_MAX_ITER):
        if np.linalg.norm(g) <= _NEWTON_TOL:
            return x, True
        mu = 0.0
        while True:
            try:
                d = np.linalg.solve(H + mu * np.eye(x.size), -g)
            except np.linalg.LinAlgError:
                d = None
            if d is not None and g @ d < 0:
                break
            mu = 1e-8 if mu == 0 else 10.0 * mu
            if mu > 1e8:
                return x, False
        t = 1.0
        while t > 1e-14:
            cand = x + t * d
            if feasible is None or feasible(cand):
                v_new, g_new, H_new = value_grad_hess(cand)
                if np.isfinite(v_new) and v_new <= val + 1e-4 * t * (g @ d):
                    x, val, g, H = cand, v_new, g_new, H_new
                    break
            t *= 0.5
        else:
            return x, False
        if np.max(np.abs(x)) > _DIVERGE_BOUND:
            return x, False
    return x, np.linalg.norm(g) <= _NEWTON_TOL


def intercept_only_init_mn(data: PUDataset) -> MultinomialParams:
    """MLE with Theta = 0: damped Newton on the K intercepts.

    When the restricted likelihood has no finite maximizer (e.g. a label that
    never occurs), falls back to b = 0 with a warning.
    """
    K = data.K
    freq = data.label_counts[1:] / data.n

    b, ok = _damped_newton(np.zeros(K), lambda b: _mn_intercept_pieces(b, data, freq))
    if not ok:
        warnings.warn(
            "intercept-only likelihood has no stable optimum; using zero offsets",
            DegenerateWarning,
            stacklevel=2,
        )
        b = np.zeros(K)
    return MultinomialParams(np.zeros((data.p, K)), b)


def _on_intercept_value_grad(off: np.ndarray, data: PUDataset, freq: np.ndarray):
    """Value and gradient of the ordinal loss restricted to the offsets.

    With beta = 0 every row shares the same class scores, so the loss is the
    label-frequency-weighted single-point loss; reuse the ordinal machinery
    through a p = 0 parameter vector.
    """
    theta = OrdinalParams(off, p=0)
    pieces = _OrdinalPieces(theta, np.zeros((1, 0)))
    if data.is_case_control:
        V = np.log(data.scenario.kappa) + pieces.log_p
        G_V = grad_log_partition(V) - freq
        G_u = pieces.chain_to_u(G_V)
    else:
        pi = data.scenario.pi_st
        W = pieces.log_ratio + np.log1p(-pi)
        A_W = log_partition(W)
        V = W + (np.log(pi) - np.log1p(-pi)) - A_W[:, None]
        G_V = grad_log_partition(V) - freq
        s_W = np.exp(W - A_W[:, None])
        G_W = G_V - s_W * G_V.sum(axis=1, keepdims=True)
        G_u = pieces.chain_to_u(G_W)
        G_u[:, 0] += expit(pieces.S[:, 0]) * G_W.sum(axis=1)
    val = float(log_partition(V)[0] - freq @ V[0])
    return val, -G_u[0]


def intercept_only_init_on(data: PUDataset, floor: float = 1e-8) -> OrdinalParams:
    """MLE with beta = 0: damped Newton on the K cut-point offsets.

    The offset Hessian is taken by central differences of the analytic
    gradient (the dimension is tiny).  On divergence falls back to
    near-zero offsets with a warning.
    """
    K = data.K
    freq = data.label_counts[1:] / data.n
    fallback = np.concatenate([[0.0], np.full(K - 1, max(floor, 1e-8))])

    def vgh(off):
        val, g = _on_intercept_value_grad(off, data, freq)
        h = 1e-5
        H = np.empty((K, K))
        for k in range(K):
            e = np.zeros(K)
            e[k] = h
            hi = off + e
            lo = off - e
            if K >= 2:
                hi[1:] = np.maximum(hi[1:], floor)
                lo[1:] = np.maximum(lo[1:], floor)
            _, g_hi = _on_intercept_value_grad(hi, data, freq)
            _, g_lo = _on_intercept_value_grad(lo, data, freq)
            H[:, k] = (g_hi - g_lo) / (hi[k] - lo[k])
        return val, g, 0.5 * (H + H.T)

    def feasible(off):
        return K < 2 or np.all(off[1:] >= floor)

    # start from evenly spaced cut-points on the probability scale
    grid = (np.arange(1, K + 1)) / (K + 1)
    nu0 = np.log(grid / (1 - grid))
    start = np.concatenate([nu0[:1], np.diff(nu0)]) if K >= 2 else nu0
    off, ok = _damped_newton(start, vgh, feasible=feasible)
    if not ok or not feasible(off):
        warnings.warn(
            "offset-only likelihood has no stable optimum; using near-zero offsets",
            DegenerateWarning,
            stacklevel=2,
        )
        off = fallback
    theta = np.concatenate([np.zeros(data.p), off])
    return OrdinalParams(theta, p=data.p)


# ---------------------------------------------------------------------------
# penalty scale
# ---------------------------------------------------------------------------

def lambda_max_mn(data: PUDataset, gs: GroupStructure | None = None) -> float:
    """Smallest lam at which the penalized fit keeps Theta = 0.

    Computed as the group-wise dual norm of the smooth gradient at the
    intercept-only optimum: max_j ||grad_{G_j}||_2 / omega_j.
    """
    if gs is None:
        gs = GroupStructure.covariate_rows(data.p, data.K)
    init = intercept_only_init_mn(data)
    g_T, g_b = mn_observed_grad(init, data)
    g = np.concatenate([g_T.ravel(), g_b])
    return float(np.max(_block_norms(g, gs) / gs.weights))


def lambda_max_on(data: PUDataset, gs: GroupStructure | None = None) -> float:
    """Ordinal analogue of lambda_max_mn over the theta[:p] groups."""
    if gs is None:
        gs = GroupStructure.entrywise(data.p, data.K)
    init = intercept_only_init_on(data)
    g = on_observed_grad(init, data)
    return float(np.max(_block_norms(g, gs) / gs.weights))
