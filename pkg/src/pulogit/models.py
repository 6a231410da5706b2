"""Losses, gradients, posteriors and predictions for both PU models.

Two model families (multinomial, ordinal-cumulative-logit), two observation
scenarios (case-control, single-training-set).  Every observed loss has the
shape  mean_i [ A(v_i) - <indicator(z_i), v_i> ]  where v_i is the scenario
link applied to the model's class scores; the full-likelihood losses used by
the EM M-step replace the indicator with posterior weights and move the
ratio/odds factors inside the log-partition term.  Additive constants that do
not depend on the parameters are dropped from the full losses, so EM descent
must be monitored on the penalized *observed* objective.

All gradients are hand-derived closed forms; there is no autodiff anywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, log_expit

from .core_math import (
    CaseControlRatios,
    SingleTrainingProbs,
    grad_log_partition,
    log_partition,
    ordinal_p,
    ordinal_u,
)
from .errors import DimensionMismatch, EmptyClassWarning, LabelOutOfRange, NotIncreasing

__all__ = [
    "PUDataset",
    "MultinomialParams",
    "OrdinalParams",
    "PosteriorWeights",
    "ordinal_reparam",
    "ordinal_cutpoints",
    "mn_observed_loss",
    "mn_observed_grad",
    "on_observed_loss",
    "on_observed_grad",
    "mn_naive_loss",
    "mn_naive_grad",
    "on_naive_loss",
    "on_naive_grad",
    "mn_full_loss",
    "mn_full_grad",
    "on_full_loss",
    "on_full_grad",
    "mn_posterior",
    "on_posterior",
    "mn_predict_proba",
    "on_predict_proba",
    "predict_label",
]


# ---------------------------------------------------------------------------
# parameter and data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultinomialParams:
    """Multinomial regression matrix Theta (p x K) and offsets b (K,).

    Class 0 is the implicit reference with zero score.
    """

    Theta: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Theta = np.asarray(self.Theta, dtype=float)
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if Theta.ndim != 2:
            raise DimensionMismatch("Theta must be a p x K matrix")
        if b.ndim != 1 or b.size != Theta.shape[1]:
            raise DimensionMismatch("b must be a length-K vector matching Theta")
        if not (np.all(np.isfinite(Theta)) and np.all(np.isfinite(b))):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "Theta", Theta)
        object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return self.Theta.shape[0]

    @property
    def K(self) -> int:
        return self.Theta.shape[1]


@dataclass(frozen=True)
class OrdinalParams:
    """Reparameterized ordinal vector theta of length p + K.

    theta[:p] is the regression parameter; theta[p] is the first cut-point
    and theta[p+j-1] for j >= 2 are the strictly positive cut-point
    increments.  ``p`` is carried explicitly since the split is not
    recoverable from the vector alone.
    """

    theta: np.ndarray
    p: int

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 1 or not (0 <= self.p < theta.size):
            raise DimensionMismatch("theta must be a vector of length p + K with K >= 1")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        if theta.size - self.p >= 2 and np.any(theta[self.p + 1:] <= 0):
            raise NotIncreasing("cut-point increments theta[p+j], j >= 2, must be positive")
        object.__setattr__(self, "theta", theta)

    @property
    def K(self) -> int:
        return self.theta.size - self.p

    @property
    def beta(self) -> np.ndarray:
        return self.theta[: self.p]

    @property
    def nu(self) -> np.ndarray:
        """Cut-points nu_j = theta_{p+1} + ... + theta_{p+j}, strictly increasing."""
        return np.cumsum(self.theta[self.p:])


def ordinal_reparam(beta, nu) -> OrdinalParams:
    """Pack (beta, strictly increasing cut-points nu) into an OrdinalParams."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if nu.size >= 2 and np.any(np.diff(nu) <= 0):
        raise NotIncreasing("cut-points must be strictly increasing")
    return OrdinalParams(np.concatenate([beta, nu[:1], np.diff(nu)]), p=beta.size)


def ordinal_cutpoints(params: OrdinalParams):
    """Inverse of ordinal_reparam: (beta, nu)."""
    return params.beta.copy(), params.nu


@dataclass(frozen=True)
class PUDataset:
    """Covariates X, PU labels z in {0..K}, the observation scenario, and
    (simulation only) the hidden true labels y.

    Label 0 means "unlabeled": possibly class 0, possibly a masked positive.
    Rows with labels outside {0..K} are rejected at construction rather than
    silently dropped.
    """

    X: np.ndarray
    z: np.ndarray
    scenario: object  # CaseControlRatios | SingleTrainingProbs
    y: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        z = np.asarray(self.z)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch("X must be an n x p matrix with n, p >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        if z.ndim != 1 or z.shape[0] != X.shape[0]:
            raise DimensionMismatch("z must be a length-n label vector")
        if not np.issubdtype(z.dtype, np.integer):
            zi = z.astype(int)
            if not np.array_equal(zi, z):
                raise LabelOutOfRange("labels must be integers")
            z = zi
        if not isinstance(self.scenario, (CaseControlRatios, SingleTrainingProbs)):
            raise TypeError("scenario must be CaseControlRatios or SingleTrainingProbs")
        K = self.scenario.K
        if z.min() < 0 or z.max() > K:
            bad = int(np.argmax((z < 0) | (z > K)))
            raise LabelOutOfRange(f"label {z[bad]} at row {bad} outside 0..{K}")
        y = self.y
        if y is not None:
            y = np.asarray(y)
            if y.shape != z.shape:
                raise DimensionMismatch("y must align with z")
            y = y.astype(int)
            if y.min() < 0 or y.max() > K:
                raise LabelOutOfRange("true labels outside 0..K")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.scenario.K

    @property
    def is_case_control(self) -> bool:
        return isinstance(self.scenario, CaseControlRatios)

    @cached_property
    def label_counts(self) -> np.ndarray:
        """Counts of labels 0..K."""
        return np.bincount(self.z, minlength=self.K + 1)

    @cached_property
    def _delta(self) -> np.ndarray:
        """n x K indicator of the observed positive labels."""
        d = np.zeros((self.n, self.K))
        pos = self.z > 0
        d[np.nonzero(pos)[0], self.z[pos] - 1] = 1.0
        return d

    def subset(self, idx) -> "PUDataset":
        idx = np.asarray(idx)
        return PUDataset(
            self.X[idx],
            self.z[idx],
            self.scenario,
            None if self.y is None else self.y[idx],
        )

    def warn_if_empty_classes(self):
        """Emit a diagnostic when a positive class has no labeled rows.

        The case-control likelihood stays well-defined (the ratios are given),
        so fitting proceeds; the warning flags the unusual design.
        """
        counts = self.label_counts[1:]
        if self.is_case_control and np.any(counts == 0):
            empty = np.nonzero(counts == 0)[0] + 1
            warnings.warn(
                f"positive classes {empty.tolist()} have zero labeled rows",
                EmptyClassWarning,
                stacklevel=3,
            )


@dataclass(frozen=True)
class PosteriorWeights:
    """Soft class-membership weights, one row per sample.

    Rows of labeled samples are exact unit vectors; rows of unlabeled samples
    sum to at most 1, the deficit being the posterior mass of class 0.
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise DimensionMismatch("weights must be an n x K matrix")
        if np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
            raise ValueError("posterior weights must lie in [0, 1]")
        object.__setattr__(self, "w", w)


# ---------------------------------------------------------------------------
# multinomial losses
# ---------------------------------------------------------------------------

def _check_mn(params: MultinomialParams, data: PUDataset):
    if params.p != data.p or params.K != data.K:
        raise DimensionMismatch(
            f"params are ({params.p}, {params.K}) but data is ({data.p}, {data.K})"
        )


def _mn_link_terms(params: MultinomialParams, data: PUDataset):
    """Scores U, link input W, class-constant shift c with link(u) = W + c - A(W)."""
    U = data.X @ params.Theta + params.b
    if data.is_case_control:
        W = U
        c = np.log(data.scenario.kappa)
    else:
        pi = data.scenario.pi_st
        W = U + np.log1p(-pi)
        c = np.log(pi) - np.log1p(-pi)
    return U, W, c


def mn_observed_loss(params: MultinomialParams, data: PUDataset) -> float:
    """Average negative log-likelihood of the observed PU labels (multinomial).

    (1/n) sum_i [ A(f(u_i)) - f(u_i)_{z_i} 1{z_i > 0} ] with f the scenario's
    PU link applied to u_i = Theta^T x_i + b.
    """
    _check_mn(params, data)
    _, W, c = _mn_link_terms(params, data)
    V = W + c - log_partition(W)[:, None]
    pos = data.z > 0
    lin = V[np.nonzero(pos)[0], data.z[pos] - 1].sum()
    return float((log_partition(V).sum() - lin) / data.n)


def mn_observed_grad(params: MultinomialParams, data: PUDataset):
    """Gradient of mn_observed_loss in (Theta, b); returns (p x K, K)."""
    _check_mn(params, data)
    _, W, c = _mn_link_terms(params, data)
    A_W = log_partition(W)
    V = W + c - A_W[:, None]
    G_V = grad_log_partition(V) - data._delta
    s_W = np.exp(W - A_W[:, None])
    G_W = G_V - s_W * G_V.sum(axis=1, keepdims=True)
    return data.X.T @ G_W / data.n, G_W.mean(axis=0)


def mn_naive_loss(params: MultinomialParams, data: PUDataset) -> float:
    """Plain multinomial NLL treating every unlabeled row as true class 0."""
    _check_mn(params, data)
    U = data.X @ params.Theta + params.b
    pos = data.z > 0
    lin = U[np.nonzero(pos)[0], data.z[pos] - 1].sum()
    return float((log_partition(U).sum() - lin) / data.n)


def mn_naive_grad(params: MultinomialParams, data: PUDataset):
    _check_mn(params, data)
    U = data.X @ params.Theta + params.b
    G = grad_log_partition(U) - data._delta
    return data.X.T @ G / data.n, G.mean(axis=0)


def mn_full_loss(params: MultinomialParams, data: PUDataset, weights: PosteriorWeights) -> float:
    """The EM M-step smooth objective for the multinomial model.

    Case-control: (1/n) sum_i [ log(1 + sum_k (1+kappa_k) e^{u_ik}) - <w_i, u_i> ];
    single-training: same with the bare log-partition A(u_i).  Constant terms
    that do not involve (Theta, b) are dropped.
    """
    _check_mn(params, data)
    U = data.X @ params.Theta + params.b
    shift = np.log1p(data.scenario.kappa) if data.is_case_control else 0.0
    lin = (weights.w * U).sum()
    return float((log_partition(U + shift).sum() - lin) / data.n)


def mn_full_grad(params: MultinomialParams, data: PUDataset, weights: PosteriorWeights):
    _check_mn(params, data)
    U = data.X @ params.Theta + params.b
    shift = np.log1p(data.scenario.kappa) if data.is_case_control else 0.0
    G = grad_log_partition(U + shift) - weights.w
    return data.X.T @ G / data.n, G.mean(axis=0)


def mn_posterior(params: MultinomialParams, data: PUDataset) -> PosteriorWeights:
    """E-step weights: posterior P(y=j | x, z=0) per scenario; unit rows where z>0.

    Under case-control sampling the unlabeled posterior is the plain model
    softmax (the ratios cancel between numerator and denominator); under
    single-training sampling the class scores are tilted by the residual
    unlabeled fractions (1 - pi_k).
    """
    _check_mn(params, data)
    U = data.X @ params.Theta + params.b
    if data.is_case_control:
        w = grad_log_partition(U)
    else:
        w = grad_log_partition(U + np.log1p(-data.scenario.pi_st))
    w = np.where((data.z > 0)[:, None], data._delta, w)
    return PosteriorWeights(w)


def mn_predict_proba(params: MultinomialParams, x) -> np.ndarray:
    """Class probabilities (P(y=0|x), ..., P(y=K|x)); rows sum to 1."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.p:
        raise DimensionMismatch(f"x has {x.shape[-1]} covariates, params expect {params.p}")
    U = x @ params.Theta + params.b
    A = log_partition(U)
    return np.concatenate(
        [np.exp(-A)[..., None], np.exp(U - A[..., None])], axis=-1
    )


# ---------------------------------------------------------------------------
# ordinal losses
# ---------------------------------------------------------------------------

def _check_on(theta: OrdinalParams, data: PUDataset):
    if theta.p != data.p or theta.K != data.K:
        raise DimensionMismatch(
            f"params are ({theta.p}, {theta.K}) but data is ({data.p}, {data.K})"
        )


class _OrdinalPieces:
    """Per-dataset ordinal quantities shared by loss and gradient code.

    S[:, j] = x^T beta - nu_{j+1} are the cumulative scores; log p is
    assembled in the overflow-safe product form; alpha are the sigmoid
    derivatives at S with the explicit trailing zero.
    """

    def __init__(self, theta: OrdinalParams, X: np.ndarray):
        inc = theta.theta[theta.p:]
        self.K = inc.size
        self.xb = X @ theta.beta
        self.S = self.xb[:, None] - np.cumsum(inc)[None, :]
        last = log_expit(self.S[:, -1:])
        if self.K == 1:
            self.log_p = last
        else:
            body = (
                log_expit(self.S[:, :-1])
                + log_expit(-self.S[:, 1:])
                + np.log(-np.expm1(-inc[1:]))[None, :]
            )
            self.log_p = np.concatenate([body, last], axis=1)
        self.log_ratio = self.log_p + np.logaddexp(0.0, self.S[:, :1])

    @cached_property
    def p_vals(self):
        return np.exp(self.log_p)

    @cached_property
    def alpha(self):
        return expit(self.S) * expit(-self.S)

    @cached_property
    def alpha_next(self):
        a = np.empty_like(self.alpha)
        a[:, :-1] = self.alpha[:, 1:]
        a[:, -1] = 0.0
        return a

    def chain_to_u(self, G):
        """Apply the transposed Jacobian of u -> log p(u) to per-sample rows G."""
        t1 = G * self.alpha / self.p_vals
        t2 = G * self.alpha_next / self.p_vals
        rc1 = np.flip(np.cumsum(np.flip(t1, axis=1), axis=1), axis=1)
        rc2 = np.flip(np.cumsum(np.flip(t2, axis=1), axis=1), axis=1)
        out = rc1.copy()
        out[:, 0] -= rc2[:, 0]
        out[:, 1:] -= rc2[:, :-1]
        return out

    def theta_grad(self, G_u, X, n):
        """Map a gradient w.r.t. u rows to the length-(p+K) theta gradient."""
        g = np.empty(X.shape[1] + self.K)
        g[: X.shape[1]] = X.T @ G_u[:, 0] / n
        g[X.shape[1]:] = -G_u.sum(axis=0) / n
        return g


def _on_link_output(pieces: _OrdinalPieces, data: PUDataset):
    """The scenario link output V; also returns (W, A_W) for the ST chain rule."""
    if data.is_case_control:
        return np.log(data.scenario.kappa) + pieces.log_p, None, None
    pi = data.scenario.pi_st
    W = pieces.log_ratio + np.log1p(-pi)
    A_W = log_partition(W)
    V = W + (np.log(pi) - np.log1p(-pi)) - A_W[:, None]
    return V, W, A_W


def on_observed_loss(theta: OrdinalParams, data: PUDataset) -> float:
    """Average negative log-likelihood of the observed PU labels (ordinal)."""
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    V, _, _ = _on_link_output(pieces, data)
    pos = data.z > 0
    lin = V[np.nonzero(pos)[0], data.z[pos] - 1].sum()
    return float((log_partition(V).sum() - lin) / data.n)


def on_observed_grad(theta: OrdinalParams, data: PUDataset) -> np.ndarray:
    """Gradient of on_observed_loss as a length p+K vector.

    Chain rule: d loss/d u through the link Jacobian, then through
    du/d theta, whose only nonzero blocks are x (into u_1 via beta) and -1
    (each offset into its own coordinate).
    """
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    V, W, A_W = _on_link_output(pieces, data)
    G_V = grad_log_partition(V) - data._delta
    if data.is_case_control:
        G_u = pieces.chain_to_u(G_V)
    else:
        s_W = np.exp(W - A_W[:, None])
        G_W = G_V - s_W * G_V.sum(axis=1, keepdims=True)
        G_u = pieces.chain_to_u(G_W)
        G_u[:, 0] += expit(pieces.S[:, 0]) * G_W.sum(axis=1)
    return pieces.theta_grad(G_u, data.X, data.n)


def on_naive_loss(theta: OrdinalParams, data: PUDataset) -> float:
    """Plain cumulative-logit NLL treating every unlabeled row as class 0."""
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    pos = data.z > 0
    rows = np.nonzero(pos)[0]
    total = np.logaddexp(0.0, pieces.S[:, 0]).sum()  # -log P(y=0) summed over all rows
    total -= pieces.log_ratio[rows, data.z[pos] - 1].sum()
    return float(total / data.n)


def on_naive_grad(theta: OrdinalParams, data: PUDataset) -> np.ndarray:
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    # d loss / d log r = model class probabilities minus the label indicator
    G_V = np.exp(pieces.log_p) - data._delta
    G_u = pieces.chain_to_u(G_V)
    G_u[:, 0] += expit(pieces.S[:, 0]) * G_V.sum(axis=1)
    return pieces.theta_grad(G_u, data.X, data.n)


def on_full_loss(theta: OrdinalParams, data: PUDataset, weights: PosteriorWeights) -> float:
    """The EM M-step smooth objective for the ordinal model.

    Case-control: (1/n) sum_i [ log(1 + sum_k (1+kappa_k) r_k(x_i)) -
    <w_i, log r(x_i)> ]; single-training drops the (1+kappa) tilt.  Additive
    constants are omitted as in the multinomial case.
    """
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    shift = np.log1p(data.scenario.kappa) if data.is_case_control else 0.0
    lin = (weights.w * pieces.log_ratio).sum()
    return float((log_partition(pieces.log_ratio + shift).sum() - lin) / data.n)


def on_full_grad(theta: OrdinalParams, data: PUDataset, weights: PosteriorWeights) -> np.ndarray:
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    shift = np.log1p(data.scenario.kappa) if data.is_case_control else 0.0
    G_V = grad_log_partition(pieces.log_ratio + shift) - weights.w
    G_u = pieces.chain_to_u(G_V)
    G_u[:, 0] += expit(pieces.S[:, 0]) * G_V.sum(axis=1)
    return pieces.theta_grad(G_u, data.X, data.n)


def on_posterior(theta: OrdinalParams, data: PUDataset) -> PosteriorWeights:
    """E-step weights for the ordinal model; unit rows where z > 0."""
    _check_on(theta, data)
    pieces = _OrdinalPieces(theta, data.X)
    if data.is_case_control:
        w = pieces.p_vals
    else:
        W = pieces.log_ratio + np.log1p(-data.scenario.pi_st)
        w = grad_log_partition(W)
    w = np.where((data.z > 0)[:, None], data._delta, w)
    return PosteriorWeights(w)


def on_predict_proba(theta: OrdinalParams, x) -> np.ndarray:
    """Class probabilities (P(y=0|x), ..., P(y=K|x)) from the cumulative logits."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.p:
        raise DimensionMismatch(f"x has {x.shape[-1]} covariates, params expect {theta.p}")
    u = ordinal_u(x, theta.theta)
    return np.concatenate([expit(-u[..., :1]), ordinal_p(u)], axis=-1)


def predict_label(proba) -> np.ndarray | int:
    """Argmax class of a probability vector; ties go to the smallest index."""
    proba = np.asarray(proba, dtype=float)
    if np.any(proba < -1e-9) or np.any(np.abs(proba.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("expected rows on the probability simplex")
    lab = np.argmax(proba, axis=-1)
    return int(lab) if lab.ndim == 0 else lab
