"""Pure numeric kernels: log-partition, PU links, ordinal ratio machinery.

Every loss and gradient in the package is assembled from the functions in
this module.  All of them are pure, allocate their outputs, and accept
batched input: the class axis is always the last one, so ``u`` may be a
single linear predictor of shape ``(K,)`` or a stack ``(n, K)``.

Numerical policy: exponentials are routed through log-sum-exp / log1p-style
forms (the naive formulas overflow for |u| beyond ~700).  Linear predictors
are never clamped, only stabilized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import DimensionMismatch, NonPositiveProbability

__all__ = [
    "CaseControlRatios",
    "SingleTrainingProbs",
    "log_partition",
    "grad_log_partition",
    "hess_log_partition",
    "pu_link_cc",
    "pu_link_grad_cc",
    "pu_link_st",
    "ordinal_u",
    "ordinal_p",
    "ordinal_alpha",
    "ordinal_log_p",
    "ordinal_ratio",
    "ordinal_log_ratio",
    "ordinal_link_cc",
    "ordinal_link_grad",
]


@dataclass(frozen=True)
class CaseControlRatios:
    """Per-class ratios kappa_k = n_k / (pi_k * n_u) of a case-control design.

    kappa_k compares the number of labeled class-k rows against the expected
    number of class-k rows hiding in the unlabeled pool.  The ratios are
    study-design constants supplied by the user; the library never estimates
    the prevalences pi_k itself.
    """

    kappa: np.ndarray

    def __post_init__(self):
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if kappa.ndim != 1 or kappa.size < 1:
            raise DimensionMismatch("kappa must be a vector of length K >= 1")
        if not np.all(np.isfinite(kappa)) or np.any(kappa <= 0):
            raise ValueError("all case-control ratios must be positive and finite")
        object.__setattr__(self, "kappa", kappa)

    @property
    def K(self) -> int:
        return self.kappa.size


@dataclass(frozen=True)
class SingleTrainingProbs:
    """Per-class labeling probabilities pi_st_k of a single-training-set design.

    Each class-k sample keeps its label independently with probability
    pi_st_k and is otherwise reported as unlabeled (label 0).
    """

    pi_st: np.ndarray

    def __post_init__(self):
        pi = np.atleast_1d(np.asarray(self.pi_st, dtype=float))
        if pi.ndim != 1 or pi.size < 1:
            raise DimensionMismatch("pi_st must be a vector of length K >= 1")
        if not np.all((pi > 0) & (pi < 1)):
            raise ValueError("labeling probabilities must lie strictly inside (0, 1)")
        object.__setattr__(self, "pi_st", pi)

    @property
    def K(self) -> int:
        return self.pi_st.size

    def odds(self) -> np.ndarray:
        """pi/(1-pi), the case-control ratios this design is equivalent to."""
        return self.pi_st / (1.0 - self.pi_st)


def log_partition(u):
    """A(u) = log(1 + sum_k exp(u_k)), stabilized by shifting with max(0, max u).

    The implicit reference class contributes the leading 1.  Accepts (..., K);
    returns shape (...).
    """
    u = np.asarray(u, dtype=float)
    m = np.maximum(np.max(u, axis=-1), 0.0)
    return m + np.log(np.exp(-m) + np.sum(np.exp(u - m[..., None]), axis=-1))


def grad_log_partition(u):
    """Gradient of A: (grad A(u))_k = exp(u_k) / (1 + sum_j exp(u_j)).

    A softmax over the K non-reference classes; entries are in (0,1) and sum
    to strictly less than 1 (the deficit is the reference-class mass).
    """
    u = np.asarray(u, dtype=float)
    return np.exp(u - log_partition(u)[..., None])


def hess_log_partition(u):
    """Hessian of A: diag(s) - s s^T with s = grad_log_partition(u).

    Symmetric PSD with eigenvalues in [0, 1].  Returns (..., K, K).
    """
    s = grad_log_partition(u)
    h = -s[..., :, None] * s[..., None, :]
    idx = np.arange(s.shape[-1])
    h[..., idx, idx] += s
    return h

def pu_link_cc(u, ratios: CaseControlRatios):
    """Case-control PU link f(u)_k = u_k + log kappa_k - A(u).

    Maps class log-odds u to the log-odds of the *observed* labels z under
    case-control sampling.  f is the source of the loss's non-convexity.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != ratios.K:
        raise DimensionMismatch(f"u has K={u.shape[-1]} but ratios have K={ratios.K}")
    return u + np.log(ratios.kappa) - log_partition(u)[..., None]


def pu_link_grad_cc(u):
    """Jacobian of the case-control link: I_K - 1_K (grad A(u))^T.

    A rank-one perturbation of the identity; independent of the ratios since
    the log-kappa shift is constant.  Returns (..., K, K), row index = output
    coordinate.
    """
    u = np.asarray(u, dtype=float)
    s = grad_log_partition(u)
    return np.eye(u.shape[-1]) - s[..., None, :]


def pu_link_st(u, probs: SingleTrainingProbs):
    """Single-training PU link f~(u)_k = u_k + log(pi_k/(1-pi_k)) - A(u).

    Identical to pu_link_cc with ratios kappa_k = odds(pi_k); kept as its own
    entry point because the two scenarios parameterize designs differently.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != probs.K:
        raise DimensionMismatch(f"u has K={u.shape[-1]} but probs have K={probs.K}")
    return u + np.log(probs.odds()) - log_partition(u)[..., None]


def ordinal_u(x, theta):
    """Linear predictor of the reparameterized ordinal model.

    u(x, theta) = (x^T theta_{1:p} - theta_{p+1}, -theta_{p+2}, ..., -theta_{p+K}).
    ``x`` may be a single covariate vector (p,) or a matrix (n, p); ``theta``
    is the raw length-(p+K) vector (use OrdinalParams.theta).
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    p = x.shape[-1]
    K = theta.size - p
    if K < 1:
        raise DimensionMismatch(f"theta has length {theta.size} <= p={p}")
    first = x @ theta[:p] - theta[p]
    out = np.broadcast_to(-theta[p:], first.shape + (K,)).copy()
    out[..., 0] = first
    return out


def _cum_scores(u):
    """S_j = sum_{l<=j} u_l along the class axis."""
    return np.cumsum(np.asarray(u, dtype=float), axis=-1)


def ordinal_p(u):
    """Ordinal class probabilities p_j(u) as adjacent-sigmoid differences.

    With S_j = sum_{l<=j} u_l:  p_j = sigmoid(-S_{j+1}) - sigmoid(-S_j) for
    j < K and p_K = sigmoid(S_K).  This telescoped difference form keeps
    sum_j p_j + sigmoid(-u_1) = 1 to machine precision.  Values can be <= 0
    if u_j >= 0 for some j > 1 (invalid cut-point increments); callers
    validate.
    """
    S = _cum_scores(u)
    sig_neg = expit(-S)
    last = expit(S[..., -1:])
    if S.shape[-1] == 1:
        return last
    return np.concatenate([sig_neg[..., 1:] - sig_neg[..., :-1], last], axis=-1)


def ordinal_alpha(u):
    """alpha_j(u) = e^{S_j}/(1+e^{S_j})^2 for j <= K, plus alpha_{K+1} = 0.

    The derivative of the sigmoid at the cumulative scores.  The trailing
    explicit zero mirrors the (K+1)-term indexing used by the link Jacobian,
    removing off-by-one risk there.  Bounded by 1/4.
    """
    S = _cum_scores(u)
    a = expit(S) * expit(-S)
    return np.concatenate([a, np.zeros(a.shape[:-1] + (1,))], axis=-1)


def ordinal_log_p(u):
    """log p_j(u) in an overflow-safe product form.

    For j < K:  p_j = sigmoid(S_j) * sigmoid(-S_{j+1}) * (-expm1(u_{j+1})),
    so the log decomposes into three stable terms; for j = K it is
    log sigmoid(S_K).  Finite for any finite u with u_{j+1} < 0, even where
    the difference form of ordinal_p underflows to 0.
    """
    u = np.asarray(u, dtype=float)
    S = _cum_scores(u)
    last = log_expit(S[..., -1:])
    if u.shape[-1] == 1:
        return last
    with np.errstate(divide="ignore", invalid="ignore"):
        body = log_expit(S[..., :-1]) + log_expit(-S[..., 1:]) + np.log(-np.expm1(u[..., 1:]))
    return np.concatenate([body, last], axis=-1)


def ordinal_log_ratio(x, theta):
    """log r_j(x, theta) where r_j = P(y=j|x)/P(y=0|x) = p_j(u) (1+e^{u_1})."""
    u = ordinal_u(x, theta)
    return ordinal_log_p(u) + np.logaddexp(0.0, u[..., :1])


def ordinal_ratio(x, theta):
    """Class-to-reference probability ratios r_j(x, theta), all positive."""
    return np.exp(ordinal_log_ratio(x, theta))


def ordinal_link_cc(u, ratios: CaseControlRatios):
    """Ordinal case-control link f_on(u)_j = log kappa_j + log p_j(u).

    Equals pu_link_cc(log r, kappa) evaluated at the matching (x, theta),
    since A(log r) = log(1 + e^{u_1}) cancels the ratio normalization.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != ratios.K:
        raise DimensionMismatch(f"u has K={u.shape[-1]} but ratios have K={ratios.K}")
    if u.shape[-1] > 1 and np.any(u[..., 1:] >= 0):
        raise NonPositiveProbability(
            "ordinal predictor has a non-negative coordinate past the first; "
            "some p_j(u) <= 0"
        )
    return np.log(ratios.kappa) + ordinal_log_p(u)


def ordinal_link_grad(u):
    """Jacobian of u -> log p(u): entries (alpha_j 1{k<=j} - alpha_{j+1} 1{k<=j+1}) / p_j.

    Shared by the case-control ordinal link (whose log-kappa shift is
    constant) and, after adding the sigmoid(u_1) rank-one term, by the plain
    log-ratio map.  Returns (..., K, K) with row index j = output coordinate.
    """
    u = np.asarray(u, dtype=float)
    K = u.shape[-1]
    alpha = ordinal_alpha(u)
    p = np.exp(ordinal_log_p(u))
    lower = np.tril(np.ones((K, K)))
    lower_wide = np.tril(np.ones((K, K)), 1)
    num = alpha[..., :K, None] * lower - alpha[..., 1:, None] * lower_wide
    return num / p[..., :, None]
