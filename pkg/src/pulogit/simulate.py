"""Synthetic data generation: sparse truths, Gaussian covariates, label
sampling, case-control subsampling, and single-training-set masking.

Randomness runs through counter-based Philox streams split off one seed, one
stream per pipeline component, so replicates are reproducible and independent
components never share state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from .core_math import CaseControlRatios, SingleTrainingProbs
from .errors import InvalidConfig, RejectionStall
from .models import (
    MultinomialParams,
    OrdinalParams,
    PUDataset,
    mn_predict_proba,
    on_predict_proba,
    ordinal_reparam,
)

__all__ = [
    "SimConfig",
    "gen_mn_truth",
    "gen_on_truth",
    "gen_covariates",
    "sample_labels",
    "case_control_sample",
    "single_training_mask",
    "single_training_sample",
]

_STREAMS = ("truth", "covariates", "labels", "masking", "auxiliary")
_MIN_PREVALENCE = 1e-4


@dataclass(frozen=True)
class SimConfig:
    """Scenario description for one synthetic dataset.

    Exactly one scenario applies: case-control when pi_st is None (with
    n_unlabeled + sum(n_labeled) = n, defaults n/2 and n/(2K) per class),
    single-training otherwise.  intercept_target is "balanced", a length-K
    vector of positive-class prevalences, or a single total positive
    prevalence in (0, 1).
    """

    n: int
    p: int
    K: int
    s: int
    covariate_sd: float = 1.0
    nonzero_range: tuple = (0.5, 1.0)
    seed: int = 0
    n_unlabeled: int | None = None
    n_labeled: tuple | None = None
    pi_st: Sequence[float] | None = None
    intercept_target: object = "balanced"

    def __post_init__(self):
        if min(self.n, self.p, self.K) < 1 or self.s < 0:
            raise InvalidConfig("need n, p, K >= 1 and s >= 0")
        if self.s > self.p:
            raise InvalidConfig("cannot place more active groups than there are covariates")
        lo, hi = self.nonzero_range
        if not 0 < lo <= hi:
            raise InvalidConfig("nonzero_range must be positive and ordered")
        if self.covariate_sd <= 0:
            raise InvalidConfig("covariate_sd must be positive")
        if self.pi_st is not None:
            object.__setattr__(self, "pi_st", tuple(float(v) for v in self.pi_st))
            if len(self.pi_st) != self.K:
                raise InvalidConfig("pi_st must have one entry per positive class")
        else:
            if self.n_labeled is None:
                n_lab = (self.n // (2 * self.K),) * self.K
            else:
                n_lab = tuple(int(v) for v in self.n_labeled)
            # default unlabeled count absorbs any rounding remainder
            n_u = self.n - sum(n_lab) if self.n_unlabeled is None else self.n_unlabeled
            if len(n_lab) != self.K or min(n_lab) < 1 or n_u < 1:
                raise InvalidConfig("need n_unlabeled >= 1 and every class count >= 1")
            if n_u + sum(n_lab) != self.n:
                raise InvalidConfig(
                    f"n_unlabeled + sum(n_labeled) = {n_u + sum(n_lab)} != n = {self.n}"
                )
            object.__setattr__(self, "n_unlabeled", n_u)
            object.__setattr__(self, "n_labeled", n_lab)
        self._target_positives()  # validate eagerly

    def _target_positives(self) -> np.ndarray | float:
        """Per-class positive prevalences, or a scalar total, at x = 0."""
        t = self.intercept_target
        if isinstance(t, str):
            if t != "balanced":
                raise InvalidConfig(f"unknown intercept target {t!r}")
            return np.full(self.K, 1.0 / (self.K + 1))
        if np.ndim(t) == 0:
            t = float(t)
            if not 0 < t < 1:
                raise InvalidConfig("total positive prevalence must lie in (0, 1)")
            return t
        t = np.asarray(t, dtype=float)
        if t.shape != (self.K,) or np.any(t <= 0) or t.sum() >= 1:
            raise InvalidConfig("prevalence vector needs K positive entries summing below 1")
        return t

    def streams(self) -> dict:
        children = np.random.SeedSequence(self.seed).spawn(len(_STREAMS))
        return {
            name: np.random.Generator(np.random.Philox(seq))
            for name, seq in zip(_STREAMS, children)
        }


def _draw_nonzeros(rng, shape, lo, hi):
    signs = rng.choice([-1.0, 1.0], size=shape)
    return signs * rng.uniform(lo, hi, size=shape)


def _mn_intercepts(cfg: SimConfig) -> np.ndarray:
    if cfg.intercept_target == "balanced":
        return np.zeros(cfg.K)  # equal class odds by symmetry
    target = cfg._target_positives()
    if np.ndim(target) == 1:
        return np.log(target / (1.0 - target.sum()))
    # scalar total positive prevalence: shift equal intercepts until the
    # intercept-only model hits it
    t = float(target)

    def gap(delta):
        e = cfg.K * np.exp(delta)
        return e / (1.0 + e) - t

    return np.full(cfg.K, brentq(gap, -60.0, 60.0, xtol=1e-13))


def _on_cutpoints(cfg: SimConfig) -> np.ndarray:
    target = cfg._target_positives()
    if np.ndim(target) == 1:
        cum0 = 1.0 - target.sum() + np.concatenate([[0.0], np.cumsum(target[:-1])])
        return logit(cum0)
    t = float(target)
    base = logit(np.arange(1, cfg.K + 1) / (cfg.K + 1))

    def gap(delta):
        # shifting every cut-point down raises the positive prevalence
        return (1.0 - expit(base[0] - delta)) - t

    return base - brentq(gap, -60.0, 60.0, xtol=1e-13)


def gen_mn_truth(cfg: SimConfig) -> MultinomialParams:
    """Sparse multinomial truth: s active rows, nonzeros uniform on ±[lo, hi]."""
    rng = cfg.streams()["truth"]
    lo, hi = cfg.nonzero_range
    Theta = np.zeros((cfg.p, cfg.K))
    if cfg.s:
        support = np.sort(rng.choice(cfg.p, size=cfg.s, replace=False))
        Theta[support] = _draw_nonzeros(rng, (cfg.s, cfg.K), lo, hi)
    return MultinomialParams(Theta, _mn_intercepts(cfg))


def gen_on_truth(cfg: SimConfig) -> OrdinalParams:
    """Sparse ordinal truth: s active regression entries plus target cut-points."""
    rng = cfg.streams()["truth"]
    lo, hi = cfg.nonzero_range
    beta = np.zeros(cfg.p)
    if cfg.s:
        support = np.sort(rng.choice(cfg.p, size=cfg.s, replace=False))
        beta[support] = _draw_nonzeros(rng, cfg.s, lo, hi)
    return ordinal_reparam(beta, _on_cutpoints(cfg))


def gen_covariates(cfg: SimConfig, rng=None) -> np.ndarray:
    """n x p matrix of i.i.d. N(0, covariate_sd^2) entries."""
    if rng is None:
        rng = cfg.streams()["covariates"]
    return rng.normal(0.0, cfg.covariate_sd, size=(cfg.n, cfg.p))


def _proba(truth, X):
    if isinstance(truth, MultinomialParams):
        return mn_predict_proba(truth, X)
    return on_predict_proba(truth, X)


def sample_labels(truth, X, rng=0) -> np.ndarray:
    """Draw y_i from the model's categorical distribution at each row of X."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng)))
    proba = _proba(truth, np.asarray(X, dtype=float))
    cum = np.cumsum(proba, axis=-1)
    u = rng.random(cum.shape[0])
    y = (u[:, None] > cum).sum(axis=1)
    return np.minimum(y, proba.shape[1] - 1)


def _prevalence_estimate(truth, cfg: SimConfig, rng) -> np.ndarray:
    """Monte Carlo class prevalences under the truth from a large fresh draw.

    Labels depend on x only through the active covariates, so the draw
    skips columns the truth never touches (iid columns are exchangeable).
    """
    m = int(max(1e5, 100 * cfg.n))
    if isinstance(truth, MultinomialParams):
        active = np.flatnonzero(np.any(truth.Theta != 0.0, axis=1))
        reduced = MultinomialParams(truth.Theta[active], truth.b)
    else:
        active = np.flatnonzero(truth.beta != 0.0)
        reduced = OrdinalParams(
            np.concatenate([truth.theta[active], truth.theta[truth.p:]]), active.size
        )
    chunk = min(1_000_000, max(1, int(2e6) // max(1, active.size)))
    counts = np.zeros(cfg.K + 1, dtype=np.int64)
    left = m
    while left > 0:
        take = min(chunk, left)
        X = rng.normal(0.0, cfg.covariate_sd, size=(take, active.size))
        y = sample_labels(reduced, X, rng)
        counts += np.bincount(y, minlength=cfg.K + 1)
        left -= take
    return counts / m


def case_control_sample(truth, cfg: SimConfig) -> PUDataset:
    """Draw a case-control PU dataset under the truth.

    Unlabeled rows come straight from the population (hidden y retained);
    class-j rows are kept from population draws by rejection until n_j are
    collected.  The ratios kappa_j = n_j / (pi_j n_u) use prevalences
    estimated from a large auxiliary draw.
    """
    if cfg.pi_st is not None:
        raise InvalidConfig("case_control_sample needs a case-control SimConfig")
    streams = cfg.streams()
    prev = _prevalence_estimate(truth, cfg, streams["auxiliary"])
    if np.any(prev[1:] < _MIN_PREVALENCE):
        worst = int(np.argmin(prev[1:])) + 1
        raise RejectionStall(
            f"class {worst} has prevalence {prev[worst]:.2e}; "
            "labeled sampling would stall (check the intercepts)"
        )
    n_u = cfg.n_unlabeled
    n_lab = np.asarray(cfg.n_labeled)
    kappa = n_lab / (prev[1:] * n_u)

    rng_x, rng_y = streams["covariates"], streams["labels"]
    X_unlab = rng_x.normal(0.0, cfg.covariate_sd, size=(n_u, cfg.p))
    y_unlab = sample_labels(truth, X_unlab, rng_y)

    X_parts = [X_unlab]
    y_parts = [y_unlab]
    z_parts = [np.zeros(n_u, dtype=int)]
    for j in range(1, cfg.K + 1):
        need = int(n_lab[j - 1])
        got = []
        budget = 1000 * int(np.ceil(need / prev[j]))
        while need > 0 and budget > 0:
            take = min(int(np.ceil(1.2 * need / prev[j])) + 16, budget, 200_000)
            X_try = rng_x.normal(0.0, cfg.covariate_sd, size=(take, cfg.p))
            y_try = sample_labels(truth, X_try, rng_y)
            hit = X_try[y_try == j]
            if hit.shape[0] > need:
                hit = hit[:need]
            got.append(hit)
            need -= hit.shape[0]
            budget -= take
        if need > 0:
            raise RejectionStall(f"could not collect class-{j} rows within budget")
        X_parts.append(np.concatenate(got))
        y_parts.append(np.full(n_lab[j - 1], j))
        z_parts.append(np.full(n_lab[j - 1], j))

    return PUDataset(
        np.concatenate(X_parts),
        np.concatenate(z_parts),
        CaseControlRatios(kappa),
        y=np.concatenate(y_parts),
    )


def single_training_mask(y, probs: SingleTrainingProbs, seed=0) -> np.ndarray:
    """Keep each positive label with its class probability, else set it to 0."""
    y = np.asarray(y, dtype=int)
    if not isinstance(seed, np.random.Generator):
        seed = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    keep_prob = np.concatenate([[0.0], probs.pi_st])
    keep = seed.random(y.shape[0]) < keep_prob[y]
    return np.where(keep, y, 0)


def single_training_sample(truth, cfg: SimConfig) -> PUDataset:
    """Draw a single-training-set PU dataset: population rows, masked labels."""
    if cfg.pi_st is None:
        raise InvalidConfig("single_training_sample needs pi_st set")
    streams = cfg.streams()
    scenario = SingleTrainingProbs(np.asarray(cfg.pi_st))
    X = gen_covariates(cfg, rng=streams["covariates"])
    y = sample_labels(truth, X, streams["labels"])
    z = single_training_mask(y, scenario, streams["masking"])
    return PUDataset(X, z, scenario, y=y)
