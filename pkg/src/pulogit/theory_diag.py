"""Computable curvature functions and feasible-region radius bounds.

These quantities never gate optimization; they are advisory diagnostics
evaluated on fitted or true parameters.  Only fully specified formulas are
implemented — rate constants that the analysis leaves abstract are not
represented anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_math import CaseControlRatios
from .errors import DimensionMismatch, InvalidConfig, InvalidRegion
from .models import MultinomialParams, OrdinalParams

__all__ = [
    "TheoryInputs",
    "RegionReport",
    "h_mn",
    "r0_bound_mn",
    "h_on",
    "r0_bound_on",
    "region_report",
]


@dataclass(frozen=True)
class TheoryInputs:
    """Constants the curvature bounds depend on.

    C_x bounds the covariate sup-norm; R_star measures the true parameter
    magnitude (max column l1 norm of Theta for the multinomial model, max of
    the regression-part and offset-part l1 norms for the ordinal model);
    r_star is the smallest true cut-point increment (ordinal only).
    """

    C_x: float
    R_star: float
    K: int
    ratios: CaseControlRatios
    r_star: float | None = None

    def __post_init__(self):
        if self.C_x <= 0:
            raise InvalidConfig("C_x must be positive")
        if self.R_star < 0:
            raise InvalidConfig("R_star must be nonnegative")
        if self.K != self.ratios.K:
            raise DimensionMismatch("K does not match the number of ratios")
        if self.r_star is not None and self.r_star <= 0:
            raise InvalidConfig("r_star must be positive")


def h_mn(R: float, ti: TheoryInputs) -> float:
    """Curvature lower-bound function for the multinomial model; may be < 0.

    h(R) = e^{-C_x(R+R*)} min_j kappa_j
           / [(1 + max_j kappa_j)^2 (1 + K e^{C_x(R+R*)})^3]  -  4 C_x R.
    """
    if R < 0:
        raise InvalidRegion("radius must be nonnegative")
    kmin = float(np.min(ti.ratios.kappa))
    kmax = float(np.max(ti.ratios.kappa))
    e = np.exp(ti.C_x * (R + ti.R_star))
    return float(kmin / (e * (1 + kmax) ** 2 * (1 + ti.K * e) ** 3) - 4 * ti.C_x * R)


def r0_bound_mn(ti: TheoryInputs) -> float:
    """Largest admissible feasible-region radius for the multinomial model.

    min_j kappa_j e^{-C_x R*} / [4 C_x (1 + max_j kappa_j)^2 (1 + 1.1 K e^{C_x R*})^3].
    """
    kmin = float(np.min(ti.ratios.kappa))
    kmax = float(np.max(ti.ratios.kappa))
    e = np.exp(ti.C_x * ti.R_star)
    return float(kmin / (e * 4 * ti.C_x * (1 + kmax) ** 2 * (1 + 1.1 * ti.K * e) ** 3))


def h_on(R: float, r: float, ti: TheoryInputs) -> float:
    """Curvature scale for the ordinal model; always >= 1 on admissible input.

    max{ (1+e^{(C_x+1)(R*+R)})^2 / ((r*-r) e^{(C_x+1)(R*+R)}),
         1+e^{(C_x+1)(R*+R)} }.
    """
    if ti.r_star is None:
        raise InvalidConfig("r_star is required for ordinal diagnostics")
    if R < 0 or r < 0:
        raise InvalidRegion("radii must be nonnegative")
    if r >= ti.r_star:
        raise InvalidRegion(f"r = {r} must be below r_star = {ti.r_star}")
    e = np.exp((ti.C_x + 1) * (ti.R_star + R))
    return float(max((1 + e) ** 2 / ((ti.r_star - r) * e), 1 + e))


def r0_bound_on(r0: float, ti: TheoryInputs) -> float:
    """Largest admissible regression-part radius for the ordinal model.

    min{80, min_j kappa_j} (1+e^{(C_x+1)(R*+0.01)})^{-6}
      / [512 (C_x+1) K^3 (1 + 2/(r*-r0))^3 (2 + 2/(r*-r0))].
    """
    if ti.r_star is None:
        raise InvalidConfig("r_star is required for ordinal diagnostics")
    if not 0 < r0 < ti.r_star:
        raise InvalidRegion(f"need 0 < r0 < r_star = {ti.r_star}")
    kmin = float(np.min(ti.ratios.kappa))
    e = np.exp((ti.C_x + 1) * (ti.R_star + 0.01))
    q = 2.0 / (ti.r_star - r0)
    denom = 512 * (ti.C_x + 1) * ti.K**3 * (1 + q) ** 3 * (2 + q)
    return float(min(80.0, kmin) * (1 + e) ** -6 / denom)


@dataclass(frozen=True)
class RegionReport:
    """Distances of an estimate from the truth vs the admissible radii.

    For the multinomial model `distances` holds the max column l1 norm of
    the difference and `bounds` the radius limit.  For the ordinal model the
    triple is (regression-part l1, offset-part l1, smallest increment
    perturbation) against (R0, R0, -r0).
    """

    model: str
    distances: tuple
    bounds: tuple
    inside: bool


def region_report(estimate, truth, ti: TheoryInputs, r0: float | None = None) -> RegionReport:
    """Check whether estimate - truth lies in the region the error bounds cover.

    For the ordinal model `r0` fixes the increment-perturbation allowance
    (default r_star / 2, the midpoint of the admissible interval).
    """
    if isinstance(estimate, MultinomialParams) and isinstance(truth, MultinomialParams):
        if estimate.Theta.shape != truth.Theta.shape:
            raise DimensionMismatch("estimate and truth have different shapes")
        delta = estimate.Theta - truth.Theta
        dist = float(np.max(np.abs(delta).sum(axis=0))) if delta.size else 0.0
        bound = r0_bound_mn(ti)
        return RegionReport("multinomial", (dist,), (bound,), dist <= bound)
    if isinstance(estimate, OrdinalParams) and isinstance(truth, OrdinalParams):
        if estimate.theta.shape != truth.theta.shape or estimate.p != truth.p:
            raise DimensionMismatch("estimate and truth have different shapes")
        if ti.r_star is None:
            raise InvalidConfig("r_star is required for ordinal diagnostics")
        if r0 is None:
            r0 = 0.5 * ti.r_star
        p = truth.p
        delta = estimate.theta - truth.theta
        d_reg = float(np.abs(delta[:p]).sum())
        d_off = float(np.abs(delta[p:]).sum())
        d_inc = float(delta[p + 1:].min()) if truth.K >= 2 else 0.0
        R0 = r0_bound_on(r0, ti)
        inside = d_reg <= R0 and d_off <= R0 and d_inc >= -r0
        return RegionReport("ordinal", (d_reg, d_off, d_inc), (R0, R0, -r0), inside)
    raise DimensionMismatch("estimate and truth must be params of the same model")
