"""Tests for the curvature bound functions and the region diagnostics.

Each bound is checked against the independent scalar transcriptions in
``oracles.py`` on random inputs, against hand-computed constants at
degenerate inputs, and through the structural facts the downstream analysis
leans on (positivity of h at the recommended radius, smallness of the
ordinal radius bound).
"""

import numpy as np
import pytest

import oracles as orc
from pulogit.core_math import CaseControlRatios
from pulogit.errors import DimensionMismatch, InvalidConfig, InvalidRegion
from pulogit.models import MultinomialParams, OrdinalParams
from pulogit.theory_diag import (
    TheoryInputs,
    h_mn,
    h_on,
    r0_bound_mn,
    r0_bound_on,
    region_report,
)


def random_inputs(rng, K=None, with_r_star=False):
    K = K if K is not None else int(rng.integers(1, 5))
    return TheoryInputs(
        C_x=float(rng.uniform(0.2, 2.0)),
        R_star=float(rng.uniform(0.0, 1.5)),
        K=K,
        ratios=CaseControlRatios(rng.uniform(0.3, 3.0, size=K)),
        r_star=float(rng.uniform(0.3, 2.0)) if with_r_star else None,
    )


class TestInputValidation:
    def test_contract(self):
        ratios = CaseControlRatios(np.ones(2))
        with pytest.raises(InvalidConfig):
            TheoryInputs(C_x=0.0, R_star=1.0, K=2, ratios=ratios)
        with pytest.raises(DimensionMismatch):
            TheoryInputs(C_x=1.0, R_star=1.0, K=3, ratios=ratios)
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=ratios)
        with pytest.raises(InvalidRegion):
            h_mn(-0.1, ti)
        with pytest.raises(InvalidConfig):
            h_on(0.1, 0.1, ti)  # ordinal calls need r_star


class TestMultinomialBounds:
    def test_h_value_at_origin(self):
        """K=2, unit ratios, R = R* = 0: 1 / ((1+1)^2 (1+2)^3) = 1/108."""
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=CaseControlRatios(np.ones(2)))
        assert h_mn(0.0, ti) == pytest.approx(1.0 / 108.0, abs=1e-16)

    def test_radius_bound_value(self):
        """Same inputs: 1 / (4 * 4 * 3.2^3) = 2^-9 / 1.024 exactly."""
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=CaseControlRatios(np.ones(2)))
        assert r0_bound_mn(ti) == pytest.approx(0.0019073486328125, abs=1e-18)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(70)
        for _ in range(25):
            ti = random_inputs(rng)
            R = float(rng.uniform(0.0, 1.0))
            ours = h_mn(R, ti)
            ref = orc.h_mn_scalar(R, ti.C_x, ti.R_star, ti.K, ti.ratios.kappa)
            assert abs(ours - ref) < 1e-10 * max(1.0, abs(ref))
            ours_r = r0_bound_mn(ti)
            ref_r = orc.r0_bound_mn_scalar(ti.C_x, ti.R_star, ti.K, ti.ratios.kappa)
            assert abs(ours_r - ref_r) < 1e-10 * max(1.0, abs(ref_r))

    def test_reconstructed_curvature_term_is_positive(self):
        """h(R) + 4 C_x R recovers the pure product term, which is positive
        and decreasing in R."""
        rng = np.random.default_rng(71)
        for _ in range(50):
            ti = random_inputs(rng)
            radii = np.sort(rng.uniform(0.0, 2.0, size=5))
            kmin, kmax = ti.ratios.kappa.min(), ti.ratios.kappa.max()
            vals = []
            for R in radii:
                term = h_mn(float(R), ti) + 4.0 * ti.C_x * R
                e = np.exp(ti.C_x * (R + ti.R_star))
                product = kmin / (e * (1 + kmax) ** 2 * (1 + ti.K * e) ** 3)
                assert abs(term - product) < 1e-12
                vals.append(term)
            assert all(v > 0 for v in vals)
            assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_h_positive_at_recommended_radius(self):
        """The radius bound is constructed so the curvature stays positive."""
        rng = np.random.default_rng(72)
        for _ in range(1000):
            ti = random_inputs(rng)
            assert h_mn(r0_bound_mn(ti), ti) > 0.0


class TestOrdinalBounds:
    def test_h_value_at_origin(self):
        """R = R* = 0, r* - r = 1: max{(1+1)^2 / 1, 1+1} = 4."""
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=CaseControlRatios(np.ones(2)),
                          r_star=1.0)
        assert h_on(0.0, 0.0, ti) == pytest.approx(4.0, abs=1e-16)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(73)
        for _ in range(25):
            ti = random_inputs(rng, with_r_star=True)
            R = float(rng.uniform(0.0, 1.0))
            r = float(rng.uniform(0.0, 0.9 * ti.r_star))
            ours = h_on(R, r, ti)
            ref = orc.h_on_scalar(R, r, ti.C_x, ti.R_star, ti.r_star)
            assert abs(ours - ref) < 1e-10 * max(1.0, abs(ref))
            r0 = float(rng.uniform(0.05, 0.95) * ti.r_star)
            ours_r = r0_bound_on(r0, ti)
            ref_r = orc.r0_bound_on_scalar(r0, ti.C_x, ti.R_star, ti.r_star, ti.K,
                                           ti.ratios.kappa)
            assert abs(ours_r - ref_r) < 1e-10 * max(1.0, abs(ref_r))

    def test_h_at_least_one_and_radius_bound_small(self):
        """h_on >= 1 everywhere admissible; for K >= 2 the regression radius
        bound is below 0.01."""
        rng = np.random.default_rng(74)
        for _ in range(1000):
            ti = random_inputs(rng, K=int(rng.integers(2, 5)), with_r_star=True)
            R = float(rng.uniform(0.0, 1.0))
            r = float(rng.uniform(0.0, 0.9 * ti.r_star))
            assert h_on(R, r, ti) >= 1.0
            r0 = float(rng.uniform(0.05, 0.95) * ti.r_star)
            assert 0.0 < r0_bound_on(r0, ti) < 0.01

    def test_region_validation(self):
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=1, ratios=CaseControlRatios(np.ones(1)),
                          r_star=0.5)
        with pytest.raises(InvalidRegion):
            h_on(0.1, 0.6, ti)
        with pytest.raises(InvalidRegion):
            r0_bound_on(0.5, ti)


class TestRegionReport:
    def test_multinomial_distance_is_max_column_l1(self):
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=CaseControlRatios(np.ones(2)))
        truth = MultinomialParams(np.zeros((3, 2)), np.zeros(2))
        delta = np.array([[1e-4, 0.0], [-2e-4, 1e-4], [0.0, -1e-4]])
        estimate = MultinomialParams(delta, np.zeros(2))
        rep = region_report(estimate, truth, ti)
        assert rep.model == "multinomial"
        assert rep.distances[0] == pytest.approx(3e-4, abs=1e-18)
        assert rep.bounds[0] == pytest.approx(r0_bound_mn(ti), abs=1e-18)
        assert rep.inside == (rep.distances[0] <= rep.bounds[0])

    def test_multinomial_outside_when_distance_exceeds_bound(self):
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=CaseControlRatios(np.ones(2)))
        truth = MultinomialParams(np.zeros((2, 2)), np.zeros(2))
        estimate = MultinomialParams(np.full((2, 2), 1.0), np.zeros(2))
        assert not region_report(estimate, truth, ti).inside

    def test_ordinal_triple(self):
        """Distances are (regression l1, offset l1, worst increment dip)."""
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=2, ratios=CaseControlRatios(np.ones(2)),
                          r_star=0.8)
        truth = OrdinalParams(np.array([0.5, -0.5, 0.0, 0.8]), p=2)
        estimate = OrdinalParams(np.array([0.5 + 1e-5, -0.5, 1e-5, 0.8 - 2e-5]), p=2)
        rep = region_report(estimate, truth, ti, r0=0.4)
        assert rep.model == "ordinal"
        assert rep.distances[0] == pytest.approx(1e-5, rel=1e-9)
        assert rep.distances[1] == pytest.approx(3e-5, rel=1e-9)
        assert rep.distances[2] == pytest.approx(-2e-5, rel=1e-9)
        assert rep.bounds[2] == -0.4
        expected_inside = (
            rep.distances[0] <= rep.bounds[0]
            and rep.distances[1] <= rep.bounds[0]
            and rep.distances[2] >= -0.4
        )
        assert rep.inside == expected_inside

    def test_mixed_models_rejected(self):
        ti = TheoryInputs(C_x=1.0, R_star=0.0, K=1, ratios=CaseControlRatios(np.ones(1)))
        with pytest.raises(DimensionMismatch):
            region_report(
                MultinomialParams(np.zeros((2, 1)), np.zeros(1)),
                OrdinalParams(np.array([0.0, 0.0, 0.1]), p=1),
                ti,
            )
