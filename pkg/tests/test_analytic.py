import math

import numpy as np
import pytest
from scipy.integrate import quad

from ldbranch._numerics import BracketError
from ldbranch.analytic import (
    PopulationIndex,
    clone_count_mean,
    clone_mgf,
    clone_mgf_domain,
    clone_pmf,
    clone_survival,
    conditional_clone_mean,
    conditional_clone_mgf,
    decay_coefficient,
    mean_population,
    solve_targets,
    subcritical_laplace,
    variance_population,
)
from ldbranch.params import (
    ModelParams,
    MutationLaw,
    ResistantRates,
    ScenarioConfig,
    SensitiveRates,
    SubThreshold,
    time_scale,
)

FIG4 = ModelParams(
    sensitive=SensitiveRates(0.3, 0.5),   # lambda0 = -0.2, r = 0.2
    resistant=ResistantRates(0.4, 0.2),   # lambda1 = 0.2
    mutation=MutationLaw(0.1, 0.5),
)
FIG1 = ModelParams(
    sensitive=SensitiveRates(0.0, 2.0),   # r = 2
    resistant=ResistantRates(5.0, 3.0),   # lambda1 = 2
    mutation=MutationLaw(0.1, 0.5),
)


class TestMeans:
    def test_sensitive_initial_condition(self):
        assert mean_population(PopulationIndex.SENSITIVE, 0.0, FIG4, 1000) == 1000

    def test_acquired_starts_empty(self):
        assert mean_population(PopulationIndex.ACQUIRED, 0.0, FIG4, 1000) == 0.0

    def test_sensitive_exponential_decay(self):
        # 1000 * e^{-0.2*5} = 1000/e
        got = mean_population(PopulationIndex.SENSITIVE, 5.0, FIG4, 1000)
        np.testing.assert_allclose(got, 367.8794411714423, rtol=1e-12)

    def test_preexisting_growth_uses_concrete_count(self):
        params = ModelParams(
            FIG4.sensitive, FIG4.resistant, FIG4.mutation, SubThreshold(count=5)
        )
        got = mean_population(PopulationIndex.PRE_EXISTING, 3.0, params, 1000)
        np.testing.assert_allclose(got, 5 * math.exp(0.6), rtol=1e-12)


class TestVariances:
    def test_deterministic_start(self):
        assert variance_population(PopulationIndex.SENSITIVE, 0.0, FIG4, 1000) == 0.0
        assert (
            variance_population(PopulationIndex.PRE_EXISTING, 0.0, FIG4, 1000) == 0.0
        )

    def test_sensitive_value(self):
        # ((r0+d0)/r) n e^{-rt} (1-e^{-rt}) = 4000 e^{-1} (1-e^{-1})
        got = variance_population(PopulationIndex.SENSITIVE, 5.0, FIG4, 1000)
        np.testing.assert_allclose(got, 930.1766317393322, rtol=1e-12)

    def test_acquired_variance_rejected(self):
        with pytest.raises(ValueError, match="acquired"):
            variance_population(PopulationIndex.ACQUIRED, 1.0, FIG4, 1000)


class TestCloneMgf:
    res = ResistantRates(0.4, 0.2)

    def test_normalization(self):
        assert clone_mgf(0.0, 5.0, self.res) == 1.0

    def test_far_left_limit_is_extinction_mass(self):
        expected = clone_pmf(0, 5.0, self.res)
        np.testing.assert_allclose(
            clone_mgf(-40.0, 5.0, self.res), expected, atol=1e-9
        )

    def test_domain_boundary_is_infinite(self):
        bar = clone_mgf_domain(5.0, self.res)
        assert clone_mgf(bar, 5.0, self.res) == math.inf
        assert clone_mgf(bar + 0.1, 5.0, self.res) == math.inf
        assert math.isfinite(clone_mgf(bar - 1e-6, 5.0, self.res))

    def test_derivative_at_zero_is_mean(self):
        t = 5.0
        h = 1e-7
        deriv = (clone_mgf(h, t, self.res) - clone_mgf(-h, t, self.res)) / (2 * h)
        np.testing.assert_allclose(deriv, math.exp(0.2 * t), rtol=1e-6)


class TestCloneMgfDomain:
    res = ResistantRates(0.4, 0.2)

    def test_reference_value(self):
        # log((0.4 e - 0.2)/(0.4 e - 0.4)) at lambda1*t = 1
        np.testing.assert_allclose(
            clone_mgf_domain(5.0, self.res), 0.2554080904718867, rtol=1e-12
        )

    def test_positive_and_decreasing_to_zero(self):
        values = [clone_mgf_domain(t, self.res) for t in (1.0, 5.0, 20.0, 80.0)]
        assert all(v > 0 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-5

    def test_pure_birth_reduction(self):
        pure = ResistantRates(0.4, 0.0)
        t = 5.0
        grow = math.exp(0.4 * t)
        np.testing.assert_allclose(
            clone_mgf_domain(t, pure), math.log(grow / (grow - 1.0)), rtol=1e-12
        )


class TestClonePmf:
    res = ResistantRates(0.4, 0.2)

    def test_normalization_adaptive(self):
        t = 5.0
        total, j = 0.0, 0
        while total <= 1.0 - 1e-8:
            total += clone_pmf(j, t, self.res)
            j += 1
            assert j < 10**6
        assert total <= 1.0 + 1e-12

    def test_extinction_mass_value(self):
        np.testing.assert_allclose(
            clone_pmf(0, 5.0, self.res), 0.3873001632197179, rtol=1e-12
        )

    def test_pure_birth_never_dies(self):
        assert clone_pmf(0, 5.0, ResistantRates(0.4, 0.0)) == 0.0

    def test_pmf_reproduces_mgf(self):
        # independent identity: sum_j e^{theta j} pmf(j) = mgf(theta)
        t, theta = 4.0, -0.7
        total = sum(
            math.exp(theta * j) * clone_pmf(j, t, self.res) for j in range(4000)
        )
        np.testing.assert_allclose(total, clone_mgf(theta, t, self.res), rtol=1e-10)

    def test_survival_is_one_minus_extinction(self):
        t = 7.0
        np.testing.assert_allclose(
            clone_survival(t, self.res), 1.0 - clone_pmf(0, t, self.res), rtol=1e-12
        )


class TestSubcriticalLaplace:
    sens = SensitiveRates(0.3, 0.5)

    def test_normalization(self):
        assert subcritical_laplace(0.0, 5.0, self.sens) == 1.0

    def test_decay_coefficient_value(self):
        np.testing.assert_allclose(
            decay_coefficient(0.01, self.sens), 0.009803841472016843, rtol=1e-12
        )

    def test_decay_coefficient_slope_one_at_zero(self):
        theta = 1e-6
        np.testing.assert_allclose(
            decay_coefficient(theta, self.sens) / theta, 1.0, atol=1e-4
        )

    def test_transform_decreasing_in_theta(self):
        t = 3.0
        vals = [subcritical_laplace(th, t, self.sens) for th in (0.1, 0.5, 1.0, 3.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert all(0.0 < v < 1.0 for v in vals)


class TestSolveTargets:
    def test_bracket_gap_formula(self):
        # (1/lambda1) log(1 + mu n^{1-alpha} / ((lambda1+r) a n)) at the
        # n=1e6 configuration with lambda1 = r = 2
        params = ModelParams(
            SensitiveRates(0.0, 2.0), ResistantRates(5.0, 3.0), MutationLaw(0.1, 0.5)
        )
        scenario = ScenarioConfig(n=10**6, a=1.0, y=1.0)
        tt = solve_targets(params, scenario)
        gap = tt.u_upper - tt.u_lower
        expected = math.log1p(0.1 * 1000.0 / (4.0 * 10**6)) / 2.0
        # gap is a difference of two ~5.3 logs: absolute error ~1 ulp of those
        np.testing.assert_allclose(gap, expected, rtol=0, atol=1e-14)
        assert gap == pytest.approx(1.25e-5, rel=2e-5)

    def test_no_mutant_source_rejected(self):
        # mu = 0 and X = 0 bypasses validate on purpose: zeta would be inf
        params = ModelParams(
            SensitiveRates(0.3, 0.5), ResistantRates(0.4, 0.2), MutationLaw(0.0, 0.5)
        )
        with pytest.raises(BracketError):
            solve_targets(params, ScenarioConfig(n=1000))

    def test_root_residual_contract(self):
        scenario = ScenarioConfig(n=1000, a=1.0, y=1.0)
        tt = solve_targets(FIG4, scenario)
        lam1, lam0 = FIG4.lambda1, FIG4.lambda0
        scale = FIG4.mu / (lam1 + FIG4.r) * scenario.n ** 0.5
        resid = scale * (math.exp(lam1 * tt.zeta) - math.exp(lam0 * tt.zeta)) - 1000.0
        assert abs(resid) <= 1e-9 * 1000.0
        assert tt.u_lower <= tt.zeta <= tt.u_upper

    def test_zeta_increasing_in_a(self):
        zetas = [
            solve_targets(FIG4, ScenarioConfig(n=1000, a=a, y=0.5)).zeta
            for a in (0.5, 1.0, 2.0, 4.0)
        ]
        assert all(z1 < z2 for z1, z2 in zip(zetas, zetas[1:]))

    def test_crossover_precedes_threshold_at_a_one(self):
        for n in (10**3, 10**4, 10**5):
            tt = solve_targets(FIG4, ScenarioConfig(n=n, a=1.0, y=0.5))
            assert tt.xi < tt.zeta

    def test_bracket_gap_shrinks_along_n(self):
        gaps = [
            solve_targets(FIG4, ScenarioConfig(n=n, a=1.0, y=0.5)).u_upper
            - solve_targets(FIG4, ScenarioConfig(n=n, a=1.0, y=0.5)).u_lower
            for n in (10**3, 10**4, 10**5, 10**6)
        ]
        assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))

    def test_rescaled_targets_approach_limit_slopes(self):
        # zeta_n/t_n -> alpha r / lambda1 and xi_n/t_n -> alpha r/(lambda1+r)
        zeta_limit = FIG4.alpha * FIG4.r / FIG4.lambda1
        xi_limit = FIG4.alpha * FIG4.r / (FIG4.lambda1 + FIG4.r)
        zeta_errs, xi_errs = [], []
        for n in (10**6, 10**9, 10**12):
            tt = solve_targets(FIG4, ScenarioConfig(n=n, a=1.0, y=0.5))
            t_n = time_scale(n, FIG4.r)
            zeta_errs.append(abs(tt.zeta / t_n - zeta_limit))
            xi_errs.append(abs(tt.xi / t_n - xi_limit))
        assert all(a > b for a, b in zip(zeta_errs, zeta_errs[1:]))
        assert all(a > b for a, b in zip(xi_errs, xi_errs[1:]))
        assert zeta_errs[-1] < 0.06 and xi_errs[-1] < 0.06

    def test_early_offset_beyond_zeta_rejected(self):
        with pytest.raises(BracketError, match="y"):
            solve_targets(FIG4, ScenarioConfig(n=1000, a=1.0, y=1000.0))

    def test_u_of_y_definition(self):
        scenario = ScenarioConfig(n=1000, a=1.0, y=1.0)
        tt = solve_targets(FIG4, scenario)
        np.testing.assert_allclose(
            tt.u_of_y, (tt.zeta - 1.0) / time_scale(1000, FIG4.r), rtol=1e-12
        )


class TestConditionalCloneMean:
    def test_zero_clones(self):
        assert conditional_clone_mean(0, 10.0, FIG4) == 0.0

    def test_linearity_in_k(self):
        one = conditional_clone_mean(1, 10.0, FIG4)
        np.testing.assert_allclose(conditional_clone_mean(2, 10.0, FIG4), 2 * one,
                                   rtol=1e-12)

    def test_reference_value_against_quadrature(self):
        # numerator e^{lam1 T}(1-e^{-(lam1+r)T})/(lam1+r) over the
        # survival-weighted arrival integral, both by direct quadrature
        T = 10.0
        lam1, r = 0.2, 0.2
        numer = quad(lambda s: math.exp(lam1 * T - (lam1 + r) * s), 0, T)[0]
        denom = quad(
            lambda s: clone_survival(T - s, FIG4.resistant) * math.exp(-r * s), 0, T
        )[0]
        got = conditional_clone_mean(1, T, FIG4)
        np.testing.assert_allclose(got, numer / denom, rtol=1e-10)
        np.testing.assert_allclose(got, 6.960259304371638, rtol=1e-10)


class TestConditionalCloneMgf:
    def test_theta_zero(self):
        assert conditional_clone_mgf(0.0, 3, 10.0, FIG4) == 1.0

    def test_empty_product(self):
        assert conditional_clone_mgf(0.4, 0, 10.0, FIG4) == 1.0

    def test_reference_value(self):
        got = conditional_clone_mgf(0.25, 1, 10.0, FIG4)
        np.testing.assert_allclose(got, 1.3386415635967484, rtol=1e-10)

    def test_k_power_structure(self):
        one = conditional_clone_mgf(0.2, 1, 10.0, FIG4)
        np.testing.assert_allclose(
            conditional_clone_mgf(0.2, 4, 10.0, FIG4), one**4, rtol=1e-12
        )

    def test_divergent_domain_is_sentinel(self):
        assert conditional_clone_mgf(10.0, 1, 10.0, FIG4) == math.inf
        assert (
            conditional_clone_mgf(0.5, 1, 10.0, FIG4, limit_kernel=True) == math.inf
        )

    def test_limit_kernel_close_to_finite_form_at_large_t(self):
        got_fin = conditional_clone_mgf(0.2, 1, 40.0, FIG4)
        got_lim = conditional_clone_mgf(0.2, 1, 40.0, FIG4, limit_kernel=True)
        np.testing.assert_allclose(got_fin, got_lim, rtol=2e-3)

    def test_mean_consistency(self):
        # d/dtheta at 0 of the scaled-mass MGF = e^{-lam1 T} * conditional mean
        T, h = 10.0, 1e-6
        deriv = (
            conditional_clone_mgf(h, 1, T, FIG4)
            - conditional_clone_mgf(-h, 1, T, FIG4)
        ) / (2 * h)
        expected = math.exp(-0.2 * T) * conditional_clone_mean(1, T, FIG4)
        np.testing.assert_allclose(deriv, expected, rtol=1e-6)


class TestCloneCountMean:
    def test_zero_horizon(self):
        assert clone_count_mean(0.0, FIG4, 10**4) == 0.0

    def test_limit_formula(self):
        # n^{1-alpha} lambda1 mu/(r r1) = 100 * 0.02/0.08 = 25
        np.testing.assert_allclose(
            clone_count_mean(math.inf, FIG4, 10**4), 25.0, rtol=1e-12
        )

    def test_finite_horizon_value(self):
        got = clone_count_mean(10.0, FIG4, 10**4)
        np.testing.assert_allclose(got, 26.054060985695173, rtol=1e-10)

    def test_long_horizon_approaches_limit(self):
        far = clone_count_mean(200.0, FIG4, 10**4)
        np.testing.assert_allclose(far, 25.0, rtol=1e-8)
