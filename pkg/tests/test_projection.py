import math

import numpy as np
import pytest

from breachrisk.distributions import DtpParams, dtp_mean_sd, dtp_moments
from breachrisk.dynamics import SeverityDynamics
from breachrisk.projection import (
    clt_crossover,
    expected_cumsum_curve,
    forecast,
    superlinear_reference,
)
from breachrisk.severity import DtpFit, EstimationError, SeverityModel

U = 5e4

D0_DYN = SeverityDynamics(alpha0=0.47, u=U, nu0=18.839)
D2_DYN = SeverityDynamics(alpha0=0.57, alpha1=-0.025, u=U,
                          nu0=math.log(2.24e8) - 0.84 * math.log(8.0), nu1=0.84)


def d0_fit():
    return DtpFit(model=SeverityModel.D0, alpha0=0.47, alpha1=0.0, nu0=18.839,
                  nu1=0.0, u=U, loglik=0.0, n=619, t_span=(0.0, 8.3))


class TestForecast:
    def test_d0_annual_level(self):
        # stationary severity at the reported rate reproduces the published
        # level: 2.37e8 expected ids per year with sd near 1.14e8
        out = forecast(d0_fit(), rate_mean=75.5, rate_var=229.0,
                       years=range(2015, 2020), anchor=(2014, 18.16e8))
        assert out[0].annual_mean == pytest.approx(2.37e8, rel=0.05)
        assert out[0].annual_sd == pytest.approx(1.14e8, rel=0.10)

    def test_d0_means_identical_across_years(self):
        out = forecast(d0_fit(), 75.5, 229.0, range(2015, 2020), (2014, 18.16e8))
        means = {round(f.annual_mean, 6) for f in out}
        assert len(means) == 1

    def test_d2_annual_means_strictly_increase(self):
        out = forecast(D2_DYN, 75.6, 229.0, range(2015, 2020), (2014, 18.16e8))
        means = [f.annual_mean for f in out]
        assert all(b > a for a, b in zip(means, means[1:]))

    def test_d2_2019_cumulative(self):
        out = forecast(D2_DYN, 75.6, 229.0, range(2015, 2020), (2014, 18.16e8))
        assert out[-1].year == 2019
        assert out[-1].cumulative_mean == pytest.approx(55.0e8, rel=0.05)

    def test_cumulative_additivity_exact(self):
        out = forecast(D2_DYN, 75.6, 229.0, range(2015, 2020), (2014, 18.16e8))
        total = 18.16e8 + sum(f.annual_mean for f in out)
        assert out[-1].cumulative_mean == pytest.approx(total, rel=1e-12)
        assert all(b.cumulative_mean > a.cumulative_mean for a, b in zip(out, out[1:]))

    def test_degenerate_variance(self):
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=math.log(U) + 1e-9)
        out = forecast(dyn, 75.0, 0.0, [2015], (2014, 0.0))
        assert out[0].annual_sd == pytest.approx(0.0, abs=1.0)
        assert out[0].annual_mean == pytest.approx(75.0 * U, rel=1e-6)

    def test_infinite_moments_rejected(self):
        dyn = SeverityDynamics(alpha0=0.5, u=U)  # no endpoint
        with pytest.raises(EstimationError, match="infinite"):
            forecast(dyn, 75.0, 229.0, [2015], (2014, 0.0))

    def test_years_before_anchor_rejected(self):
        with pytest.raises(ValueError, match="anchor"):
            forecast(d0_fit(), 75.5, 229.0, [2014], (2014, 18.16e8))

    def test_years_before_epoch_rejected(self):
        with pytest.raises(ValueError, match="epoch"):
            forecast(d0_fit(), 75.5, 229.0, [2006], (2000, 0.0))


class TestCumsumCurve:
    def test_d0_total_matches_observed_scale(self):
        # 619 stationary events: expected total n*E[X] lands within one sd
        # of the observed 1.962e9 total
        curve = expected_cumsum_curve(d0_fit(), 619, rate_mean=75.5)
        mean_x, sd_x = dtp_mean_sd(DtpParams(alpha=0.47, u=U, nu=math.exp(18.839)))
        assert curve.mean[-1] == pytest.approx(619 * mean_x, rel=1e-9)
        assert abs(curve.mean[-1] - 1.962e9) < curve.sd[-1]
        assert curve.sd[-1] == pytest.approx(math.sqrt(619) * sd_x, rel=1e-9)

    def test_zero_events_empty(self):
        curve = expected_cumsum_curve(d0_fit(), 0, rate_mean=75.5)
        assert len(curve.mean) == 0

    def test_monotone_mean(self):
        curve = expected_cumsum_curve(D2_DYN, 300, rate_mean=75.6)
        assert np.all(np.diff(curve.mean) > 0)
        assert np.all(np.diff(curve.sd) > 0)

    def test_d2_curve_matches_simulation(self):
        # Monte-Carlo oracle: mean of 10^4 simulated cumulative sums
        curve = expected_cumsum_curve(D2_DYN, 619, rate_mean=75.6)
        rng = np.random.default_rng(5)
        n_rep = 10_000
        t = np.arange(1, 620) / 75.6
        totals = np.zeros(n_rep)
        for r in range(n_rep):
            y = D2_DYN.sample_log_sizes(t, rng)
            totals[r] = np.exp(y).sum()
        assert curve.mean[-1] == pytest.approx(float(np.mean(totals)), rel=0.01)
        assert curve.sd[-1] == pytest.approx(float(np.std(totals)), rel=0.05)


class TestCrossover:
    def test_rule_of_thumb_value(self):
        assert clt_crossover(5e4, 1.6e8, 0.5) == pytest.approx(56.5685, abs=1e-3)

    def test_degenerate_ratio(self):
        assert clt_crossover(5e4, 5e4, 0.7) == 1.0

    def test_alpha_one(self):
        assert clt_crossover(5e4, 1.6e8, 1.0) == pytest.approx(3200.0)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            clt_crossover(5e4, 1e4, 0.5)
        with pytest.raises(ValueError):
            clt_crossover(5e4, 1e8, 0.0)


class TestSuperlinearReference:
    def test_growth_magnitude(self):
        # alpha = 0.5 turns n=200 into u * n^2 = 2e9
        assert superlinear_reference(5e4, 0.5, 200) == pytest.approx(2e9)

    def test_single_event(self):
        assert superlinear_reference(5e4, 0.5, 1) == 5e4

    def test_doubling_homogeneity(self):
        for alpha in (0.4, 0.5, 1.0, 2.0):
            r1 = superlinear_reference(5e4, alpha, 100)
            r2 = superlinear_reference(5e4, alpha, 200)
            assert r2 / r1 == pytest.approx(2 ** (1 / alpha), rel=1e-12)


class TestCompoundCrossOracle:
    def test_moment_formulas_match_simulation(self):
        # 1e5 simulated compound years versus the closed-form mean/variance
        rate = 75.5
        p = DtpParams(alpha=0.47, u=U, nu=math.exp(18.839))
        mean_x, second_x = dtp_moments(p)
        var_x = second_x - mean_x**2
        mean_y = mean_x * rate
        var_y = rate * var_x + mean_x**2 * rate  # Poisson: Var(N) = E[N]
        rng = np.random.default_rng(6)
        n_rep = 100_000
        counts = rng.poisson(rate, n_rep)
        draws = np.exp(SeverityDynamics(alpha0=0.47, u=U, nu0=18.839)
                       .sample_log_sizes(np.zeros(int(counts.sum())), rng))
        split = np.cumsum(counts)[:-1]
        totals = np.array([chunk.sum() for chunk in np.split(draws, split)])
        assert float(np.mean(totals)) == pytest.approx(mean_y, rel=0.02)
        assert float(np.var(totals)) == pytest.approx(var_y, rel=0.02)
