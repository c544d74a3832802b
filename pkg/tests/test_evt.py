import math
from datetime import date, timedelta

import numpy as np
import pytest
from scipy.stats import chi2

from breachrisk.catalog import BreachCatalog, BreachEvent
from breachrisk.distributions import GpdParams, gpd_sample
from breachrisk.dynamics import T_LOG_SHIFT, SeverityDynamics
from breachrisk.evt import (
    EvtModel,
    GpdFit,
    endpoint_conversion,
    endpoint_curve,
    fit_pot,
    lrt,
    stability_scan,
)
from breachrisk.severity import DtpFit, EstimationError, SeverityModel, fit_dte

EPOCH = date(2007, 1, 1)
U = 15.5


def catalog_from_log_sizes(y, t):
    events = [
        BreachEvent(time=EPOCH + timedelta(days=int(round(ti * 365.25))),
                    size=int(math.ceil(math.exp(yi))))
        for yi, ti in zip(y, t)
    ]
    return BreachCatalog.from_events(events, epoch=EPOCH)


def gpd_catalog(xi, beta0, beta1, model, n, horizon, seed):
    """Exceedances above U drawn from the requested scale path."""
    rng = np.random.default_rng(seed)
    t = np.sort(rng.random(n) * horizon)
    if model is EvtModel.M2:
        beta = beta0 + beta1 * t
    elif model is EvtModel.M3:
        beta = beta0 + beta1 * np.log(t + T_LOG_SHIFT)
    else:
        beta = np.full(n, beta0)
    v = rng.random(n)
    if abs(xi) < 1e-9:
        z = -beta * np.log1p(-v)
    else:
        z = beta / xi * np.expm1(-xi * np.log1p(-v))
    return catalog_from_log_sizes(U + z, t)


class TestFitPot:
    def test_recovery_large_sample(self):
        # 5000 draws from a fixed short-tailed GPD recover the shape closely
        rng = np.random.default_rng(0)
        z = gpd_sample(GpdParams(xi=-0.5, beta=2.0), 5000, rng)
        t = np.sort(rng.random(5000) * 8.0)
        cat = catalog_from_log_sizes(U + z, t)
        fit = fit_pot(cat, U, EvtModel.M1, n_boot=0)
        assert fit.xi == pytest.approx(-0.5, abs=0.05)
        assert fit.beta0 == pytest.approx(2.0, abs=0.15)

    def test_m0_positive_shape(self):
        rng = np.random.default_rng(1)
        z = gpd_sample(GpdParams(xi=0.3, beta=1.5), 3000, rng)
        t = np.sort(rng.random(3000) * 8.0)
        cat = catalog_from_log_sizes(U + z, t)
        fit = fit_pot(cat, U, "M0", n_boot=0)
        assert fit.xi == pytest.approx(0.3, abs=0.06)
        assert fit.xi > 0

    def test_m3_recovery(self):
        cat = gpd_catalog(-0.7, 1.6, 0.65, EvtModel.M3, 800, 8.3, seed=2)
        fit = fit_pot(cat, U, EvtModel.M3, n_boot=0)
        assert fit.xi == pytest.approx(-0.7, abs=0.1)
        assert fit.beta1 == pytest.approx(0.65, abs=0.2)

    def test_nesting_monotonicity(self):
        cat = gpd_catalog(-0.6, 2.0, 0.2, EvtModel.M2, 200, 8.3, seed=3)
        ll1 = fit_pot(cat, U, "M1", n_boot=0).loglik
        ll2 = fit_pot(cat, U, "M2", n_boot=0).loglik
        ll3 = fit_pot(cat, U, "M3", n_boot=0).loglik
        assert ll2 >= ll1 - 1e-6
        assert ll3 >= ll1 - 1e-6

    def test_endpoint_above_all_data(self):
        # weaker-but-always-true property: fitted endpoint clears u and the data
        cat = gpd_catalog(-0.5, 2.0, 0.0, EvtModel.M1, 150, 8.3, seed=4)
        y, t = cat.log_sizes_and_times()
        for model in ("M1", "M2", "M3"):
            fit = fit_pot(cat, U, model, n_boot=0)
            if fit.xi < 0:
                nu = np.asarray(fit.endpoint(t[y > U]))
                assert np.all(nu > U)
                assert np.all(nu >= y[y > U] - 1e-9)

    def test_shift_equivariance(self):
        # shifting log sizes by c shifts u and nu by c, leaves xi alone
        cat = gpd_catalog(-0.5, 2.0, 0.0, EvtModel.M1, 400, 8.3, seed=5)
        fit = fit_pot(cat, U, "M1", n_boot=0)
        c = 1.3
        y, t = cat.log_sizes_and_times()
        shifted = catalog_from_log_sizes(y + c, t)
        fit_c = fit_pot(shifted, U + c, "M1", n_boot=0)
        assert fit_c.xi == pytest.approx(fit.xi, abs=1e-4)
        assert fit_c.endpoint(0.0) == pytest.approx(fit.endpoint(0.0) + c, abs=1e-3)

    def test_too_few_exceedances(self):
        cat = gpd_catalog(-0.5, 2.0, 0.0, EvtModel.M1, 30, 8.3, seed=6)
        with pytest.raises(EstimationError, match="exceedances"):
            fit_pot(cat, 19.0, "M1", n_boot=0)

    def test_bootstrap_se_present(self):
        cat = gpd_catalog(-0.5, 2.0, 0.0, EvtModel.M1, 100, 8.3, seed=7)
        fit = fit_pot(cat, U, "M1", n_boot=80, seed=8)
        assert fit.xi_se is not None and 0.02 < fit.xi_se < 0.5
        assert fit.beta0_se is not None and fit.beta0_se > 0

    def test_slope_pvalue_small_under_growth(self):
        cat = gpd_catalog(-0.7, 1.6, 0.65, EvtModel.M3, 300, 8.3, seed=9)
        fit = fit_pot(cat, U, "M3", n_boot=99, seed=10)
        assert fit.beta1_p is not None and fit.beta1_p < 0.05


class TestEndpointCurve:
    def make_fit(self, model, xi, beta0, beta1):
        return GpdFit(model=model, u=U, n_exceed=50, xi=xi, beta0=beta0,
                      beta1=beta1, loglik=0.0, t_span=(0.0, 8.3))

    def test_m1_constant(self):
        fit = self.make_fit(EvtModel.M1, -0.61, 2.24, 0.0)
        curve = endpoint_curve(fit, np.linspace(0, 8, 9))
        assert np.allclose(curve.nu_log, 15.5 + 2.24 / 0.61)
        assert curve.growth_exponent is None

    def test_m2_with_zero_slope_matches_m1(self):
        t = np.linspace(0, 8, 17)
        m1 = endpoint_curve(self.make_fit(EvtModel.M1, -0.5, 2.0, 0.0), t)
        m2 = endpoint_curve(self.make_fit(EvtModel.M2, -0.5, 2.0, 0.0), t)
        assert np.allclose(m1.nu_log, m2.nu_log)

    def test_m3_growth_exponent(self):
        fit = self.make_fit(EvtModel.M3, -0.78, 1.60, 0.65)
        curve = endpoint_curve(fit, np.array([1.0, 8.0]))
        assert curve.growth_exponent == pytest.approx(0.65 / 0.78, abs=1e-12)
        assert curve.growth_exponent == pytest.approx(0.833, abs=1e-3)

    def test_undefined_for_unbounded_tail(self):
        fit = self.make_fit(EvtModel.M0, 0.2, 2.0, 0.0)
        with pytest.raises(EstimationError):
            endpoint_curve(fit, np.array([1.0]))

    def test_endpoint_conversion(self):
        fit = self.make_fit(EvtModel.M3, -0.78, 1.60, 0.65)
        nu0, nu1 = endpoint_conversion(fit)
        assert nu0 == pytest.approx(15.5 + 1.60 / 0.78, rel=1e-12)
        assert nu1 == pytest.approx(0.65 / 0.78, rel=1e-12)


class TestStabilityScan:
    def test_single_threshold_recommends_itself(self):
        cat = gpd_catalog(-0.5, 2.0, 0.0, EvtModel.M1, 200, 8.3, seed=11)
        scan = stability_scan(cat, [U], "M1")
        assert scan.recommended_u == U
        assert scan.settled

    def test_errors_propagate_without_abort(self):
        cat = gpd_catalog(-0.5, 2.0, 0.0, EvtModel.M1, 60, 8.3, seed=12)
        scan = stability_scan(cat, [15.5, 30.0], "M1")
        assert scan.fits[0] is not None
        assert scan.fits[1] is None and "exceedances" in scan.errors[1]

    def test_recommendation_near_true_threshold(self):
        # bulk below the true threshold is lognormal noise; above it, exact GPD.
        # the recommended threshold should not overshoot the truth by more
        # than one grid step in >= 90% of replications
        true_u = 15.0
        grid = np.array([14.0, 14.5, 15.0, 15.5, 16.0])
        hits = 0
        n_rep = 200
        rng = np.random.default_rng(13)
        for _ in range(n_rep):
            n_tail = 300
            z = gpd_sample(GpdParams(xi=-0.5, beta=2.0), n_tail, rng)
            bulk = rng.normal(13.5, 0.8, size=700)
            bulk = bulk[bulk < true_u]
            y = np.concatenate([true_u + z, bulk])
            t = np.sort(rng.random(len(y)) * 8.0)
            cat = catalog_from_log_sizes(y, t)
            scan = stability_scan(cat, grid, "M1")
            if scan.recommended_u <= true_u + 0.5:
                hits += 1
        assert hits >= 0.90 * n_rep


class TestLrt:
    def make_gpd(self, model, loglik):
        return GpdFit(model=model, u=U, n_exceed=50, xi=-0.5, beta0=2.0,
                      beta1=0.1, loglik=loglik, t_span=(0.0, 8.3))

    def make_dtp(self, model, loglik, nu0=18.8):
        return DtpFit(model=model, alpha0=0.5, alpha1=-0.02, nu0=nu0, nu1=0.0,
                      u=5e4, loglik=loglik, n=600, t_span=(0.0, 8.3))

    def test_identical_logliks_give_p_one(self):
        p = lrt(self.make_gpd(EvtModel.M1, -60.0), self.make_gpd(EvtModel.M2, -60.0))
        assert p == 1.0

    def test_chi2_reference(self):
        # 2*(ll_full - ll_nested) = 3.84 at df=1 sits at p ~ 0.05
        p = lrt(self.make_gpd(EvtModel.M1, -60.0), self.make_gpd(EvtModel.M2, -60.0 + 3.841459 / 2))
        assert p == pytest.approx(0.05, abs=1e-4)
        assert p == pytest.approx(float(chi2.sf(3.841459, 1)), rel=1e-9)

    def test_non_nested_pair_rejected(self):
        with pytest.raises(ValueError, match="nested"):
            lrt(self.make_gpd(EvtModel.M2, -57.0), self.make_gpd(EvtModel.M3, -56.0))

    def test_inverted_logliks_rejected(self):
        with pytest.raises(ValueError, match="below"):
            lrt(self.make_gpd(EvtModel.M1, -50.0), self.make_gpd(EvtModel.M2, -60.0))

    def test_finite_maximum_strongly_favored(self):
        # D0* vs D0 on clearly truncated data should give a tiny p-value
        dyn = SeverityDynamics(alpha0=0.5, u=5e4, nu0=16.0)
        rng = np.random.default_rng(14)
        t = np.sort(rng.random(800) * 8.0)
        y = dyn.sample_log_sizes(t, rng)
        cat = catalog_from_log_sizes(y, t)
        d0star = fit_dte(cat, SeverityModel.D0STAR, u=5e4, n_boot=0)
        d0 = fit_dte(cat, SeverityModel.D0, u=5e4, n_boot=0)
        assert lrt(d0star, d0) < 1e-6
