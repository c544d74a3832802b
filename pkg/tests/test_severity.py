import math
from datetime import date

import numpy as np
import pytest
from scipy import stats as sstats

from breachrisk.catalog import BreachCatalog, BreachEvent
from breachrisk.distributions import DtpParams, dte_cdf
from breachrisk.dynamics import SeverityDynamics
from breachrisk.montecarlo import SimSpec, simulate_catalog
from breachrisk.severity import (
    DtpFit,
    EstimationError,
    SeverityModel,
    alpha_tail_scan,
    current_shape,
    fit_dte,
    ks_test,
    stationarity_transform,
    transform_diagnostics,
)

U = 5e4
U_LOG = math.log(U)
EPOCH = date(2007, 1, 1)


def catalog_from_log_sizes(y, t):
    """Build a catalog whose event dates land on the given fractional years."""
    events = [
        BreachEvent(
            time=EPOCH.fromordinal(EPOCH.toordinal() + int(round(ti * 365.25))),
            size=int(math.ceil(math.exp(yi))),
        )
        for yi, ti in zip(y, t)
    ]
    return BreachCatalog.from_events(events, epoch=EPOCH)


def synthetic_catalog(dyn, n, horizon, seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.random(n) * horizon)
    y = dyn.sample_log_sizes(t, rng)
    return catalog_from_log_sizes(y, t)


class TestFitDte:
    def test_d0star_matches_closed_form(self):
        # untruncated exponential MLE has the closed form 1/mean(y - u)
        dyn = SeverityDynamics(alpha0=0.6, u=U)
        cat = synthetic_catalog(dyn, 800, 8.0, seed=1)
        fit = fit_dte(cat, SeverityModel.D0STAR, u=U, n_boot=0)
        y, _ = cat.log_sizes_and_times()
        closed = 1.0 / np.mean(y - U_LOG)
        assert fit.alpha0 == pytest.approx(closed, abs=1e-4)
        assert math.isinf(fit.nu0)

    def test_d0_recovery(self):
        dyn = SeverityDynamics(alpha0=0.47, u=U, nu0=18.84)
        cat = synthetic_catalog(dyn, 2000, 8.0, seed=2)
        fit = fit_dte(cat, "D0", u=U, n_boot=0)
        assert fit.alpha0 == pytest.approx(0.47, abs=0.05)
        y, _ = cat.log_sizes_and_times()
        assert fit.nu0 == pytest.approx(float(np.max(y)), abs=1e-12)  # boundary ML

    def test_d1_recovery(self):
        # drifting-shape truth: alpha(t) = 0.5 - 0.02 t, constant endpoint 19
        dyn = SeverityDynamics(alpha0=0.5, alpha1=-0.02, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 2000, 8.0, seed=3)
        fit = fit_dte(cat, SeverityModel.D1, u=U, n_boot=0)
        assert fit.alpha0 == pytest.approx(0.5, abs=0.05)
        assert fit.alpha1 == pytest.approx(-0.02, abs=0.01)

    def test_d2_recovery_with_fixed_endpoint(self):
        endpoint = (17.48, 0.84)
        dyn = SeverityDynamics(alpha0=0.57, alpha1=-0.025, u=U, nu0=17.48, nu1=0.84)
        cat = synthetic_catalog(dyn, 1500, 8.0, seed=4)
        fit = fit_dte(cat, SeverityModel.D2, endpoint=endpoint, u=U, n_boot=0)
        assert fit.alpha0 == pytest.approx(0.57, abs=0.06)
        assert fit.alpha1 == pytest.approx(-0.025, abs=0.012)
        assert (fit.nu0, fit.nu1) == endpoint

    def test_nesting_monotonicity(self):
        dyn = SeverityDynamics(alpha0=0.5, alpha1=-0.02, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 600, 8.0, seed=5)
        ll_d0 = fit_dte(cat, "D0", u=U, n_boot=0).loglik
        ll_d0star = fit_dte(cat, "D0*", u=U, n_boot=0).loglik
        ll_d1 = fit_dte(cat, "D1", u=U, n_boot=0).loglik
        assert ll_d1 >= ll_d0 - 1e-6
        assert ll_d0 >= ll_d0star - 1e-6  # finite endpoint can only help here

    def test_scale_equivariance(self):
        # multiplying sizes and truncations by c leaves alpha unchanged
        dyn = SeverityDynamics(alpha0=0.6, u=U, nu0=18.0)
        cat = synthetic_catalog(dyn, 500, 8.0, seed=6)
        fit = fit_dte(cat, "D0", u=U, n_boot=0)
        c = 7.0
        scaled = BreachCatalog.from_events(
            [
                BreachEvent(time=e.time, size=int(round(e.size * c)))
                for e in cat.events
            ],
            epoch=cat.epoch,
        )
        fit_scaled = fit_dte(scaled, "D0", u=U * c, n_boot=0)
        assert fit_scaled.alpha0 == pytest.approx(fit.alpha0, abs=2e-3)

    def test_too_few_events_refused(self):
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 20, 8.0, seed=7)
        with pytest.raises(EstimationError, match="at least"):
            fit_dte(cat, "D0", u=U, n_boot=0)

    def test_d2_requires_endpoint(self):
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 100, 8.0, seed=8)
        with pytest.raises(EstimationError, match="endpoint"):
            fit_dte(cat, "D2", u=U, n_boot=0)

    def test_bootstrap_se_scale(self):
        # n = 619 at paper-like parameters: alpha se should sit near the
        # Fisher-information value ~0.023 (the paper's own table shows 0.017)
        dyn = SeverityDynamics(alpha0=0.47, u=U, nu0=18.839)
        cat = synthetic_catalog(dyn, 619, 8.3, seed=9)
        fit = fit_dte(cat, "D0", u=U, n_boot=120, seed=10)
        assert fit.alpha0_se == pytest.approx(0.023, abs=0.008)
        assert fit.nu0_se is not None and 0.02 < fit.nu0_se < 1.0

    def test_slope_pvalue_significant_under_drift(self):
        dyn = SeverityDynamics(alpha0=0.6, alpha1=-0.04, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 1200, 8.0, seed=11)
        fit = fit_dte(cat, "D1", u=U, n_boot=99, seed=12)
        assert fit.alpha1_p is not None and fit.alpha1_p < 0.05


class TestCurrentShape:
    def make_fit(self, **kw):
        base = dict(
            model=SeverityModel.D2, alpha0=0.57, alpha1=-0.025, nu0=17.48, nu1=0.84,
            u=U, loglik=0.0, n=100, t_span=(0.0, 8.0),
        )
        base.update(kw)
        return DtpFit(**base)

    def test_linear_shape_path(self):
        fit = self.make_fit()
        at8 = current_shape(fit, 8.0)
        assert at8.alpha == pytest.approx(0.57 - 0.025 * 8, rel=1e-12)
        assert at8.max_size == pytest.approx(math.exp(17.48 + 0.84 * math.log(8 + 1 / 365.25)), rel=1e-9)

    def test_t_zero_gives_alpha0(self):
        fit = self.make_fit()
        assert current_shape(fit, 0.0).alpha == pytest.approx(0.57)

    def test_constant_for_d0(self):
        fit = self.make_fit(model=SeverityModel.D0, alpha1=0.0, nu1=0.0, nu0=18.8)
        for t in (0.0, 3.5, 8.0):
            assert current_shape(fit, t).alpha == 0.57

    def test_nonpositive_alpha_rejected(self):
        fit = self.make_fit()
        with pytest.raises(EstimationError):
            current_shape(fit, 30.0)


class TestStationarityTransform:
    def test_identity_when_stationary(self):
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 200, 8.0, seed=13)
        fit = DtpFit(
            model=SeverityModel.D1, alpha0=0.5, alpha1=0.0, nu0=19.0, nu1=0.0,
            u=U, loglik=0.0, n=200, t_span=(0.0, 8.0),
        )
        y, _ = cat.log_sizes_and_times()
        res = stationarity_transform(cat, fit)
        assert np.allclose(res.y, y)

    def test_refit_on_transformed_recovers_alpha0(self):
        dyn = SeverityDynamics(alpha0=0.57, alpha1=-0.025, u=U, nu0=17.48, nu1=0.84)
        cat = synthetic_catalog(dyn, 1500, 8.0, seed=14)
        fit = fit_dte(cat, "D2", endpoint=(17.48, 0.84), u=U, n_boot=0)
        res = stationarity_transform(cat, fit)
        refit_cat = catalog_from_log_sizes(res.y, res.t)
        refit = fit_dte(refit_cat, "D0", u=U, n_boot=0)
        assert refit.alpha0 == pytest.approx(fit.alpha0, abs=0.06)

    def test_transformed_sample_passes_ks(self):
        dyn = SeverityDynamics(alpha0=0.57, alpha1=-0.025, u=U, nu0=17.48, nu1=0.84)
        cat = synthetic_catalog(dyn, 619, 8.3, seed=15)
        fit = fit_dte(cat, "D2", endpoint=(17.48, 0.84), u=U, n_boot=0)
        _, stationary, _, p = transform_diagnostics(cat, fit)
        assert p > 0.05
        assert stationary.alpha == pytest.approx(fit.alpha0, abs=0.1)

    def test_rejects_stationary_models(self):
        fit = DtpFit(
            model=SeverityModel.D0, alpha0=0.5, alpha1=0.0, nu0=19.0, nu1=0.0,
            u=U, loglik=0.0, n=10, t_span=(0.0, 8.0),
        )
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=19.0)
        cat = synthetic_catalog(dyn, 100, 8.0, seed=16)
        with pytest.raises(EstimationError):
            stationarity_transform(cat, fit)


class TestKs:
    def test_statistic_at_model_quantiles(self):
        # sample placed exactly at quantiles (i-0.5)/n has statistic 0.5/n
        p = DtpParams(alpha=0.5, u=10.0, nu=19.0)
        n = 200
        q = (np.arange(1, n + 1) - 0.5) / n
        sample = 10.0 - np.log1p(q * np.expm1(-0.5 * 9.0)) / 0.5
        d, pval = ks_test(sample, lambda x: dte_cdf(x, p))
        assert d == pytest.approx(0.5 / n, rel=1e-9)
        assert pval > 0.999

    def test_matches_scipy(self):
        rng = np.random.default_rng(17)
        sample = rng.normal(size=300)
        d, p = ks_test(sample, sstats.norm.cdf)
        ref = sstats.kstest(sample, "norm", mode="asymp")
        assert d == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-6)

    def test_pvalues_uniform_under_null(self):
        rng = np.random.default_rng(18)
        pvals = []
        for _ in range(400):
            sample = rng.random(100)
            _, p = ks_test(sample, lambda x: np.clip(x, 0, 1))
            pvals.append(p)
        meta = sstats.kstest(pvals, "uniform")
        assert meta.pvalue > 0.01

    def test_constant_sample_rejected(self):
        with pytest.raises(ValueError):
            ks_test(np.ones(10), lambda x: x)

    def test_small_sample_rejected(self):
        with pytest.raises(ValueError):
            ks_test(np.arange(3.0), lambda x: x)


class TestTailScan:
    def test_single_threshold(self):
        rng = np.random.default_rng(19)
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=19.0)
        y = dyn.sample_log_sizes(np.zeros(500), rng)
        pts = alpha_tail_scan(y, np.array([U]))
        assert len(pts) == 1
        assert pts[0].alpha == pytest.approx(0.5, abs=0.07)

    def test_scan_flat_across_replications(self):
        # at every threshold the estimate should sit within 2 SE of the
        # truth in >= 90% of replications (the scan shows no drift)
        rng = np.random.default_rng(20)
        dyn = SeverityDynamics(alpha0=0.5, u=U, nu0=19.5)
        grid = np.geomspace(5e4, 5e6, 5)
        n_rep = 200
        hits = np.zeros(len(grid))
        for _ in range(n_rep):
            y = dyn.sample_log_sizes(np.zeros(1500), rng)
            pts = alpha_tail_scan(y, grid)
            hits += [abs(pt.alpha - 0.5) <= 2 * pt.se for pt in pts]
        assert np.all(hits >= 0.90 * n_rep)

    def test_too_few_points_raises(self):
        y = np.log(np.geomspace(6e4, 1e6, 30))
        with pytest.raises(EstimationError):
            alpha_tail_scan(y, np.array([9e5]))
