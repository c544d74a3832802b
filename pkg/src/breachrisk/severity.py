"""Severity dynamics of large breaches: truncated-exponential ML on log sizes.

Model variants for the log-size law ``DTE(alpha(t), u, nu(t))``:

* ``D0``     -- stationary shape, constant finite endpoint.
* ``D0STAR`` -- stationary shape, no endpoint (plain exponential tail).
* ``D1``     -- linearly drifting shape ``alpha(t) = alpha0 + alpha1*t``,
                constant finite endpoint.
* ``D2``     -- drifting shape plus logarithmically growing endpoint
                ``nu(t) = nu0 + nu1*ln(t)``; the endpoint pair is a fixed
                input (converted from a tail fit), not re-estimated.

For D0/D1 the constant endpoint is profiled out analytically: the
likelihood decreases in ``nu``, so its ML value is the sample maximum
(the estimate sits on the support boundary by construction).  Standard
errors are parametric-bootstrap; slope p-values come from refitting on
catalogs simulated under the fitted ``alpha1 = 0`` null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import kolmogorov

from ._optim import minimize_restarted
from .catalog import BreachCatalog, BreachEvent
from .distributions import DtpParams, dte_cdf
from .dynamics import SeverityDynamics
from .montecarlo import bootstrap_se, null_pvalue

__all__ = [
    "SeverityModel",
    "DtpFit",
    "EstimationError",
    "fit_dte",
    "current_shape",
    "stationarity_transform",
    "transform_diagnostics",
    "TransformedSample",
    "ks_test",
    "alpha_tail_scan",
    "DEFAULT_THRESHOLD",
]

DEFAULT_THRESHOLD = 5e4
_MIN_SAMPLE = 30


class EstimationError(RuntimeError):
    """Estimator failed: bad inputs, constraint violations, or non-convergence."""


class SeverityModel(str, Enum):
    D0 = "D0"
    D0STAR = "D0*"
    D1 = "D1"
    D2 = "D2"


@dataclass(frozen=True)
class DtpFit:
    """Fitted severity dynamics with bootstrap uncertainty."""

    model: SeverityModel
    alpha0: float
    alpha1: float
    nu0: float          # log-id units; inf for D0*
    nu1: float
    u: float            # lower truncation in ids
    loglik: float
    n: int
    t_span: tuple[float, float]
    alpha0_se: float | None = None
    alpha1_se: float | None = None
    alpha1_p: float | None = None
    nu0_se: float | None = None
    seed: int | None = None

    def dynamics(self) -> SeverityDynamics:
        return SeverityDynamics(
            alpha0=self.alpha0, alpha1=self.alpha1, nu0=self.nu0, nu1=self.nu1, u=self.u
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "u": self.u,
            "n": self.n,
            "alpha0": self.alpha0,
            "alpha0_se": self.alpha0_se,
            "alpha1": self.alpha1,
            "alpha1_se": self.alpha1_se,
            "alpha1_p": self.alpha1_p,
            "nu0": None if math.isinf(self.nu0) else self.nu0,
            "nu0_se": self.nu0_se,
            "nu1": self.nu1,
            "loglik": self.loglik,
        }


def _dte_loglik(y: np.ndarray, t: np.ndarray, dyn: SeverityDynamics) -> float:
    """DTE log-likelihood of log sizes ``y`` at times ``t``; -inf when invalid."""
    a = dyn.alpha(t)
    if np.any(a <= 0):
        return -math.inf
    z = y - dyn.u_log
    if np.any(z < 0):
        return -math.inf
    if math.isinf(dyn.nu0):
        return float(np.sum(np.log(a) - a * z))
    nu = dyn.nu_log(t)
    if np.any(y > nu):
        return -math.inf
    span = nu - dyn.u_log
    if np.any(span <= 0):
        return -math.inf
    return float(np.sum(np.log(a) - a * z - np.log(-np.expm1(-a * span))))


def _fit_core(
    y: np.ndarray,
    t: np.ndarray,
    model: SeverityModel,
    u_log: float,
    endpoint: tuple[float, float] | None,
    seed: int,
    restarts: int = 5,
    warm: np.ndarray | None = None,
    fix_alpha1: bool = False,
    fast: bool = False,
) -> tuple[SeverityDynamics, float]:
    """ML point estimate; returns the fitted dynamics and its log-likelihood.

    ``fix_alpha1`` pins the shape slope at zero (used for null fits);
    ``fast`` loosens optimizer tolerances for bootstrap refits.
    """
    y_max = float(np.max(y))
    t_lo, t_hi = float(np.min(t)), float(np.max(t))
    u_ids = math.exp(u_log)
    has_slope = model in (SeverityModel.D1, SeverityModel.D2) and not fix_alpha1

    if model is SeverityModel.D2:
        if endpoint is None:
            raise EstimationError("D2 requires a fixed (nu0, nu1) endpoint pair")
        nu0, nu1 = endpoint
    elif model is SeverityModel.D0STAR:
        nu0, nu1 = math.inf, 0.0
    else:
        nu0, nu1 = y_max, 0.0  # profiled constant endpoint: ML sits at the sample max

    def dyn_of(theta: np.ndarray) -> SeverityDynamics:
        alpha1 = theta[1] if has_slope else 0.0
        return SeverityDynamics(alpha0=math.exp(theta[0]), alpha1=alpha1,
                                nu0=nu0, nu1=nu1, u=u_ids)

    def nll(theta: np.ndarray) -> float:
        return -_dte_loglik(y, t, dyn_of(theta))

    alpha_mom = 1.0 / float(np.mean(y - u_log))
    x0 = [math.log(alpha_mom)] + ([0.0] if has_slope else [])
    extra = [warm] if warm is not None else []
    tols = {"xatol": 1e-6, "fatol": 1e-9} if fast else {}
    res = minimize_restarted(nll, x0, restarts=restarts, seed=seed, extra_starts=extra, **tols)
    dyn = dyn_of(res.x)
    if not dyn.alpha_positive_over(t_lo, t_hi):
        raise EstimationError(
            f"constrained optimum: alpha(t) hits zero inside the observed span "
            f"[{t_lo:.3f}, {t_hi:.3f}] (alpha0={dyn.alpha0:.4f}, alpha1={dyn.alpha1:.4f})"
        )
    return dyn, -res.fun


def fit_dte(
    catalog: BreachCatalog,
    model: SeverityModel | str,
    endpoint: tuple[float, float] | None = None,
    u: float = DEFAULT_THRESHOLD,
    n_boot: int = 1000,
    seed: int = 0,
    slope_pvalue: bool = True,
) -> DtpFit:
    """Maximum-likelihood severity fit on the catalog's log sizes.

    The catalog must already be filtered to known sizes above ``u``.
    ``endpoint`` is the D2 (nu0, nu1) pair in log-id units, typically
    converted from a tail fit via :func:`breachrisk.evt.endpoint_conversion`.
    ``n_boot = 0`` skips standard errors and p-values;
    ``slope_pvalue = False`` keeps the bootstrap SEs but skips the
    null-simulation p-value for the shape slope.
    """
    model = SeverityModel(model)
    y, t = catalog.log_sizes_and_times()
    u_log = math.log(u)
    if len(y) < _MIN_SAMPLE:
        raise EstimationError(f"need at least {_MIN_SAMPLE} events above u, got {len(y)}")
    if np.any(y <= u_log):
        raise EstimationError("catalog contains sizes at or below the truncation u")
    if model is SeverityModel.D2:
        if endpoint is None:
            raise EstimationError("D2 requires a fixed (nu0, nu1) endpoint pair")
        path = SeverityDynamics(1.0, u, 0.0, *endpoint)
        nu_t = path.nu_log(t)
        # dates carry day resolution and sizes are integer id counts, so an
        # event can legitimately sit above nu(start of its day) by the
        # endpoint's within-day growth plus a rounding sliver
        slack = np.maximum(path.nu_log(t + 1.0 / 365.25) - nu_t, 0.0) + 1e-4
        if np.any(y - nu_t > slack):
            raise EstimationError(
                "fixed D2 endpoint lies below an observed log size at its event time"
            )
        y = np.minimum(y, nu_t)

    # hierarchical warm start keeps nested log-likelihoods monotone: the
    # slope models always see their own alpha1=0 optimum as one start
    warm = None
    if model in (SeverityModel.D1, SeverityModel.D2):
        base, _ = _fit_core(y, t, model, u_log, endpoint, seed, fix_alpha1=True)
        warm = np.array([math.log(base.alpha0), 0.0])

    dyn, loglik = _fit_core(y, t, model, u_log, endpoint, seed, warm=warm)
    t_span = (float(np.min(t)), float(np.max(t)))
    fit = DtpFit(
        model=model,
        alpha0=dyn.alpha0,
        alpha1=dyn.alpha1,
        nu0=dyn.nu0,
        nu1=dyn.nu1,
        u=dyn.u,
        loglik=loglik,
        n=len(y),
        t_span=t_span,
        seed=seed,
    )
    if n_boot <= 0:
        return fit
    return _attach_uncertainty(fit, y, t, endpoint, n_boot, seed, slope_pvalue)


def _refit_params(
    y: np.ndarray, t: np.ndarray, model: SeverityModel, u_log: float,
    endpoint: tuple[float, float] | None, warm: np.ndarray, seed: int,
) -> list[float]:
    dyn, _ = _fit_core(y, t, model, u_log, endpoint, seed, restarts=1, warm=warm, fast=True)
    out = [dyn.alpha0, dyn.alpha1]
    if model in (SeverityModel.D0, SeverityModel.D1):
        out.append(dyn.nu0)
    return out


def _attach_uncertainty(
    fit: DtpFit,
    y: np.ndarray,
    t: np.ndarray,
    endpoint: tuple[float, float] | None,
    n_boot: int,
    seed: int,
    slope_pvalue: bool = True,
) -> DtpFit:
    model, u_log = fit.model, math.log(fit.u)
    dyn = fit.dynamics()
    warm = np.array([math.log(fit.alpha0)] + (
        [fit.alpha1] if model in (SeverityModel.D1, SeverityModel.D2) else []
    ))

    def simulate(rng: np.random.Generator) -> np.ndarray:
        return dyn.sample_log_sizes(t, rng)  # fixed design: same n, same times

    boot = bootstrap_se(
        simulate,
        lambda yy: _refit_params(yy, t, model, u_log, endpoint, warm, seed),
        n_rep=n_boot,
        seed=seed,
    )
    fit = replace(
        fit,
        alpha0_se=float(boot.se[0]),
        alpha1_se=float(boot.se[1]) if model in (SeverityModel.D1, SeverityModel.D2) else None,
        nu0_se=float(boot.se[2]) if model in (SeverityModel.D0, SeverityModel.D1) else None,
    )

    if slope_pvalue and model in (SeverityModel.D1, SeverityModel.D2):
        null_dyn, _ = _fit_core(y, t, model, u_log, endpoint, seed, fix_alpha1=True)
        p = null_pvalue(
            lambda rng: null_dyn.sample_log_sizes(t, rng),
            lambda yy: _refit_params(yy, t, model, u_log, endpoint, warm, seed)[1],
            observed=fit.alpha1,
            n_rep=n_boot,
            seed=seed + 1,
        )
        fit = replace(fit, alpha1_p=p)
    return fit


@dataclass(frozen=True)
class ShapeAt:
    """Severity shape (and size-domain maximum) evaluated at one time."""

    t: float
    alpha: float
    max_size: float  # ids; inf when no finite endpoint


def current_shape(fit: DtpFit, t: float) -> ShapeAt:
    """``alpha(t)`` plus the size-domain maximum ``exp(nu(t))`` at time ``t``."""
    dyn = fit.dynamics()
    a = float(dyn.alpha(t))
    if a <= 0:
        raise EstimationError(f"alpha({t}) = {a:.4f} is not positive")
    nu = float(dyn.nu_log(t))
    return ShapeAt(t=t, alpha=a, max_size=math.inf if math.isinf(nu) else math.exp(nu))


@dataclass(frozen=True)
class TransformedSample:
    """Stationarized log sizes with the implied (approximately constant) endpoint."""

    y: np.ndarray          # transformed log sizes
    t: np.ndarray
    nu_star: np.ndarray    # transformed endpoint path, log-id units
    u_log: float

    def to_catalog(self, catalog: BreachCatalog) -> BreachCatalog:
        """Transformed sizes written back onto the source events (known sizes only)."""
        known = [e for e in catalog.events if e.size is not None]
        events = [
            BreachEvent(time=e.time, size=int(math.ceil(math.exp(yy))),
                        country_tag=e.country_tag, org_id=e.org_id,
                        sector_tag=e.sector_tag, mcap=e.mcap)
            for e, yy in zip(known, self.y)
        ]
        return BreachCatalog.from_events(events, epoch=catalog.epoch)


def stationarity_transform(catalog: BreachCatalog, fit: DtpFit) -> TransformedSample:
    """Rescale log exceedances to the epoch's shape: ``u + (y-u)*alpha(t)/alpha0``.

    Under the fitted dynamics the rescaled exceedance is again truncated
    exponential with shape ``alpha0`` and endpoint
    ``nu*(t) = u + (nu(t)-u)*alpha(t)/alpha0``, which the fitted models
    keep approximately constant, so the output can be treated as one
    stationary sample.  With ``alpha1 = 0`` the transform is the identity.
    """
    if fit.model not in (SeverityModel.D1, SeverityModel.D2):
        raise EstimationError("stationarity transform applies to the drifting models D1/D2")
    y, t = catalog.log_sizes_and_times()
    dyn = fit.dynamics()
    ratio = dyn.alpha(t) / fit.alpha0
    u_log = dyn.u_log
    y_tilde = u_log + (y - u_log) * ratio
    nu_star = u_log + (dyn.nu_log(t) - u_log) * ratio
    return TransformedSample(y=y_tilde, t=t, nu_star=nu_star, u_log=u_log)


def transform_diagnostics(
    catalog: BreachCatalog, fit: DtpFit, seed: int = 0
) -> tuple[TransformedSample, DtpParams, float, float]:
    """Panel-style stationarity diagnostic.

    Transforms the sample, re-estimates the stationary law on it, and
    KS-tests the transformed sample against that re-estimated law.
    Returns ``(transformed, stationary_params, ks_statistic, ks_p)``.
    """
    res = stationarity_transform(catalog, fit)
    y = res.y
    nu_hat = float(np.max(y))

    def nll(theta: np.ndarray) -> float:
        dyn = SeverityDynamics(alpha0=math.exp(theta[0]), u=math.exp(res.u_log), nu0=nu_hat)
        return -_dte_loglik(y, np.zeros(len(y)), dyn)

    alpha_mom = 1.0 / float(np.mean(y - res.u_log))
    opt = minimize_restarted(nll, [math.log(alpha_mom)], restarts=3, seed=seed)
    stationary = DtpParams(alpha=math.exp(opt.x[0]), u=res.u_log, nu=nu_hat)
    stat, p = ks_test(y, lambda x: dte_cdf(x, stationary))
    return res, stationary, stat, p


def ks_test(sample: np.ndarray, cdf) -> tuple[float, float]:
    """Two-sided Kolmogorov-Smirnov test of ``sample`` against a model cdf.

    Returns ``(statistic, p)`` with the p-value from the asymptotic
    Kolmogorov distribution of ``sqrt(n) * D``.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 5:
        raise ValueError(f"KS test needs at least 5 observations, got {n}")
    if x[0] == x[-1]:
        raise ValueError("KS test is undefined for a constant sample")
    f = np.asarray(cdf(x), dtype=float)
    grid = np.arange(1, n + 1) / n
    d = float(np.max(np.maximum(grid - f, f - (grid - 1 / n))))
    return d, float(kolmogorov(math.sqrt(n) * d))


@dataclass(frozen=True)
class TailScanPoint:
    u: float
    alpha: float
    se: float
    n: int


def alpha_tail_scan(
    y: np.ndarray,
    u_grid: np.ndarray,
    nu0: float | None = None,
    min_points: int = 20,
) -> list[TailScanPoint]:
    """Stationary shape re-estimated above an increasing lower truncation.

    ``y`` are (transformed) log sizes; grid thresholds are in ids.  Each
    truncation gets a D0-style fit with the endpoint at the sample max
    (or a supplied ``nu0``) and a Fisher-information standard error for
    the truncated exponential, which is what a scan needs to judge
    stability without a bootstrap per threshold.
    """
    y = np.asarray(y, dtype=float)
    out: list[TailScanPoint] = []
    for u_ids in np.asarray(u_grid, dtype=float):
        u_log = math.log(u_ids)
        tail = y[y > u_log]
        if len(tail) < min_points:
            raise EstimationError(
                f"truncation {u_ids:g} leaves {len(tail)} points, need >= {min_points}"
            )
        nu = float(np.max(tail)) if nu0 is None else nu0
        t0 = np.zeros(len(tail))

        def nll(theta: np.ndarray) -> float:
            dyn = SeverityDynamics(alpha0=math.exp(theta[0]), u=u_ids, nu0=nu)
            return -_dte_loglik(tail, t0, dyn)

        alpha_mom = 1.0 / float(np.mean(tail - u_log))
        res = minimize_restarted(nll, [math.log(alpha_mom)], restarts=3, seed=0)
        alpha = math.exp(res.x[0])
        span = nu - u_log
        e = math.exp(-alpha * span)
        fisher = 1.0 / alpha**2 - span**2 * e / (1.0 - e) ** 2
        se = 1.0 / math.sqrt(len(tail) * max(fisher, 1e-12))
        out.append(TailScanPoint(u=float(u_ids), alpha=alpha, se=se, n=len(tail)))
    return out
