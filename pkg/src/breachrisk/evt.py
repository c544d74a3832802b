"""Peaks-over-threshold estimation of the log-size tail and its endpoint.

The GPD is fitted to log-size exceedances above a threshold ``u`` under
four scale parameterizations:

* ``M0`` -- unbounded tail, ``xi > 0``, constant scale.
* ``M1`` -- finite constant log-maximum: ``xi < 0``, ``beta(t) = beta0``.
* ``M2`` -- linearly growing log-maximum: ``beta(t) = beta0 + beta1*t``.
* ``M3`` -- logarithmically growing log-maximum:
            ``beta(t) = beta0 + beta1*ln(t)`` (one-day shift at t=0).

Likelihoods for short tails are capped away from the degenerate optimum:
the implied endpoint at every observation's own time must clear that
observation by a small margin, which for constant-scale models reduces
to "endpoint above the sample maximum".  Slope models seed their search
with the constant-scale optimum so nested log-likelihoods stay monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.stats import chi2

from ._optim import minimize_restarted
from .catalog import BreachCatalog
from .dynamics import T_LOG_SHIFT
from .montecarlo import bootstrap_se, null_pvalue
from .severity import DtpFit, EstimationError, SeverityModel

__all__ = [
    "EvtModel",
    "GpdFit",
    "fit_pot",
    "endpoint_curve",
    "EndpointCurve",
    "stability_scan",
    "StabilityScan",
    "lrt",
    "endpoint_conversion",
]

_ENDPOINT_MARGIN = 1e-6
_MIN_EXCEED = 10


class EvtModel(str, Enum):
    M0 = "M0"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"


_HAS_SLOPE = (EvtModel.M2, EvtModel.M3)
_N_FREE = {EvtModel.M0: 2, EvtModel.M1: 2, EvtModel.M2: 3, EvtModel.M3: 3}


@dataclass(frozen=True)
class GpdFit:
    """Fitted GPD tail with time-parameterized scale."""

    model: EvtModel
    u: float            # threshold, log-id units
    n_exceed: int
    xi: float
    beta0: float
    beta1: float
    loglik: float
    t_span: tuple[float, float]
    xi_se: float | None = None
    beta0_se: float | None = None
    beta1_se: float | None = None
    beta1_p: float | None = None
    converged: bool = True
    seed: int | None = None

    def beta(self, t):
        t = np.asarray(t, dtype=float)
        if self.model is EvtModel.M2:
            return self.beta0 + self.beta1 * t
        if self.model is EvtModel.M3:
            return self.beta0 + self.beta1 * np.log(t + T_LOG_SHIFT)
        return np.full_like(t, self.beta0)

    def endpoint(self, t):
        """Log-size endpoint path ``nu(t) = u - beta(t)/xi`` (xi < 0 only)."""
        if self.xi >= 0:
            raise EstimationError("endpoint is undefined for xi >= 0 (unbounded tail)")
        out = self.u - self.beta(t) / self.xi
        return out if np.ndim(out) else float(out)

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "u": self.u,
            "n_exceed": self.n_exceed,
            "xi": self.xi,
            "xi_se": self.xi_se,
            "beta0": self.beta0,
            "beta0_se": self.beta0_se,
            "beta1": self.beta1 if self.model in _HAS_SLOPE else None,
            "beta1_se": self.beta1_se,
            "beta1_p": self.beta1_p,
            "loglik": self.loglik,
        }


def _beta_path(model: EvtModel, beta0: float, beta1: float, t: np.ndarray) -> np.ndarray:
    if model is EvtModel.M2:
        return beta0 + beta1 * t
    if model is EvtModel.M3:
        return beta0 + beta1 * np.log(t + T_LOG_SHIFT)
    return np.full_like(t, beta0)


def _gpd_loglik(z: np.ndarray, t: np.ndarray, model: EvtModel,
                xi: float, beta0: float, beta1: float, z_margin: np.ndarray) -> float:
    """Penalized GPD log-likelihood; -inf outside the feasible region.

    ``z`` are exceedances, ``z_margin`` the per-observation endpoint
    floor (z + margin) that keeps short-tailed likelihoods bounded.
    """
    beta = _beta_path(model, beta0, beta1, t)
    if np.any(beta <= 0):
        return -math.inf
    if abs(xi) < 1e-9:
        return float(np.sum(-np.log(beta) - z / beta))
    w = 1.0 + xi * z / beta
    if np.any(w <= 0):
        return -math.inf
    if xi < 0 and np.any(-beta / xi < z_margin):
        return -math.inf  # implied endpoint too close to an observation
    return float(np.sum(-np.log(beta) - (1.0 + 1.0 / xi) * np.log(w)))


def _moment_start(z: np.ndarray) -> tuple[float, float]:
    """Probability-weighted moment-style initial (xi, beta)."""
    m, s2 = float(np.mean(z)), float(np.var(z))
    if s2 <= 0:
        return -0.3, max(m, 1e-3)
    xi0 = -0.5 * (m * m / s2 - 1.0)
    beta0 = 0.5 * m * (m * m / s2 + 1.0)
    return float(np.clip(xi0, -0.9, 0.9)), max(beta0, 1e-3)


def _fit_gpd_core(
    z: np.ndarray,
    t: np.ndarray,
    model: EvtModel,
    seed: int,
    restarts: int = 5,
    warm: np.ndarray | None = None,
    fast: bool = False,
) -> tuple[float, float, float, float, bool]:
    """Point estimate; returns (xi, beta0, beta1, loglik, converged)."""
    z_margin = z + _ENDPOINT_MARGIN
    has_slope = model in _HAS_SLOPE
    sign = 1.0 if model is EvtModel.M0 else -1.0

    def unpack(theta: np.ndarray) -> tuple[float, float, float]:
        xi = sign * math.exp(theta[0])
        beta0 = math.exp(theta[1])
        beta1 = theta[2] if has_slope else 0.0
        return xi, beta0, beta1

    def nll(theta: np.ndarray) -> float:
        return -_gpd_loglik(z, t, model, *unpack(theta), z_margin)

    xi_m, b_m = _moment_start(z)
    xi0 = max(abs(xi_m), 0.05)
    if sign < 0:
        # keep the primary start feasible: constant-scale endpoint must
        # clear the largest exceedance by a safe margin
        b_m = max(b_m, xi0 * (float(np.max(z)) + 0.5))
    x0 = [math.log(xi0), math.log(b_m)] + ([0.0] if has_slope else [])
    extra = [warm] if warm is not None else []
    tols = {"xatol": 1e-6, "fatol": 1e-9} if fast else {}
    res = minimize_restarted(nll, x0, restarts=restarts, seed=seed, extra_starts=extra, **tols)
    xi, beta0, beta1 = unpack(res.x)
    return xi, beta0, beta1, -res.fun, res.converged


def fit_pot(
    catalog: BreachCatalog,
    u: float,
    model: EvtModel | str,
    n_boot: int = 1000,
    seed: int = 0,
    slope_pvalue: bool = True,
) -> GpdFit:
    """POT fit of the chosen scale model to log-size exceedances above ``u``.

    ``u`` is in log-id units.  Standard errors come from a parametric
    bootstrap at the observed event times; the slope p-value refits the
    slope model on catalogs simulated under the fitted constant-scale
    null.  ``n_boot = 0`` skips both; ``slope_pvalue = False`` skips just
    the null simulation.
    """
    model = EvtModel(model)
    y, t_all = catalog.log_sizes_and_times()
    mask = y > u
    z, t = y[mask] - u, t_all[mask]
    if len(z) < _MIN_EXCEED:
        raise EstimationError(f"only {len(z)} exceedances above u={u:g}, need >= {_MIN_EXCEED}")

    warm = None
    if model in _HAS_SLOPE:
        xi_c, b_c, _, _, _ = _fit_gpd_core(z, t, EvtModel.M1, seed)
        warm = np.array([math.log(abs(xi_c)), math.log(b_c), 0.0])

    xi, beta0, beta1, loglik, converged = _fit_gpd_core(z, t, model, seed, warm=warm)
    fit = GpdFit(
        model=model, u=u, n_exceed=len(z), xi=xi, beta0=beta0, beta1=beta1,
        loglik=loglik, t_span=(float(np.min(t)), float(np.max(t))),
        converged=converged, seed=seed,
    )
    if n_boot <= 0:
        return fit
    return _attach_uncertainty(fit, z, t, n_boot, seed, slope_pvalue)


def _simulate_exceedances(
    xi: float, beta: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    v = rng.random(len(beta))
    if abs(xi) < 1e-9:
        return -beta * np.log1p(-v)
    return beta / xi * np.expm1(-xi * np.log1p(-v))


def _attach_uncertainty(fit: GpdFit, z: np.ndarray, t: np.ndarray, n_boot: int, seed: int,
                        slope_pvalue: bool = True) -> GpdFit:
    model = fit.model
    has_slope = model in _HAS_SLOPE
    beta_hat = np.asarray(fit.beta(t), dtype=float)
    warm_list = [math.log(abs(fit.xi)), math.log(fit.beta0)] + ([fit.beta1] if has_slope else [])
    warm = np.array(warm_list)

    def refit(zz: np.ndarray) -> list[float]:
        xi, b0, b1, _, _ = _fit_gpd_core(zz, t, model, seed, restarts=1, warm=warm, fast=True)
        return [xi, b0, b1]

    boot = bootstrap_se(
        lambda rng: _simulate_exceedances(fit.xi, beta_hat, rng),
        refit,
        n_rep=n_boot,
        seed=seed,
    )
    fit = replace(
        fit,
        xi_se=float(boot.se[0]),
        beta0_se=float(boot.se[1]),
        beta1_se=float(boot.se[2]) if has_slope else None,
    )
    if has_slope and slope_pvalue:
        xi_n, b_n, _, _, _ = _fit_gpd_core(z, t, EvtModel.M1, seed)
        beta_null = np.full_like(t, b_n)
        p = null_pvalue(
            lambda rng: _simulate_exceedances(xi_n, beta_null, rng),
            lambda zz: refit(zz)[2],
            observed=fit.beta1,
            n_rep=n_boot,
            seed=seed + 1,
        )
        fit = replace(fit, beta1_p=p)
    return fit


@dataclass(frozen=True)
class EndpointCurve:
    """Endpoint path ``nu(t)`` with, for M3, the implied size-domain growth exponent."""

    times: np.ndarray
    nu_log: np.ndarray
    growth_exponent: float | None  # -beta1/xi; exp(nu(t)) ~ t**this for M3


def endpoint_curve(fit: GpdFit, times) -> EndpointCurve:
    """Evaluate the fitted maximum-log-size path at the given times."""
    times = np.asarray(times, dtype=float)
    nu = np.asarray(fit.endpoint(times), dtype=float)
    growth = -fit.beta1 / fit.xi if fit.model is EvtModel.M3 else None
    return EndpointCurve(times=times, nu_log=nu, growth_exponent=growth)


def endpoint_conversion(fit: GpdFit) -> tuple[float, float]:
    """(nu0, nu1) for the severity module's fixed-endpoint D2 model.

    ``nu0 = u - beta0/xi`` and ``nu1 = -beta1/xi``, computed from the
    fitted values rather than taken from any published table.
    """
    if fit.xi >= 0:
        raise EstimationError("endpoint conversion needs a finite-endpoint fit (xi < 0)")
    return fit.u - fit.beta0 / fit.xi, -fit.beta1 / fit.xi


@dataclass(frozen=True)
class StabilityScan:
    """Per-threshold fits plus the first threshold where the endpoint settles."""

    fits: list[GpdFit | None]
    errors: list[str | None]
    u_grid: np.ndarray
    recommended_u: float
    settled: bool  # False when no successive pair changed by < 10%


def stability_scan(
    catalog: BreachCatalog,
    u_grid,
    model: EvtModel | str,
    n_boot: int = 0,
    seed: int = 0,
) -> StabilityScan:
    """One fit per threshold; recommends the smallest threshold at which
    successive endpoint estimates change by less than 10%.

    Per-threshold failures are recorded, not raised, so one bad threshold
    does not abort the scan.  Endpoints are compared at the end of the
    observed span (the "current" maximum).
    """
    model = EvtModel(model)
    u_grid = np.asarray(u_grid, dtype=float)
    fits: list[GpdFit | None] = []
    errors: list[str | None] = []
    for u in u_grid:
        try:
            fits.append(fit_pot(catalog, float(u), model, n_boot=n_boot, seed=seed))
            errors.append(None)
        except (EstimationError, ValueError) as exc:
            fits.append(None)
            errors.append(str(exc))

    if len(u_grid) == 1:
        return StabilityScan(fits, errors, u_grid, float(u_grid[0]), settled=True)

    t_end = max((f.t_span[1] for f in fits if f is not None), default=0.0)

    def endpoint_at_end(f: GpdFit | None) -> float | None:
        if f is None or f.xi >= 0:
            return None
        return float(f.endpoint(t_end))

    nus = [endpoint_at_end(f) for f in fits]
    for i in range(len(u_grid) - 1):
        a, b = nus[i], nus[i + 1]
        if a is not None and b is not None and abs(b - a) < 0.10 * abs(a):
            return StabilityScan(fits, errors, u_grid, float(u_grid[i]), settled=True)
    return StabilityScan(fits, errors, u_grid, float(u_grid[-1]), settled=False)


# nested -> full pairs admitted by the likelihood-ratio test, with the
# chi-squared degrees of freedom conventionally used for each comparison
_LRT_PAIRS: dict[tuple[str, str], int] = {
    (EvtModel.M1.value, EvtModel.M2.value): 1,
    (EvtModel.M1.value, EvtModel.M3.value): 1,
    (SeverityModel.D0STAR.value, SeverityModel.D0.value): 1,
    (SeverityModel.D0.value, SeverityModel.D1.value): 1,
    (SeverityModel.D1.value, SeverityModel.D2.value): 1,
}


def lrt(nested: GpdFit | DtpFit, full: GpdFit | DtpFit) -> float:
    """Likelihood-ratio p-value for an admissible nested/full model pair.

    ``p = P(chi2_df >= 2*(ll_full - ll_nested))``.  The D1 -> D2
    comparison uses df=1 by convention (the endpoint-growth term is the
    single added feature even though D2's endpoint values arrive as fixed
    inputs); boundary hypotheses (e.g. finite versus infinite maximum)
    use the plain chi-squared reference, which may be conservative.
    """
    key = (nested.model.value, full.model.value)
    if key not in _LRT_PAIRS:
        raise ValueError(f"models {key[0]} -> {key[1]} are not an admissible nested pair")
    if full.loglik < nested.loglik - 1e-6:
        raise ValueError(
            f"full model log-likelihood {full.loglik:.6f} is below nested {nested.loglik:.6f}; "
            "refit before testing"
        )
    stat = max(2.0 * (full.loglik - nested.loglik), 0.0)
    return float(chi2.sf(stat, df=_LRT_PAIRS[key]))
