"""Cumulative-risk curves and compound-process forecasts.

The annual total of breached ids is a compound sum
``Y_t = X_1 + ... + X_{N_t}`` with severity and count independent, so

    E[Y_t]   = E[X_t] E[N_t]
    Var(Y_t) = E[N_t] Var(X_t) + E[X_t]^2 Var(N_t)

with the severity moments taken from the truncated-Pareto law frozen at
mid-year (second-order accurate for the drifting models).  Cumulative
series are anchored at an observed (year, total) pair and accumulate
variance across years under independence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dynamics import SeverityDynamics
from .distributions import dtp_moments
from .severity import DtpFit, EstimationError

__all__ = [
    "Forecast",
    "forecast",
    "expected_cumsum_curve",
    "CumsumCurve",
    "clt_crossover",
    "superlinear_reference",
    "DEFAULT_EPOCH_YEAR",
]

DEFAULT_EPOCH_YEAR = 2007


def _severity_moments(dyn: SeverityDynamics, t: float) -> tuple[float, float]:
    """(mean, variance) of the severity law at time ``t``; errors on infinite moments."""
    p = dyn.dtp_at(t)
    mean, second = dtp_moments(p)
    if math.isinf(mean) or math.isinf(second):
        raise EstimationError(
            f"severity at t={t:g} has infinite moments (alpha={p.alpha:g}, nu={p.nu:g}); "
            "projections need a finite endpoint"
        )
    return mean, second - mean * mean


@dataclass(frozen=True)
class Forecast:
    """One projected calendar year of the compound process."""

    year: int
    annual_mean: float
    annual_sd: float
    cumulative_mean: float
    cumulative_sd: float
    rate_mean: float
    rate_var: float
    model: str

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "annual_mean": self.annual_mean,
            "annual_sd": self.annual_sd,
            "cumulative_mean": self.cumulative_mean,
            "cumulative_sd": self.cumulative_sd,
            "rate_mean": self.rate_mean,
            "rate_var": self.rate_var,
            "model": self.model,
        }


def forecast(
    fit: DtpFit | SeverityDynamics,
    rate_mean: float,
    rate_var: float,
    years: Iterable[int],
    anchor: tuple[int, float],
    epoch_year: int = DEFAULT_EPOCH_YEAR,
) -> list[Forecast]:
    """Per-year compound-process projections anchored at an observed total.

    ``anchor`` is ``(year, cumulative ids through that year)``; forecast
    years must follow it.  Severity moments are evaluated at mid-year
    (``t = year - epoch_year + 0.5``).
    """
    if rate_mean < 0 or rate_var < 0:
        raise ValueError("rate mean and variance must be non-negative")
    dyn = fit.dynamics() if isinstance(fit, DtpFit) else fit
    label = fit.model.value if isinstance(fit, DtpFit) else "custom"
    anchor_year, anchor_total = anchor

    out: list[Forecast] = []
    cum_mean, cum_var = float(anchor_total), 0.0
    for year in sorted(years):
        if year <= anchor_year:
            raise ValueError(f"forecast year {year} does not follow anchor year {anchor_year}")
        t_mid = year - epoch_year + 0.5
        if t_mid <= 0:
            raise ValueError(f"forecast year {year} precedes the model epoch {epoch_year}")
        mean_x, var_x = _severity_moments(dyn, t_mid)
        annual_mean = mean_x * rate_mean
        annual_var = rate_mean * var_x + mean_x**2 * rate_var
        cum_mean += annual_mean
        cum_var += annual_var
        out.append(
            Forecast(
                year=year,
                annual_mean=annual_mean,
                annual_sd=math.sqrt(annual_var),
                cumulative_mean=cum_mean,
                cumulative_sd=math.sqrt(cum_var),
                rate_mean=rate_mean,
                rate_var=rate_var,
                model=label,
            )
        )
    return out


@dataclass(frozen=True)
class CumsumCurve:
    """Expected cumulative sum against event index, with standard deviations."""

    index: np.ndarray      # 1..n
    mean: np.ndarray
    sd: np.ndarray
    rate_mean: float       # events/year used to map index -> time


def expected_cumsum_curve(
    fit: DtpFit | SeverityDynamics, n_events: int, rate_mean: float
) -> CumsumCurve:
    """Running ``E[C_i]`` and ``sd(C_i)`` for ``i = 1..n_events``.

    Event ``i`` is mapped to time ``t_i = i / rate_mean`` so the drifting
    models pick up their per-event severity moments; summed variances
    assume independent severities.
    """
    if rate_mean <= 0:
        raise ValueError("rate_mean must be positive to map event index to time")
    dyn = fit.dynamics() if isinstance(fit, DtpFit) else fit
    idx = np.arange(1, n_events + 1)
    if n_events == 0:
        return CumsumCurve(index=idx, mean=np.array([]), sd=np.array([]), rate_mean=rate_mean)
    means = np.empty(n_events)
    variances = np.empty(n_events)
    for k, i in enumerate(idx):
        m, v = _severity_moments(dyn, i / rate_mean)
        means[k], variances[k] = m, v
    return CumsumCurve(
        index=idx,
        mean=np.cumsum(means),
        sd=np.sqrt(np.cumsum(variances)),
        rate_mean=rate_mean,
    )


def clt_crossover(u: float, nu: float, alpha: float) -> float:
    """Sample size ``(nu/u)**alpha`` past which the cumulative sum grows linearly."""
    if not 0 < u <= nu:
        raise ValueError(f"need 0 < u <= nu, got u={u}, nu={nu}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return (nu / u) ** alpha


def superlinear_reference(u: float, alpha: float, n) -> np.ndarray | float:
    """Infinite-endpoint growth curve ``u * n**(1/alpha)`` for comparison plots."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    n = np.asarray(n, dtype=float)
    out = u * n ** (1.0 / alpha)
    return out if out.ndim else float(out)
