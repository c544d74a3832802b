"""Event-rate statistics and the identity-link Poisson trend model.

Monthly counts are binned on calendar months with zeros filled in;
partial months at either end of the window are dropped rather than
prorated.  The trend model is a Poisson GLM with identity link,
``mu_m = a + b * (m/12)``, fitted by constrained ML (the mean must stay
positive across the observed span; parameter vectors violating that are
rejected outright during the simplex search).  Wald standard errors and
the two-sided slope p-value come from the expected information matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
from scipy.stats import norm

from ._optim import minimize_restarted
from .catalog import BreachCatalog
from .severity import EstimationError

__all__ = ["RateModel", "MonthlyCounts", "monthly_counts", "fit_rate_glm"]

_MIN_MONTHS = 24


@dataclass(frozen=True)
class MonthlyCounts:
    """Zero-filled calendar-month counts; ``months`` hold each month's first day."""

    months: tuple[date, ...]
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.months)

    def t_years(self) -> np.ndarray:
        """Month start offsets in years from the first month in the series."""
        return np.arange(len(self.months)) / 12.0

    def annual_totals(self) -> dict[int, int]:
        """Calendar-year totals over complete years only (all 12 months present)."""
        per_year: dict[int, list[int]] = {}
        for m, c in zip(self.months, self.counts):
            per_year.setdefault(m.year, []).append(int(c))
        return {y: sum(cs) for y, cs in per_year.items() if len(cs) == 12}


def _month_add(d: date, k: int) -> date:
    y, m = divmod(d.year * 12 + (d.month - 1) + k, 12)
    return date(y, m + 1, 1)


def monthly_counts(
    catalog: BreachCatalog,
    window: tuple[date, date] | None = None,
) -> MonthlyCounts:
    """Events per calendar month across the window, zero-filled.

    A month enters the series only if the window covers it entirely, so a
    window ending mid-month drops that trailing partial month (and
    likewise a mid-month start drops the leading one).  Without an
    explicit window the events' own first/last dates are used.
    """
    if window is None:
        if not catalog.events:
            raise ValueError("cannot infer a window from an empty catalog")
        window = (catalog.events[0].time, catalog.events[-1].time)
    start, end = window
    if start > end:
        raise ValueError(f"empty window: {start} > {end}")

    first = date(start.year, start.month, 1)
    if first < start:
        first = _month_add(first, 1)
    last = date(end.year, end.month, 1)
    if end < _month_add(last, 1) - timedelta(days=1):  # window ends mid-month
        last = _month_add(last, -1)

    months: list[date] = []
    m = first
    while m <= last:
        months.append(m)
        m = _month_add(m, 1)
    if not months:
        raise ValueError("window does not cover a single complete calendar month")

    index = {m: i for i, m in enumerate(months)}
    counts = np.zeros(len(months), dtype=int)
    for e in catalog.events:
        key = date(e.time.year, e.time.month, 1)
        if key in index:
            counts[index[key]] += 1
    return MonthlyCounts(months=tuple(months), counts=counts)


@dataclass(frozen=True)
class RateModel:
    """Rate summary statistics plus the fitted identity-link trend line.

    ``glm_intercept`` is events/month at the series start; ``glm_slope``
    is events/month gained per year.  ``t = 0`` is the first month in the
    fitted series.
    """

    monthly_mean: float
    monthly_sd: float
    annual_mean: float
    annual_sd: float
    glm_intercept: float
    glm_intercept_se: float
    glm_slope: float
    glm_slope_se: float
    glm_slope_p: float
    n_months: int
    loglik: float
    category: str = "ALL"

    def monthly_rate(self, t: float) -> float:
        return self.glm_intercept + self.glm_slope * t

    def annual_rate(self, t: float) -> float:
        return 12.0 * self.monthly_rate(t)

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "n_months": self.n_months,
            "monthly_mean": self.monthly_mean,
            "monthly_sd": self.monthly_sd,
            "annual_mean": self.annual_mean,
            "annual_sd": self.annual_sd,
            "glm_intercept": self.glm_intercept,
            "glm_intercept_se": self.glm_intercept_se,
            "glm_slope": self.glm_slope,
            "glm_slope_se": self.glm_slope_se,
            "glm_slope_p": self.glm_slope_p,
            "loglik": self.loglik,
        }


def fit_rate_glm(counts: MonthlyCounts, category: str = "ALL") -> RateModel:
    """Identity-link Poisson ML fit of a linear monthly-rate trend.

    Needs at least 24 months and at least one event.  Standard errors are
    Wald, from the expected information ``sum(x x' / mu)`` at the optimum.
    """
    y = np.asarray(counts.counts, dtype=float)
    n = len(y)
    if n < _MIN_MONTHS:
        raise EstimationError(f"need at least {_MIN_MONTHS} months of counts, got {n}")
    if np.all(y == 0):
        raise EstimationError("all-zero count series cannot identify a rate")
    t = counts.t_years()

    def nll(theta: np.ndarray) -> float:
        mu = theta[0] + theta[1] * t
        if np.any(mu <= 0):
            return math.inf
        return float(np.sum(mu - y * np.log(mu)))

    slope0, icpt0 = np.polyfit(t, y, 1)
    x0 = [max(icpt0, 0.5 * float(np.mean(y)), 1e-3), slope0]
    if nll(np.asarray(x0)) == math.inf:
        x0 = [float(np.mean(y)), 0.0]
    res = minimize_restarted(nll, x0, seed=0)
    a, b = float(res.x[0]), float(res.x[1])

    mu = a + b * t
    design = np.column_stack([np.ones(n), t])
    info = design.T @ (design / mu[:, None])
    cov = np.linalg.inv(info)
    se_a, se_b = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    z = b / se_b if se_b > 0 else 0.0
    p = 2.0 * float(norm.sf(abs(z)))

    annual = np.array(sorted(counts.annual_totals().values()), dtype=float)
    if len(annual) >= 2:
        annual_mean, annual_sd = float(np.mean(annual)), float(np.std(annual, ddof=1))
    elif len(annual) == 1:
        annual_mean, annual_sd = float(annual[0]), 0.0
    else:
        annual_mean, annual_sd = 12.0 * float(np.mean(y)), float("nan")

    loglik = float(np.sum(-mu + y * np.log(np.where(mu > 0, mu, 1.0))
                          - [math.lgamma(v + 1) for v in y]))
    return RateModel(
        monthly_mean=float(np.mean(y)),
        monthly_sd=float(np.std(y, ddof=1)),
        annual_mean=annual_mean,
        annual_sd=annual_sd,
        glm_intercept=a,
        glm_intercept_se=se_a,
        glm_slope=b,
        glm_slope_se=se_b,
        glm_slope_p=p,
        n_months=n,
        loglik=loglik,
        category=category,
    )
