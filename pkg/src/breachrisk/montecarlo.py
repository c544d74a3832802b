"""Shared simulation engine: synthetic catalogs, bootstrap SEs, null p-values.

Everything here is deterministic given a 64-bit master seed.  Repetitions
draw from independent child streams spawned off the master seed
(``numpy.random.SeedSequence``), so results do not depend on execution
order and individual repetitions can be reproduced in isolation.

Standard errors are parametric-bootstrap: simulate from the fitted model,
refit, and take per-parameter standard deviations across repetitions.
Refits that fail to converge are dropped and counted; more than 10%
drops aborts, since the standard errors would then be untrustworthy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Callable, Protocol, Sequence

import numpy as np

from ._optim import ConvergenceError
from .catalog import DAYS_PER_YEAR, DEFAULT_EPOCH, BreachCatalog, BreachEvent
from .dynamics import SeverityDynamics

__all__ = [
    "SimSpec",
    "BootstrapResult",
    "simulate_catalog",
    "simulate_event_times",
    "bootstrap_se",
    "null_pvalue",
    "spawn_rngs",
]


class RateLike(Protocol):
    def annual_rate(self, t: float) -> float: ...


@dataclass(frozen=True)
class SimSpec:
    """Generative spec for a synthetic catalog.

    ``rate`` is either a constant annual event rate or a rate model with
    an ``annual_rate(t)`` line (events/year at ``t`` years past the
    epoch).  Severity sizes are drawn from the time-varying truncated
    Pareto ``severity`` at each event's time.
    """

    rate: float | RateLike
    severity: SeverityDynamics
    horizon: float
    seed: int
    n_rep: int = 1000
    epoch: date = DEFAULT_EPOCH

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_rep < 1:
            raise ValueError(f"n_rep must be >= 1, got {self.n_rep}")
        if not self.severity.alpha_positive_over(0.0, self.horizon):
            raise ValueError("severity alpha(t) must stay positive over the horizon")


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent child generators derived from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def simulate_event_times(
    rate: float | RateLike, horizon: float, rng: np.random.Generator
) -> np.ndarray:
    """Poisson-process event times on ``[0, horizon)`` in years.

    Constant rates sample counts directly; rate models are thinned
    against the maximum of their (monotone linear) rate line over the
    horizon.
    """
    if isinstance(rate, (int, float)):
        lam_max = lam_fun = None
        total = float(rate) * horizon
        if total < 0:
            raise ValueError("rate must be non-negative")
        n = rng.poisson(total)
        times = np.sort(rng.random(n) * horizon)
        return times
    lam_fun = rate.annual_rate
    lam_max = max(lam_fun(0.0), lam_fun(horizon))
    if lam_max <= 0:
        return np.array([])
    n = rng.poisson(lam_max * horizon)
    times = np.sort(rng.random(n) * horizon)
    keep = rng.random(n) * lam_max < np.array([lam_fun(t) for t in times])
    return times[keep]


def simulate_catalog(spec: SimSpec) -> BreachCatalog:
    """Draw one synthetic catalog; bit-identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    times = simulate_event_times(spec.rate, spec.horizon, rng)
    if len(times) == 0:
        return BreachCatalog((), epoch=spec.epoch)
    log_sizes = spec.severity.sample_log_sizes(times, rng)
    # sizes are id counts: round up so every draw stays strictly above u
    sizes = np.ceil(np.exp(log_sizes)).astype(np.int64)
    events = [
        BreachEvent(
            time=spec.epoch + timedelta(days=int(math.floor(t * DAYS_PER_YEAR))),
            size=int(s),
        )
        for t, s in zip(times, sizes)
    ]
    return BreachCatalog.from_events(events, epoch=spec.epoch)


@dataclass(frozen=True)
class BootstrapResult:
    """Per-parameter bootstrap standard errors plus the raw refit draws."""

    se: np.ndarray
    estimates: np.ndarray  # (n_kept, n_params), in repetition order
    n_rep: int
    n_dropped: int

    def __post_init__(self) -> None:
        if self.n_rep >= 2 and self.n_dropped > 0.10 * self.n_rep:
            raise ConvergenceError(
                f"bootstrap dropped {self.n_dropped}/{self.n_rep} repetitions; "
                "standard errors would be unreliable"
            )


def bootstrap_se(
    simulate: Callable[[np.random.Generator], object],
    refit: Callable[[object], Sequence[float]],
    n_rep: int,
    seed: int,
) -> BootstrapResult:
    """Parametric-bootstrap standard errors.

    ``simulate(rng)`` draws one synthetic dataset from the fitted model;
    ``refit(data)`` returns the parameter vector re-estimated on it.
    Non-convergent refits are dropped and counted.  With ``n_rep == 1``
    the SE is degenerate (zero) and a warning is attached by the caller's
    judgement; we simply return the zero vector.
    """
    rngs = spawn_rngs(seed, n_rep)
    kept: list[np.ndarray] = []
    dropped = 0
    for rng in rngs:
        data = simulate(rng)
        try:
            kept.append(np.asarray(refit(data), dtype=float))
        except (ConvergenceError, ValueError, FloatingPointError):
            dropped += 1
    if not kept:
        raise ConvergenceError(f"all {n_rep} bootstrap refits failed")
    estimates = np.vstack(kept)
    se = estimates.std(axis=0, ddof=1) if len(kept) > 1 else np.zeros(estimates.shape[1])
    return BootstrapResult(se=se, estimates=estimates, n_rep=n_rep, n_dropped=dropped)


def null_pvalue(
    simulate_null: Callable[[np.random.Generator], object],
    statistic: Callable[[object], float],
    observed: float,
    n_rep: int,
    seed: int,
) -> float:
    """Two-sided Monte-Carlo p-value with add-one smoothing.

    Fraction of null-simulated ``|statistic|`` at or above ``|observed|``,
    smoothed as ``(k+1)/(n_rep+1)`` so p is never exactly 0 or 1... except
    that k == n_rep still yields 1; callers treating p == 1 as "no
    evidence" is the intended reading there.
    """
    rngs = spawn_rngs(seed, n_rep)
    k = 0
    dropped = 0
    for rng in rngs:
        data = simulate_null(rng)
        try:
            stat = statistic(data)
        except (ConvergenceError, ValueError, FloatingPointError):
            dropped += 1
            continue
        if abs(stat) >= abs(observed):
            k += 1
    n_eff = n_rep - dropped
    if n_eff <= 0:
        raise ConvergenceError("all null simulations failed")
    if dropped > 0.10 * n_rep:
        raise ConvergenceError(f"null simulation dropped {dropped}/{n_rep} repetitions")
    return (k + 1) / (n_eff + 1)
