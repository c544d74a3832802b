"""Shared likelihood optimizer: restarted Nelder-Mead simplex descent.

Every ML fit in the package minimizes a penalized negative log-likelihood
(invalid parameter regions return ``+inf``) with the same derivative-free
simplex routine, run from several perturbed starting points to guard
against the local optima and boundary pathologies of short-tailed
likelihoods.  The simplex loop is implemented here directly: the
objectives are 1-3 dimensional and evaluated millions of times inside
bootstrap loops, where per-call overhead of a general-purpose wrapper
dominates the actual likelihood work.

Classic Nelder-Mead coefficients (reflection 1, expansion 2, contraction
1/2, shrink 1/2); convergence when the simplex diameter drops below
``xatol`` or the function spread below ``fatol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_RESTARTS = 5
DEFAULT_XATOL = 1e-8
DEFAULT_FATOL = 1e-10


class ConvergenceError(RuntimeError):
    """Raised when no restart produced a finite, converged optimum."""

    def __init__(self, message: str, trace: list[dict] | None = None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class OptimResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_restarts: int


def _clean(v: float) -> float:
    return math.inf if math.isnan(v) else v


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    xatol: float = DEFAULT_XATOL,
    fatol: float = DEFAULT_FATOL,
    maxiter: int | None = None,
) -> tuple[np.ndarray, float, bool]:
    """Minimize ``fun`` from ``x0``; returns ``(x, f, converged)``.

    ``+inf``/NaN objective values mark infeasible points and are handled
    by the ordinary simplex ordering.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    maxiter = maxiter or 400 * n

    sim = np.empty((n + 1, n))
    sim[0] = x0
    for i in range(n):
        v = x0.copy()
        v[i] += 0.05 * (1.0 + abs(v[i]))
        sim[i + 1] = v
    fv = np.array([_clean(fun(v)) for v in sim])

    converged = False
    for _ in range(maxiter):
        order = np.argsort(fv, kind="stable")
        sim, fv = sim[order], fv[order]
        diameter = np.max(np.abs(sim[1:] - sim[0]))
        spread = fv[-1] - fv[0]
        # a simplex collapsed against an infeasibility wall (non-finite
        # spread) is accepted on the diameter criterion alone
        if diameter < xatol and (not math.isfinite(spread) or spread < fatol):
            converged = True
            break

        centroid = sim[:-1].mean(axis=0)
        xr = 2.0 * centroid - sim[-1]
        fr = _clean(fun(xr))
        if fr < fv[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = _clean(fun(xe))
            if fe < fr:
                sim[-1], fv[-1] = xe, fe
            else:
                sim[-1], fv[-1] = xr, fr
        elif fr < fv[-2]:
            sim[-1], fv[-1] = xr, fr
        else:
            if fr < fv[-1]:  # outside contraction
                xc = centroid + 0.5 * (xr - centroid)
                fc = _clean(fun(xc))
                accept = fc <= fr
            else:  # inside contraction
                xc = centroid - 0.5 * (centroid - sim[-1])
                fc = _clean(fun(xc))
                accept = fc < fv[-1]
            if accept:
                sim[-1], fv[-1] = xc, fc
            else:  # shrink toward the best vertex
                sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
                fv[1:] = [_clean(fun(v)) for v in sim[1:]]

    best = int(np.argmin(fv))
    return sim[best], float(fv[best]), converged


def minimize_restarted(
    fun: Callable[[np.ndarray], float],
    x0: Sequence[float],
    *,
    restarts: int = DEFAULT_RESTARTS,
    spread: float = 0.3,
    seed: int = 0,
    extra_starts: Sequence[Sequence[float]] = (),
    xatol: float = DEFAULT_XATOL,
    fatol: float = DEFAULT_FATOL,
    maxiter: int | None = None,
) -> OptimResult:
    """Minimize ``fun`` by Nelder-Mead from ``x0`` plus perturbed restarts.

    ``restarts`` counts primary starting points: ``x0`` itself plus
    perturbations by centered Gaussian noise of scale
    ``spread * (1 + |x0|)`` drawn from a generator seeded with ``seed``,
    so the whole fit is reproducible.  ``extra_starts`` (e.g. warm starts
    from a nested model) are tried as well.  The best finite optimum
    across starts wins.
    """
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)
    starts = [x0] + [np.asarray(s, dtype=float) for s in extra_starts]
    while len(starts) < restarts + len(extra_starts):
        starts.append(x0 + rng.normal(scale=spread * (1.0 + np.abs(x0))))

    best_x, best_f, best_conv = None, math.inf, False
    trace = []
    for s in starts:
        if not math.isfinite(_clean(fun(s))):
            # nudge infeasible starts toward x0 before giving up on them
            for shrink in (0.5, 0.25, 0.1, 0.02):
                cand = x0 + shrink * (s - x0)
                if math.isfinite(_clean(fun(cand))):
                    s = cand
                    break
            else:
                continue
        x, f, conv = nelder_mead(fun, s, xatol=xatol, fatol=fatol, maxiter=maxiter)
        trace.append({"start": np.asarray(s).tolist(), "fun": f, "converged": conv})
        if math.isfinite(f) and f < best_f:
            best_x, best_f, best_conv = x, f, conv
    if best_x is None:
        raise ConvergenceError("optimizer found no finite optimum from any start", trace)
    return OptimResult(x=best_x, fun=best_f, converged=best_conv, n_restarts=len(starts))
