"""Command-line frontend.

Subcommands: ``summary | fit | project | simulate | diagnose``.  Outputs
are machine-readable JSON plus plot-data CSVs written under ``--out``,
with a human-readable table on stdout.  Exit codes: 0 success, 1 usage,
2 data problems, 3 estimation failures.  ``HEAVYTAIL_SEED`` overrides
``--seed`` when set, and every JSON artifact records the seed that
produced it so runs can be reproduced bit for bit.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

import numpy as np

from . import __version__
from ._optim import ConvergenceError
from .catalog import (
    BreachCatalog,
    CatalogError,
    filter_exceedances,
    parse_catalog,
    summarize,
    write_catalog,
)
from .dynamics import SeverityDynamics
from .evt import EvtModel, fit_pot, stability_scan
from .firmsize import Role, SizeSample, fit_lognormal_trunc, quantile_regression
from .frequency import fit_rate_glm, monthly_counts
from .montecarlo import SimSpec, simulate_catalog
from .projection import clt_crossover, expected_cumsum_curve, forecast, superlinear_reference
from .severity import (
    DtpFit,
    EstimationError,
    SeverityModel,
    alpha_tail_scan,
    fit_dte,
    transform_diagnostics,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3

SEED_ENV = "HEAVYTAIL_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


@dataclass
class RunConfig:
    """Resolved invocation: paths, windowing, seeding, output policy."""

    subcommand: str
    input: Path | None
    out: Path
    threshold: float
    epoch: date
    window: tuple[date | None, date | None]
    seed: int
    n_rep: int
    scale_1e8: bool


def _parse_date(s: str) -> date:
    return datetime.strptime(s, "%Y-%m-%d").date()


def _parse_window(s: str | None) -> tuple[date | None, date | None]:
    if not s:
        return (None, None)
    try:
        start_s, end_s = s.split(":")
        return (
            _parse_date(start_s) if start_s else None,
            _parse_date(end_s) if end_s else None,
        )
    except ValueError as exc:
        raise UsageError(f"bad --window {s!r}, expected START:END ISO dates") from exc


def build_parser() -> _Parser:
    p = _Parser(prog="breachrisk", description=__doc__)
    p.add_argument("--version", action="version", version=f"breachrisk {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("--input", required=True, help="catalog CSV path")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--threshold", type=float, default=5e4,
                        help="large-breach size threshold in ids (default 5e4)")
        sp.add_argument("--epoch", type=_parse_date, default=date(2007, 1, 1),
                        help="date mapped to t=0 (default 2007-01-01)")
        sp.add_argument("--window", type=str, default=None,
                        help="analysis window START:END (ISO dates)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--n-rep", type=int, default=1000,
                        help="bootstrap / null-simulation repetitions")
        sp.add_argument("--scale-1e8", action="store_true",
                        help="report forecast tables in units of 1e8 ids")

    sp = sub.add_parser("summary", help="catalog counts and totals")
    common(sp)

    sp = sub.add_parser("fit", help="estimate a model family")
    common(sp, needs_input=False)
    sp.add_argument("--input", default=None, help="catalog CSV path")
    sp.add_argument("--family", required=True,
                    choices=["evt", "severity", "frequency", "firmsize"])
    sp.add_argument("--model", default=None,
                    help="evt: M0..M3; severity: D0,D0*,D1,D2; firmsize: lognormal|quantile")
    sp.add_argument("--u-log", type=float, default=15.5,
                    help="EVT threshold on log sizes (default 15.5)")
    sp.add_argument("--u-grid", type=str, default=None,
                    help="stability-scan grid LO:HI:STEP on log sizes")
    sp.add_argument("--endpoint", type=str, default=None,
                    help="fixed D2 endpoint 'nu0,nu1' in log-id units")
    sp.add_argument("--evt-fit", type=str, default=None,
                    help="EVT fit JSON whose endpoint seeds the D2 severity fit")
    sp.add_argument("--sizes", type=str, default=None,
                    help="firm-size CSV (columns: mcap, role, optional sector)")
    sp.add_argument("--role", default="POPULATION", choices=[r.value for r in Role])
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--knot", type=float, default=None,
                    help="fixed changepoint for the quantile regression, in USD")

    sp = sub.add_parser("project", help="compound-process forecasts")
    common(sp, needs_input=False)
    sp.add_argument("--input", default=None, help="catalog CSV (for inline fit / anchor)")
    sp.add_argument("--fit", type=str, default=None, help="severity fit JSON from `fit`")
    sp.add_argument("--model", default="D0", help="severity model for an inline fit")
    sp.add_argument("--endpoint", type=str, default=None)
    sp.add_argument("--evt-fit", type=str, default=None)
    sp.add_argument("--rate", type=float, default=None, help="events/year")
    sp.add_argument("--rate-var", type=float, default=None, help="annual count variance")
    sp.add_argument("--years", type=str, default="2015:2019", help="first:last forecast year")
    sp.add_argument("--anchor", type=str, default=None,
                    help="'YEAR,TOTAL' cumulative anchor; default: computed from catalog")
    sp.add_argument("--n-events", type=int, default=None,
                    help="length of the expected-cumsum curve (default: catalog size)")

    sp = sub.add_parser("simulate", help="write a synthetic catalog CSV")
    common(sp, needs_input=False)
    sp.add_argument("--rate", type=float, required=True, help="events/year")
    sp.add_argument("--horizon", type=float, required=True, help="years")
    sp.add_argument("--alpha0", type=float, required=True)
    sp.add_argument("--alpha1", type=float, default=0.0)
    sp.add_argument("--nu0", type=float, default=math.inf, help="log-id endpoint intercept")
    sp.add_argument("--nu1", type=float, default=0.0, help="log-id endpoint ln-t slope")
    sp.add_argument("--out-file", type=str, default=None, help="catalog CSV path")

    sp = sub.add_parser("diagnose", help="stationarity transform, KS, tail scan")
    common(sp)
    sp.add_argument("--model", default="D1", help="severity model (D1 or D2)")
    sp.add_argument("--endpoint", type=str, default=None)
    sp.add_argument("--evt-fit", type=str, default=None)
    sp.add_argument("--scan-grid", type=str, default=None,
                    help="tail-scan thresholds LO:HI:N (ids, geometric)")
    return p


def _config_from(args: argparse.Namespace) -> RunConfig:
    seed = args.seed
    if os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return RunConfig(
        subcommand=args.subcommand,
        input=Path(args.input) if getattr(args, "input", None) else None,
        out=out,
        threshold=args.threshold,
        epoch=args.epoch,
        window=_parse_window(args.window),
        seed=seed,
        n_rep=args.n_rep,
        scale_1e8=bool(getattr(args, "scale_1e8", False)),
    )


def _write_json(path: Path, payload: dict) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(f"not JSON-serializable: {type(o)}")

    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=default) + "\n",
                    encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _load_filtered(cfg: RunConfig) -> BreachCatalog:
    if cfg.input is None:
        raise UsageError(f"{cfg.subcommand} needs --input CATALOG.csv")
    cat = parse_catalog(cfg.input, epoch=cfg.epoch)
    return filter_exceedances(cat, cfg.threshold, cfg.window)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_summary(cfg: RunConfig, args) -> int:
    cat = parse_catalog(cfg.input, epoch=cfg.epoch)
    s = summarize(cat, cfg.threshold)
    _write_json(cfg.out / "summary.json", {"seed": cfg.seed, **s.to_dict()})

    print(f"{'category':<12}{'n':>8}{'unknown':>9}{'>thr':>7}{'total ids':>16}{'total>thr':>16}")
    for name in ("US", "NON_US", "UNSPECIFIED", "ALL"):
        c = s.by_category[name]
        print(f"{name:<12}{c.n_total:>8}{c.n_unknown:>9}{c.n_above_threshold:>7}"
              f"{c.total_breach:>16}{c.total_breach_above:>16}")
    print(f"unknown-size fraction: {s.unknown_fraction:.3f} "
          f"(results are optimistic: unknown sizes are dropped, not imputed)")
    return EXIT_OK


def _parse_endpoint(args) -> tuple[float, float] | None:
    if args.endpoint:
        try:
            nu0_s, nu1_s = args.endpoint.split(",")
            return float(nu0_s), float(nu1_s)
        except ValueError as exc:
            raise UsageError(f"bad --endpoint {args.endpoint!r}, expected 'nu0,nu1'") from exc
    if args.evt_fit:
        payload = json.loads(Path(args.evt_fit).read_text())
        if payload.get("xi", 0) >= 0:
            raise EstimationError("EVT fit has xi >= 0: no finite endpoint to convert")
        xi, b0, b1 = payload["xi"], payload["beta0"], payload.get("beta1") or 0.0
        return payload["u"] - b0 / xi, -b1 / xi
    return None


def _grid_from(spec: str | None, u_log: float) -> np.ndarray:
    if spec is None:
        return np.round(np.arange(u_log - 1.1, u_log + 1.3 + 1e-9, 0.3), 6)
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
        return np.round(np.arange(lo, hi + 1e-9, step), 6)
    except ValueError as exc:
        raise UsageError(f"bad grid {spec!r}, expected LO:HI:STEP") from exc


def cmd_fit(cfg: RunConfig, args) -> int:
    if args.family == "evt":
        return _fit_evt(cfg, args)
    if args.family == "severity":
        return _fit_severity(cfg, args)
    if args.family == "frequency":
        return _fit_frequency(cfg, args)
    return _fit_firmsize(cfg, args)


def _fit_evt(cfg: RunConfig, args) -> int:
    model = args.model or "M1"
    if model not in [m.value for m in EvtModel]:
        raise UsageError(f"unknown EVT model {model!r}")
    cat = _load_filtered(cfg)
    u = args.u_log
    fit = fit_pot(cat, u, model, n_boot=cfg.n_rep, seed=cfg.seed)
    tag = model.replace("*", "star")
    _write_json(cfg.out / f"fit_evt_{tag}.json", {"seed": cfg.seed, **fit.to_dict()})

    grid = _grid_from(args.u_grid, u)
    scan = stability_scan(cat, grid, model, n_boot=0, seed=cfg.seed)
    t_end = fit.t_span[1]
    rows = []
    for g, f, err in zip(scan.u_grid, scan.fits, scan.errors):
        if f is None:
            rows.append([g, "", "", "", "", "", "", err])
        else:
            nu = f.endpoint(t_end) if f.xi < 0 else ""
            rows.append([g, f.n_exceed, f.xi, f.beta0,
                         f.beta1 if f.model in (EvtModel.M2, EvtModel.M3) else "",
                         f.loglik, nu, ""])
    _write_csv(cfg.out / "stability_scan.csv",
               ["u", "n_exceed", "xi", "beta0", "beta1", "loglik", "endpoint_at_end", "error"],
               rows)

    print(f"EVT {model} at u={u:g}: n={fit.n_exceed}  xi={fit.xi:.3f} ({fit.xi_se or float('nan'):.3f})  "
          f"beta0={fit.beta0:.3f} ({fit.beta0_se or float('nan'):.3f})  ll={fit.loglik:.2f}")
    if fit.model in (EvtModel.M2, EvtModel.M3):
        print(f"  beta1={fit.beta1:.3f} ({fit.beta1_se or float('nan'):.3f}), p={fit.beta1_p}")
    if fit.xi < 0:
        print(f"  endpoint at t={t_end:.2f}: {fit.endpoint(t_end):.3f} log ids "
              f"(= {math.exp(fit.endpoint(t_end)):.3e} ids)")
    print(f"  stability scan: recommended u = {scan.recommended_u:g} "
          f"({'settled' if scan.settled else 'not settled'})")
    return EXIT_OK


def _fit_severity(cfg: RunConfig, args) -> int:
    model = args.model or "D0"
    if model not in [m.value for m in SeverityModel]:
        raise UsageError(f"unknown severity model {model!r}")
    cat = _load_filtered(cfg)
    endpoint = _parse_endpoint(args)
    fit = fit_dte(cat, model, endpoint=endpoint, u=cfg.threshold,
                  n_boot=cfg.n_rep, seed=cfg.seed)
    tag = model.replace("*", "star")
    _write_json(cfg.out / f"fit_severity_{tag}.json", {"seed": cfg.seed, **fit.to_dict()})
    print(f"severity {model}: n={fit.n}  alpha0={fit.alpha0:.4f} ({fit.alpha0_se or float('nan'):.4f})  "
          f"ll={fit.loglik:.2f}")
    if fit.alpha1:
        print(f"  alpha1={fit.alpha1:.4f} ({fit.alpha1_se or float('nan'):.4f}), p={fit.alpha1_p}")
    if not math.isinf(fit.nu0):
        print(f"  nu0={fit.nu0:.4f} (max size {math.exp(fit.nu0):.3e} ids)")
    return EXIT_OK


def _fit_frequency(cfg: RunConfig, args) -> int:
    if cfg.input is None:
        raise UsageError("frequency fit needs --input CATALOG.csv")
    cat = parse_catalog(cfg.input, epoch=cfg.epoch)
    window = cfg.window if cfg.window != (None, None) else None
    results = []
    for name, predicate in (
        ("ALL", lambda e: True),
        ("US", lambda e: e.country_tag.value == "US"),
        ("NON_US", lambda e: e.country_tag.value == "NON_US"),
    ):
        sub = BreachCatalog(tuple(e for e in cat.events if predicate(e)), epoch=cat.epoch)
        sub = filter_exceedances(sub, cfg.threshold) if cfg.threshold > 0 else sub
        if not sub.events:
            continue
        counts = monthly_counts(sub, window)
        try:
            rm = fit_rate_glm(counts, category=name)
        except EstimationError:
            continue
        results.append(rm.to_dict())
        print(f"{name:<8} monthly {rm.monthly_mean:.2f} ({rm.monthly_sd:.2f})  "
              f"annual {rm.annual_mean:.1f} ({rm.annual_sd:.2f})  "
              f"glm {rm.glm_intercept:.2f} ({rm.glm_intercept_se:.2f}); "
              f"{rm.glm_slope:.3f} ({rm.glm_slope_se:.3f}), p={rm.glm_slope_p:.3f}")
    if not results:
        raise EstimationError("no category had enough data for a rate fit")
    _write_json(cfg.out / "fit_frequency.json", {"seed": cfg.seed, "categories": results})
    return EXIT_OK


def _fit_firmsize(cfg: RunConfig, args) -> int:
    model = args.model or "lognormal"
    if model == "lognormal":
        if not args.sizes:
            raise UsageError("firmsize lognormal fit needs --sizes CSV")
        values = _read_sizes(Path(args.sizes), args.role)
        fit = fit_lognormal_trunc(SizeSample(values, Role(args.role)),
                                  n_boot=cfg.n_rep, seed=cfg.seed)
        _write_json(cfg.out / f"fit_firmsize_lognormal_{args.role.lower()}.json", {
            "seed": cfg.seed,
            "role": args.role,
            "n": fit.n,
            "mu": fit.params.mu,
            "mu_se": fit.mu_se,
            "sigma": fit.params.sigma,
            "sigma_se": fit.sigma_se,
            "lower": fit.params.lower,
            "upper": fit.params.upper,
            "loglik": fit.loglik,
        })
        print(f"lognormal[{args.role}] n={fit.n}: mu={fit.params.mu:.3f} ({fit.mu_se or float('nan'):.3f})  "
              f"sigma={fit.params.sigma:.3f} ({fit.sigma_se or float('nan'):.3f})")
        return EXIT_OK
    if model == "quantile":
        if cfg.input is None:
            raise UsageError("quantile regression needs --input CATALOG.csv with mcap values")
        cat = parse_catalog(cfg.input, epoch=cfg.epoch)
        pairs = [(e.mcap, e.size) for e in cat.events
                 if e.mcap is not None and e.size is not None and e.size > cfg.threshold]
        if len(pairs) < 20:
            raise EstimationError(
                f"only {len(pairs)} events with both mcap and size above the threshold"
            )
        x = np.log([m for m, _ in pairs])
        y = np.log([s for _, s in pairs])
        knot = math.log(args.knot) if args.knot else None
        fit = quantile_regression(x, y, args.tau, knot=knot, n_boot=cfg.n_rep, seed=cfg.seed)
        _write_json(cfg.out / f"fit_firmsize_quantile_{args.tau:g}.json",
                    {"seed": cfg.seed, "n": len(pairs), **fit.to_dict()})
        print(f"quantile tau={args.tau:g}: slope={fit.slope:.3f} ({fit.slope_se or float('nan'):.3f}), "
              f"p={fit.slope_p}")
        return EXIT_OK
    raise UsageError(f"unknown firmsize model {model!r} (lognormal|quantile)")


def _read_sizes(path: Path, role: str) -> np.ndarray:
    if not path.exists():
        raise CatalogError(f"sizes file not found: {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "mcap" not in reader.fieldnames:
            raise CatalogError(f"{path}: expected a header with an 'mcap' column")
        has_role = "role" in (reader.fieldnames or [])
        for row in reader:
            if has_role and row.get("role", "").strip().upper() != role:
                continue
            raw = (row.get("mcap") or "").strip()
            if raw:
                out.append(float(raw))
    if not out:
        raise CatalogError(f"{path}: no usable mcap rows for role {role}")
    return np.array(out)


def _severity_fit_from(args, cfg: RunConfig) -> DtpFit:
    if args.fit:
        payload = json.loads(Path(args.fit).read_text())
        return DtpFit(
            model=SeverityModel(payload["model"]),
            alpha0=payload["alpha0"],
            alpha1=payload.get("alpha1") or 0.0,
            nu0=math.inf if payload.get("nu0") is None else payload["nu0"],
            nu1=payload.get("nu1") or 0.0,
            u=payload["u"],
            loglik=payload.get("loglik", float("nan")),
            n=payload.get("n", 0),
            t_span=(0.0, 0.0),
        )
    if not args.input:
        raise UsageError("project needs --fit FIT.json or --input CATALOG.csv")
    cat = _load_filtered(cfg)
    return fit_dte(cat, args.model, endpoint=_parse_endpoint(args), u=cfg.threshold,
                   n_boot=0, seed=cfg.seed)


def cmd_project(cfg: RunConfig, args) -> int:
    fit = _severity_fit_from(args, cfg)
    if math.isinf(fit.nu0):
        raise EstimationError("projections need a finite-endpoint severity model")

    cat = None
    if args.input:
        cat = _load_filtered(cfg)

    rate = args.rate
    rate_var = args.rate_var
    if (rate is None or rate_var is None) and cat is not None:
        counts = monthly_counts(cat, cfg.window if cfg.window != (None, None) else None)
        totals = list(counts.annual_totals().values())
        if len(totals) >= 2:
            rate = rate if rate is not None else float(np.mean(totals))
            rate_var = rate_var if rate_var is not None else float(np.var(totals, ddof=1))
    if rate is None:
        raise UsageError("no --rate given and none computable from --input")
    if rate_var is None:
        rate_var = rate  # Poisson fallback, documented in output

    try:
        y0, y1 = (int(v) for v in args.years.split(":"))
    except ValueError as exc:
        raise UsageError(f"bad --years {args.years!r}, expected FIRST:LAST") from exc

    if args.anchor:
        try:
            ay, total = args.anchor.split(",")
            anchor = (int(ay), float(total))
        except ValueError as exc:
            raise UsageError(f"bad --anchor {args.anchor!r}, expected 'YEAR,TOTAL'") from exc
    elif cat is not None:
        anchor_year = y0 - 1
        cutoff = date(anchor_year, 12, 31)
        observed = sum(e.size for e in cat.events if e.time <= cutoff and e.size is not None)
        anchor = (anchor_year, float(observed))
    else:
        raise UsageError("no --anchor given and none computable from --input")

    rows = forecast(fit, rate, rate_var, range(y0, y1 + 1), anchor,
                    epoch_year=cfg.epoch.year)
    scale = 1e8 if cfg.scale_1e8 else 1.0
    unit = " x1e8" if cfg.scale_1e8 else ""
    _write_json(cfg.out / f"forecast_{fit.model.value.replace('*', 'star')}.json", {
        "seed": cfg.seed,
        "model": fit.model.value,
        "rate_mean": rate,
        "rate_var": rate_var,
        "anchor": {"year": anchor[0], "cumulative": anchor[1]},
        "years": [f.to_dict() for f in rows],
    })
    _write_csv(cfg.out / "forecast.csv",
               ["model", "year", "annual_mean", "annual_sd", "cumulative_mean", "cumulative_sd"],
               [[fit.model.value, f.year, f.annual_mean / scale, f.annual_sd / scale,
                 f.cumulative_mean / scale, f.cumulative_sd / scale] for f in rows])

    n_events = args.n_events or (len(cat) if cat is not None else 800)
    curve = expected_cumsum_curve(fit, n_events, rate)
    alpha_now = fit.alpha0 if fit.alpha1 == 0 else fit.dynamics().alpha(rows[0].year - cfg.epoch.year)
    ref = superlinear_reference(fit.u, float(alpha_now), curve.index)
    _write_csv(cfg.out / "cumsum_curve.csv",
               ["index", "mean", "sd", "superlinear_reference"],
               zip(curve.index, curve.mean, curve.sd, ref))

    n_star = clt_crossover(fit.u, math.exp(fit.nu0) if fit.nu1 == 0 else
                           math.exp(float(fit.dynamics().nu_log(rows[0].year - cfg.epoch.year))),
                           float(alpha_now))
    print(f"model {fit.model.value}: rate {rate:.2f}/yr (var {rate_var:.1f}), "
          f"CLT crossover n* = {n_star:.1f}")
    print(f"{'year':>6}{'annual' + unit:>16}{'sd':>12}{'cumulative' + unit:>16}{'sd':>12}")
    for f in rows:
        print(f"{f.year:>6}{f.annual_mean / scale:>16.3f}{f.annual_sd / scale:>12.3f}"
              f"{f.cumulative_mean / scale:>16.3f}{f.cumulative_sd / scale:>12.3f}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    dyn = SeverityDynamics(alpha0=args.alpha0, alpha1=args.alpha1,
                           nu0=args.nu0, nu1=args.nu1, u=cfg.threshold)
    spec = SimSpec(rate=args.rate, severity=dyn, horizon=args.horizon,
                   seed=cfg.seed, epoch=cfg.epoch)
    cat = simulate_catalog(spec)
    out_file = Path(args.out_file) if args.out_file else cfg.out / "catalog.csv"
    write_catalog(cat, out_file)
    _write_json(cfg.out / "simulate_meta.json", {
        "seed": cfg.seed,
        "rate": args.rate,
        "horizon": args.horizon,
        "alpha0": args.alpha0,
        "alpha1": args.alpha1,
        "nu0": None if math.isinf(args.nu0) else args.nu0,
        "nu1": args.nu1,
        "threshold": cfg.threshold,
        "epoch": cfg.epoch.isoformat(),
        "n_events": len(cat),
        "path": str(out_file),
    })
    print(f"wrote {len(cat)} events to {out_file} (seed {cfg.seed})")
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, args) -> int:
    model = args.model or "D1"
    if model not in (SeverityModel.D1.value, SeverityModel.D2.value):
        raise UsageError("diagnose uses the drifting models D1 or D2")
    cat = _load_filtered(cfg)
    fit = fit_dte(cat, model, endpoint=_parse_endpoint(args), u=cfg.threshold,
                  n_boot=0, seed=cfg.seed)
    transformed, stationary, ks_stat, ks_p = transform_diagnostics(cat, fit, seed=cfg.seed)

    if args.scan_grid:
        try:
            lo, hi, n = args.scan_grid.split(":")
            grid = np.geomspace(float(lo), float(hi), int(n))
        except ValueError as exc:
            raise UsageError(f"bad --scan-grid {args.scan_grid!r}, expected LO:HI:N") from exc
    else:
        grid = np.geomspace(cfg.threshold, cfg.threshold * 100, 5)
    scan = alpha_tail_scan(transformed.y, grid)

    _write_json(cfg.out / "diagnose.json", {
        "seed": cfg.seed,
        "model": model,
        "alpha0": fit.alpha0,
        "alpha1": fit.alpha1,
        "stationary_alpha": stationary.alpha,
        "stationary_nu": stationary.nu,
        "ks_statistic": ks_stat,
        "ks_p": ks_p,
        "tail_scan": [{"u": p.u, "alpha": p.alpha, "se": p.se, "n": p.n} for p in scan],
    })
    _write_csv(cfg.out / "tail_scan.csv", ["u", "alpha", "se", "n"],
               [[p.u, p.alpha, p.se, p.n] for p in scan])
    _write_csv(cfg.out / "transformed.csv", ["t_years", "log_size_transformed"],
               zip(transformed.t, transformed.y))
    print(f"{model} stationarity diagnostic: KS statistic {ks_stat:.4f}, p = {ks_p:.3f}")
    print(f"stationary refit alpha = {stationary.alpha:.4f} (model alpha0 = {fit.alpha0:.4f})")
    for p in scan:
        print(f"  u={p.u:>12.0f}  alpha={p.alpha:.4f} ({p.se:.4f})  n={p.n}")
    return EXIT_OK


_DISPATCH = {
    "summary": cmd_summary,
    "fit": cmd_fit,
    "project": cmd_project,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config_from(args)
        return _DISPATCH[args.subcommand](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CatalogError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, ConvergenceError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
