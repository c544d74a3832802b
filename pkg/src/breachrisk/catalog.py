"""Event-catalog ingestion, filtering, and summary.

A catalog is an immutable, time-ordered sequence of breach events.  Event
times live at day resolution and are mapped to fractional years from a
configurable epoch (default 2007-01-01); intra-day ties keep input order.
Unknown sizes are carried as ``None`` and are never imputed -- they are
dropped by the exceedance filter and surfaced as a fraction in the
summary so downstream reports can be labeled optimistic.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Country",
    "BreachEvent",
    "BreachCatalog",
    "CatalogSummary",
    "CsvSchema",
    "CatalogError",
    "ParseReport",
    "parse_catalog",
    "write_catalog",
    "filter_exceedances",
    "summarize",
    "DEFAULT_EPOCH",
    "DAYS_PER_YEAR",
]

DEFAULT_EPOCH = date(2007, 1, 1)
DAYS_PER_YEAR = 365.25

_DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y")


class CatalogError(ValueError):
    """Unrecoverable ingestion problem (missing file, bad header, rotten data)."""


class Country(str, Enum):
    US = "US"
    NON_US = "NON_US"
    UNSPECIFIED = "UNSPECIFIED"


@dataclass(frozen=True)
class BreachEvent:
    """One reported breach: report date, id count (None when unknown), tags."""

    time: date
    size: int | None
    country_tag: Country = Country.UNSPECIFIED
    org_id: str | None = None
    sector_tag: str | None = None
    mcap: float | None = None

    def __post_init__(self) -> None:
        if self.size is not None and self.size < 0:
            raise ValueError(f"known size must be >= 0, got {self.size}")


@dataclass(frozen=True)
class ParseReport:
    """Row-level rejections produced while parsing a CSV catalog."""

    n_rows: int = 0
    rejected: tuple[tuple[int, str], ...] = ()  # (1-based data row, reason)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


@dataclass(frozen=True)
class BreachCatalog:
    """Immutable, time-ordered event catalog with a t=0 epoch in years."""

    events: tuple[BreachEvent, ...]
    epoch: date = DEFAULT_EPOCH
    parse_report: ParseReport = field(default=ParseReport(), compare=False, repr=False)

    def __post_init__(self) -> None:
        times = [e.time for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("catalog events must be non-decreasing in time")

    @classmethod
    def from_events(
        cls,
        events: Iterable[BreachEvent],
        epoch: date = DEFAULT_EPOCH,
        parse_report: ParseReport = ParseReport(),
    ) -> "BreachCatalog":
        ordered = sorted(events, key=lambda e: e.time)  # stable: intra-day input order kept
        return cls(tuple(ordered), epoch, parse_report)

    def __len__(self) -> int:
        return len(self.events)

    def t_years(self, when: date) -> float:
        """Fractional years from the epoch to ``when``."""
        return (when - self.epoch).days / DAYS_PER_YEAR

    def times(self) -> np.ndarray:
        return np.array([self.t_years(e.time) for e in self.events], dtype=float)

    def known_sizes(self) -> np.ndarray:
        return np.array([e.size for e in self.events if e.size is not None], dtype=float)

    def known_times(self) -> np.ndarray:
        return np.array(
            [self.t_years(e.time) for e in self.events if e.size is not None], dtype=float
        )

    def log_sizes_and_times(self) -> tuple[np.ndarray, np.ndarray]:
        """Natural-log sizes with matching t values, known-size events only."""
        sizes = self.known_sizes()
        if np.any(sizes <= 0):
            raise ValueError("log sizes require strictly positive sizes")
        return np.log(sizes), self.known_times()

    def span_years(self) -> float:
        if not self.events:
            return 0.0
        return (self.events[-1].time - self.events[0].time).days / DAYS_PER_YEAR


@dataclass(frozen=True)
class CategoryCounts:
    n_total: int
    n_unknown: int
    n_above_threshold: int
    total_breach: int
    total_breach_above: int


@dataclass(frozen=True)
class CatalogSummary:
    """Table-style summary: counts and id totals overall and per country group."""

    threshold: float
    n_total: int
    n_unknown: int
    n_above_threshold: int
    total_breach: int
    by_category: dict[str, CategoryCounts]

    @property
    def unknown_fraction(self) -> float:
        return self.n_unknown / self.n_total if self.n_total else 0.0

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n_total": self.n_total,
            "n_unknown": self.n_unknown,
            "n_above_threshold": self.n_above_threshold,
            "total_breach": self.total_breach,
            "unknown_fraction": self.unknown_fraction,
            "by_category": {
                name: {
                    "n_total": c.n_total,
                    "n_unknown": c.n_unknown,
                    "n_above_threshold": c.n_above_threshold,
                    "total_breach": c.total_breach,
                    "total_breach_above": c.total_breach_above,
                }
                for name, c in self.by_category.items()
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


@dataclass(frozen=True)
class CsvSchema:
    """Column-name mapping so heterogeneous CSV exports can be adapted.

    ``unknown_markers`` are compared case-insensitively; an empty size
    field always counts as unknown.
    """

    date: str = "date"
    size: str = "size"
    country: str | None = "country"
    org_id: str | None = "org_id"
    sector: str | None = "sector"
    mcap: str | None = "mcap"
    unknown_markers: tuple[str, ...] = ("", "unknown")


def _parse_date(raw: str) -> date:
    raw = raw.strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(raw, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unparseable date {raw!r} (accepted: YYYY-MM-DD, MM/DD/YYYY)")


def _parse_size(raw: str, markers: tuple[str, ...]) -> int | None:
    stripped = raw.strip()
    if stripped.lower() in markers:
        return None
    value = float(stripped)
    if not value.is_integer():
        raise ValueError(f"size must be an integer id count, got {raw!r}")
    if value < 0:
        raise ValueError(f"size must be non-negative, got {raw!r}")
    return int(value)


def _parse_country(raw: str | None) -> Country:
    if raw is None or not raw.strip():
        return Country.UNSPECIFIED
    token = raw.strip().upper().replace("-", "_")
    try:
        return Country(token)
    except ValueError:
        raise ValueError(f"unknown country tag {raw!r} (expected US, NON_US, UNSPECIFIED)")


def parse_catalog(
    path: str | Path,
    schema: CsvSchema = CsvSchema(),
    epoch: date = DEFAULT_EPOCH,
) -> BreachCatalog:
    """Read a UTF-8, headered CSV into a time-sorted catalog.

    Rows whose date or size cannot be parsed are rejected individually and
    listed in ``catalog.parse_report``; more than 50% rejections aborts
    with a diagnostic since the file is then presumed mis-mapped.
    """
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"catalog file not found: {path}")
    markers = tuple(m.lower() for m in schema.unknown_markers)

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CatalogError(f"{path}: empty file, expected a header row")
        missing = [c for c in (schema.date, schema.size) if c not in reader.fieldnames]
        if missing:
            raise CatalogError(
                f"{path}: header lacks required column(s) {missing}; found {reader.fieldnames}"
            )

        events: list[BreachEvent] = []
        rejected: list[tuple[int, str]] = []
        n_rows = 0
        for i, row in enumerate(reader, start=1):
            n_rows += 1
            try:
                when = _parse_date(row[schema.date] or "")
                size = _parse_size(row[schema.size] or "", markers)
                country = _parse_country(row.get(schema.country) if schema.country else None)
                mcap_raw = row.get(schema.mcap) if schema.mcap else None
                mcap = float(mcap_raw) if mcap_raw and mcap_raw.strip() else None
                org = (row.get(schema.org_id) or "").strip() or None if schema.org_id else None
                sector = (row.get(schema.sector) or "").strip() or None if schema.sector else None
            except (ValueError, KeyError) as exc:
                rejected.append((i, str(exc)))
                continue
            events.append(
                BreachEvent(
                    time=when, size=size, country_tag=country, org_id=org,
                    sector_tag=sector, mcap=mcap,
                )
            )

    if n_rows and len(rejected) > n_rows / 2:
        examples = "; ".join(f"row {r}: {m}" for r, m in rejected[:5])
        raise CatalogError(
            f"{path}: {len(rejected)}/{n_rows} rows unparseable, aborting ({examples})"
        )
    report = ParseReport(n_rows=n_rows, rejected=tuple(rejected))
    return BreachCatalog.from_events(events, epoch=epoch, parse_report=report)


def write_catalog(catalog: BreachCatalog, path: str | Path, schema: CsvSchema = CsvSchema()) -> None:
    """Write a catalog in the same CSV schema :func:`parse_catalog` reads."""
    path = Path(path)
    cols = [schema.date, schema.size]
    for c in (schema.country, schema.org_id, schema.sector, schema.mcap):
        if c:
            cols.append(c)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for e in catalog.events:
            row = [e.time.isoformat(), "" if e.size is None else str(e.size)]
            if schema.country:
                row.append(e.country_tag.value)
            if schema.org_id:
                row.append(e.org_id or "")
            if schema.sector:
                row.append(e.sector_tag or "")
            if schema.mcap:
                row.append("" if e.mcap is None else repr(e.mcap))
            writer.writerow(row)


def filter_exceedances(
    catalog: BreachCatalog,
    threshold: float,
    window: tuple[date | None, date | None] = (None, None),
) -> BreachCatalog:
    """Keep known-size events strictly above ``threshold`` inside ``window``.

    The window is a closed ``[start, end]`` date interval; ``None`` leaves
    that side open.  Unknown-size events are dropped (they stay visible
    through :func:`summarize` on the unfiltered catalog).
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    start, end = window
    if start is not None and end is not None and start > end:
        raise ValueError(f"empty window: {start} > {end}")

    kept = [
        e
        for e in catalog.events
        if e.size is not None
        and e.size > threshold
        and (start is None or e.time >= start)
        and (end is None or e.time <= end)
    ]
    known = [e.size for e in catalog.events if e.size is not None]
    if known and threshold >= max(known):
        warnings.warn(
            f"threshold {threshold:g} is at or above the largest known size; result is empty",
            stacklevel=2,
        )
    return BreachCatalog(tuple(kept), epoch=catalog.epoch)


def summarize(catalog: BreachCatalog, threshold: float) -> CatalogSummary:
    """Counts and totals per country group, plus the unknown-size fraction."""

    def bucket(events: Sequence[BreachEvent]) -> CategoryCounts:
        known = [e.size for e in events if e.size is not None]
        above = [s for s in known if s > threshold]
        return CategoryCounts(
            n_total=len(events),
            n_unknown=len(events) - len(known),
            n_above_threshold=len(above),
            total_breach=int(sum(known)),
            total_breach_above=int(sum(above)),
        )

    overall = bucket(catalog.events)
    by_cat = {
        c.value: bucket([e for e in catalog.events if e.country_tag is c])
        for c in (Country.US, Country.NON_US, Country.UNSPECIFIED)
    }
    by_cat["ALL"] = overall
    return CatalogSummary(
        threshold=threshold,
        n_total=overall.n_total,
        n_unknown=overall.n_unknown,
        n_above_threshold=overall.n_above_threshold,
        total_breach=overall.total_breach,
        by_category=by_cat,
    )
