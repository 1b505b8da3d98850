"""Daily count series, event-day histories, and incident ingestion.

Days are handled as 1-based integer indices from the start of the
observation window; calendar dates only appear at the ingestion and
output boundaries. A "series" stores one non-negative count per day; a
"history" lists the event days (days with at least one incident)
together with their counts.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class IncidentRecord:
    """A dated incident row; ``count`` defaults to one incident."""

    date: dt.date
    count: int = 1

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"incident count must be >= 1, got {self.count} on {self.date}")


@dataclass(frozen=True)
class DailySeries:
    """Non-negative daily counts over a contiguous window starting at ``start_date``."""

    start_date: dt.date
    counts: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1-D sequence")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return int(self.counts.size)

    @property
    def n_days(self) -> int:
        return int(self.counts.size)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=self.n_days - 1)

    def date_of(self, day: int) -> dt.date:
        """Calendar date of a 1-based day index."""
        return self.start_date + dt.timedelta(days=day - 1)

    def day_of(self, date: dt.date) -> int:
        """1-based day index of a calendar date inside the window."""
        day = (date - self.start_date).days + 1
        if not 1 <= day <= self.n_days:
            raise ValueError(f"{date.isoformat()} falls outside the window")
        return day

    def event_indicator(self) -> np.ndarray:
        """Per-day 0/1 indicator for at least one incident."""
        return (self.counts >= 1).astype(np.int64)

    @property
    def n_event_days(self) -> int:
        return int(np.count_nonzero(self.counts))

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class EventHistory:
    """Strictly increasing 1-based event days with their positive counts."""

    event_days: np.ndarray = field(repr=False)
    event_counts: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        days = np.asarray(self.event_days, dtype=np.int64)
        counts = np.asarray(self.event_counts, dtype=np.int64)
        if days.shape != counts.shape or days.ndim != 1:
            raise ValueError("event_days and event_counts must be aligned 1-D sequences")
        if days.size and np.any(np.diff(days) <= 0):
            raise ValueError("event days must be strictly increasing")
        if np.any(counts < 1):
            raise ValueError("event counts must be >= 1")
        object.__setattr__(self, "event_days", days)
        object.__setattr__(self, "event_counts", counts)

    def __len__(self) -> int:
        return int(self.event_days.size)

    def before(self, day: int) -> "EventHistory":
        """History restricted to event days strictly before ``day``."""
        k = int(np.searchsorted(self.event_days, day, side="left"))
        return EventHistory(self.event_days[:k], self.event_counts[:k])

    def through(self, day: int) -> "EventHistory":
        """History restricted to event days <= ``day``."""
        k = int(np.searchsorted(self.event_days, day, side="right"))
        return EventHistory(self.event_days[:k], self.event_counts[:k])


def to_history(series: DailySeries) -> EventHistory:
    """Event days of a series, with their counts."""
    days = np.nonzero(series.counts)[0] + 1
    return EventHistory(days, series.counts[days - 1])


def from_history(history: EventHistory, n_days: int, start_date: dt.date) -> DailySeries:
    """Re-expand a history back into a daily series of length ``n_days``."""
    if len(history) and history.event_days[-1] > n_days:
        raise ValueError("history extends past the requested window")
    counts = np.zeros(n_days, dtype=np.int64)
    counts[history.event_days - 1] = history.event_counts
    return DailySeries(start_date, counts)


def ingest_incidents(
    records: Iterable[IncidentRecord], start: dt.date, end: dt.date
) -> DailySeries:
    """Aggregate incident records into daily counts over [start, end].

    Incidents on the same calendar day are summed; days with no records
    get a zero count. A record outside the window is rejected.
    """
    if end < start:
        raise ValueError(f"empty window: {start.isoformat()}..{end.isoformat()}")
    n_days = (end - start).days + 1
    counts = np.zeros(n_days, dtype=np.int64)
    for rec in records:
        offset = (rec.date - start).days
        if not 0 <= offset < n_days:
            raise ValueError(f"record on {rec.date.isoformat()} falls outside the window")
        counts[offset] += rec.count
    return DailySeries(start, counts)


def split(series: DailySeries, boundary: dt.date) -> tuple[DailySeries, DailySeries]:
    """Split a series at a boundary date; the first part ends the day before."""
    if not series.start_date < boundary <= series.end_date:
        raise ValueError(
            f"split boundary {boundary.isoformat()} must lie strictly inside "
            f"{series.start_date.isoformat()}..{series.end_date.isoformat()}"
        )
    k = (boundary - series.start_date).days
    return (
        DailySeries(series.start_date, series.counts[:k]),
        DailySeries(boundary, series.counts[k:]),
    )


# ---------------------------------------------------------------------------
# Bundled demo data
# ---------------------------------------------------------------------------

# Count multiset of the bundled 7-year demo window (2,557 days): 130 single-
# incident days, 16 double, 7 triple, 1 quadruple, and four heavy days.
_DEMO_MULTISET = [1] * 130 + [2] * 16 + [3] * 7 + [4] + [6, 10, 11, 36]
DEMO_START = dt.date(1994, 1, 1)
DEMO_DAYS = 2557


def demo_multiset() -> np.ndarray:
    """Event-day count multiset of the demo dataset (158 days, 250 incidents)."""
    return np.sort(np.asarray(_DEMO_MULTISET, dtype=np.int64))


def demo_series(seed: int = 0) -> DailySeries:
    """Demo daily series: the demo multiset placed uniformly at random.

    Only the marginals (window length, number of event days, count
    multiset) are meaningful; event timings are a seeded shuffle, so any
    timing-dependent statistic on this series is arbitrary.
    """
    rng = np.random.default_rng(seed)
    multiset = demo_multiset()
    days = rng.choice(DEMO_DAYS, size=multiset.size, replace=False)
    counts = np.zeros(DEMO_DAYS, dtype=np.int64)
    counts[np.sort(days)] = rng.permutation(multiset)
    return DailySeries(DEMO_START, counts)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ValueError(f"{where}: malformed ISO date {text!r}") from exc


def read_incidents_csv(path: str | Path) -> list[IncidentRecord]:
    """Read ``date,count`` incident rows; a missing count means one incident."""
    records = []
    with open(path, newline="", encoding="utf-8") as handle:
        rows = csv.reader(_skip_comments(handle))
        header = next(rows, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "count"]:
            raise ValueError(f"{path}: expected header 'date,count'")
        for lineno, row in enumerate(rows, start=2):
            if not row or not "".join(row).strip():
                continue
            date = _parse_date(row[0], f"{path}:{lineno}")
            raw = row[1].strip() if len(row) > 1 else ""
            count = int(raw) if raw else 1
            records.append(IncidentRecord(date, count))
    return records


def read_series_csv(path: str | Path) -> DailySeries:
    """Read a gap-free ``date,count`` daily series."""
    dates: list[dt.date] = []
    counts: list[int] = []
    with open(path, newline="", encoding="utf-8") as handle:
        rows = csv.reader(_skip_comments(handle))
        header = next(rows, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "count"]:
            raise ValueError(f"{path}: expected header 'date,count'")
        for lineno, row in enumerate(rows, start=2):
            if not row or not "".join(row).strip():
                continue
            dates.append(_parse_date(row[0], f"{path}:{lineno}"))
            counts.append(int(row[1]))
    if not dates:
        raise ValueError(f"{path}: no data rows")
    for prev, cur in zip(dates, dates[1:]):
        if (cur - prev).days != 1:
            raise ValueError(f"{path}: gap or disorder between {prev} and {cur}")
    return DailySeries(dates[0], np.asarray(counts))


def write_series_csv(series: DailySeries, path: str | Path, header_comment: str | None = None) -> None:
    """Write a series as ``date,count`` rows, one per day, LF line endings."""
    with open(path, "w", newline="\n", encoding="utf-8") as handle:
        if header_comment:
            handle.write(f"# {header_comment}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["date", "count"])
        for day, count in enumerate(series.counts, start=1):
            writer.writerow([series.date_of(day).isoformat(), int(count)])


def _skip_comments(handle) -> Iterable[str]:
    for line in handle:
        if not line.lstrip().startswith("#"):
            yield line
