"""
analytics.py — batch evaluation pipelines

Two offline pipelines over recorded data:

  Page-request statistics — hourly raw pagecount files are ingested, turned
  into a visitor distribution, and summarised as the probability that x or
  more users requested the same page within the hour. Requests stand in for
  distinct users; the raw data cannot tell repeat visitors apart.

  Track statistics — a GPS track is run through visit detection over a grid
  of (r_v, t_v_min) values and summarised as accumulated visiting time,
  visited-location counts, revisit statistics and a parallel-visit series.

Pagecount line format
---------------------
  <project> <page_title> <requests> <bytes>     (space separated)

Report schemas
--------------
  track CSV:    r_v,t_v_min,accum_seconds,n_locations,n_visits,
                avg_duration_s,avg_duration_mmss,avg_visits
  series JSONL: {"r_v", "t_v_min", "times": [...], "parallel": [...]}
  meeting CSV:  x,page_weighted,request_weighted
"""

from __future__ import annotations

import csv
import gzip
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Sequence

import numpy as np

from modules.core_model import LocationRegistry
from modules.errors import InvalidParameterError, PagecountReadError
from modules.geo_mapper import GeoTrack, VisitParams, detect_visits
from utils.logger import get_logger

logger = get_logger(__name__)

_HOUR_RE = re.compile(r"pagecounts-(\d{4})(\d{2})(\d{2})-(\d{2})\d{4}")


# ---------------------------------------------------------------------------
# Pagecount ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PageHourRecord:
    project: str
    page: str
    hour: str
    requests: int


@dataclass
class IngestResult:
    records: list = field(default_factory=list)
    malformed: int = 0
    skipped: int = 0

    def extend(self, other: "IngestResult") -> None:
        self.records.extend(other.records)
        self.malformed += other.malformed
        self.skipped += other.skipped


def hour_from_filename(name: str) -> Optional[str]:
    """`pagecounts-20120101-130000.gz` → `2012-01-01T13`."""
    match = _HOUR_RE.search(Path(name).name)
    if not match:
        return None
    year, month, day, hour = match.groups()
    return f"{year}-{month}-{day}T{hour}"


def ingest_pagecounts(lines: Iterable[str], project_filter: str, hour: str = "") -> IngestResult:
    """
    Parse raw pagecount lines, keep those of `project_filter`. Malformed
    lines are counted and skipped. Repeated (project, page) rows within one
    hour are summed.
    """
    counts: dict[tuple[str, str], int] = defaultdict(int)
    result = IngestResult()
    for raw in lines:
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != 4:
            result.malformed += 1
            continue
        project, page, requests, _ = fields
        try:
            requests = int(requests)
        except ValueError:
            result.malformed += 1
            continue
        if requests < 1:
            result.malformed += 1
            continue
        if project != project_filter:
            result.skipped += 1
            continue
        counts[(project, page)] += requests
    result.records = [PageHourRecord(p, page, hour, n) for (p, page), n in counts.items()]
    return result


def open_pagecounts(path) -> Iterator[str]:
    """Lines of a plain or gzip pagecount file."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rt", encoding="utf-8", errors="replace") as fh:
            yield from fh
    except (OSError, EOFError) as exc:
        raise PagecountReadError(f"Cannot read pagecount file {path}: {exc}") from exc


def ingest_files(paths: Sequence, project_filter: str) -> IngestResult:
    result = IngestResult()
    for path in paths:
        hour = hour_from_filename(str(path)) or Path(path).stem
        part = ingest_pagecounts(open_pagecounts(path), project_filter, hour)
        logger.info(
            "[%s] %d page(s) kept for %r, %d malformed line(s), %d other-project line(s).",
            hour, len(part.records), project_filter, part.malformed, part.skipped,
        )
        result.extend(part)
    return result


# ---------------------------------------------------------------------------
# Distributions and meeting probability
# ---------------------------------------------------------------------------

def _by_hour(records: Iterable[PageHourRecord]) -> dict[str, np.ndarray]:
    grouped: dict[str, list[int]] = defaultdict(list)
    for record in records:
        grouped[record.hour].append(record.requests)
    if not grouped:
        raise InvalidParameterError("No pagecount records to analyse.")
    return {hour: np.asarray(v, dtype=np.int64) for hour, v in sorted(grouped.items())}


def visitor_distribution(records: Iterable[PageHourRecord]) -> dict[int, int]:
    """Histogram requests → number of pages."""
    records = list(records)
    if not records:
        raise InvalidParameterError("Visitor distribution needs at least one record.")
    return dict(sorted(Counter(r.requests for r in records).items()))


@dataclass(frozen=True)
class MeetingProbability:
    x: int
    page_weighted: float
    request_weighted: float


def _hour_probability(counts: np.ndarray, x: int) -> tuple[float, float]:
    hit = counts >= x
    return float(np.count_nonzero(hit)) / counts.size, float(counts[hit].sum()) / float(counts.sum())


def _check_x(x) -> int:
    if isinstance(x, bool) or int(x) != x or x < 2:
        raise InvalidParameterError(f"x must be an integer ≥ 2, got {x!r}.")
    return int(x)


def meeting_probability(records: Iterable[PageHourRecord], x: int) -> MeetingProbability:
    """
    Probability that x or more users requested the same page within an hour.
    Over several hours the per-hour values are averaged.
    """
    x = _check_x(x)
    per_hour = [_hour_probability(counts, x) for counts in _by_hour(records).values()]
    pages, requests = np.mean(per_hour, axis=0)
    return MeetingProbability(x, float(pages), float(requests))


def meeting_probability_curve(records: Iterable[PageHourRecord],
                              xs: Iterable[int] = range(2, 31)) -> list[MeetingProbability]:
    hours = _by_hour(records)
    curve = []
    for x in xs:
        x = _check_x(x)
        per_hour = [_hour_probability(counts, x) for counts in hours.values()]
        pages, requests = np.mean(per_hour, axis=0)
        curve.append(MeetingProbability(x, float(pages), float(requests)))
    return curve


def write_meeting_csv(curve: Iterable[MeetingProbability], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["x", "page_weighted", "request_weighted"])
    for point in curve:
        writer.writerow([point.x, repr(point.page_weighted), repr(point.request_weighted)])


def write_distribution_csv(histogram: dict[int, int], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["requests", "pages"])
    for requests, pages in sorted(histogram.items()):
        writer.writerow([requests, pages])


# ---------------------------------------------------------------------------
# Track statistics
# ---------------------------------------------------------------------------

def format_mmss(seconds: float) -> str:
    """Minutes and seconds, halves rounded up (89.5 -> 01:30)."""
    total = int(seconds + 0.5)
    return f"{total // 60:02d}:{total % 60:02d}"


@dataclass(frozen=True)
class TrackCell:
    r_v: float
    t_v_min: int
    accum_seconds: int
    n_locations: int
    n_visits: int
    times: tuple = ()
    parallel: tuple = ()

    @property
    def avg_duration(self) -> float:
        return self.accum_seconds / self.n_visits if self.n_visits else 0.0

    @property
    def avg_visits(self) -> float:
        return self.n_visits / self.n_locations if self.n_locations else 0.0


@dataclass(frozen=True)
class TrackReport:
    cells: tuple

    def cell(self, r_v: float, t_v_min: int) -> TrackCell:
        for cell in self.cells:
            if cell.r_v == r_v and cell.t_v_min == t_v_min:
                return cell
        raise InvalidParameterError(f"No report cell for r_v={r_v}, t_v_min={t_v_min}.")

    @property
    def r_v_values(self) -> list[float]:
        return sorted({c.r_v for c in self.cells})

    @property
    def t_v_min_values(self) -> list[int]:
        return sorted({c.t_v_min for c in self.cells})


def _parallel_series(times: np.ndarray, visits) -> np.ndarray:
    delta = np.zeros(times.size + 1, dtype=np.int64)
    for intervals in visits.values():
        for v in intervals:
            lo = np.searchsorted(times, v.start, side="left")
            hi = np.searchsorted(times, v.end, side="right")
            delta[lo] += 1
            delta[hi] -= 1
    return np.cumsum(delta[:-1])


def track_report(track: GeoTrack, registry: LocationRegistry, r_v_list: Sequence[float],
                 t_v_min_list: Sequence[int], gap_max: int = 5) -> TrackReport:
    if not r_v_list or not t_v_min_list:
        raise InvalidParameterError("track_report needs non-empty r_v and t_v_min lists.")
    if len(track) == 0:
        raise InvalidParameterError("track_report needs a non-empty track.")
    if not registry.bindings():
        raise InvalidParameterError("track_report needs at least one geo-bound location.")

    cells = []
    for r_v in r_v_list:
        for t_v_min in t_v_min_list:
            visits = detect_visits(track, registry, VisitParams(r_v, t_v_min, gap_max))
            intervals = [v for found in visits.values() for v in found]
            cells.append(TrackCell(
                r_v=r_v,
                t_v_min=t_v_min,
                accum_seconds=sum(v.duration for v in intervals),
                n_locations=len(visits),
                n_visits=len(intervals),
                times=tuple(track.times.tolist()),
                parallel=tuple(_parallel_series(track.times, visits).tolist()),
            ))
    logger.info("Track report over %d reading(s), %d parameter cell(s).", len(track), len(cells))
    return TrackReport(tuple(cells))


def write_track_csv(report: TrackReport, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["r_v", "t_v_min", "accum_seconds", "n_locations", "n_visits",
                     "avg_duration_s", "avg_duration_mmss", "avg_visits"])
    for c in report.cells:
        writer.writerow([c.r_v, c.t_v_min, c.accum_seconds, c.n_locations, c.n_visits,
                         f"{c.avg_duration:.1f}", format_mmss(c.avg_duration), f"{c.avg_visits:.2f}"])


def write_series_jsonl(report: TrackReport, fh: IO[str]) -> None:
    for c in report.cells:
        fh.write(json.dumps({
            "r_v": c.r_v,
            "t_v_min": c.t_v_min,
            "times": list(c.times),
            "parallel": list(c.parallel),
        }) + "\n")
