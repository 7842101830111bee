"""
repository.py — the location repository

Loads the mapping between physical and virtual locations from CSV:

  location_id,name,lat,lon,url          (UTF-8, header row)

`url` may hold several whitespace-separated coordinates. Rows without
lat/lon register a virtual-only location. Rejected rows are logged; strict
mode raises on the first one instead.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from modules.core_model import LocationRegistry, VirtualLocation, coordinate_host, normalize_coordinate
from modules.errors import (
    CoordinateConflictError,
    DuplicateLocationError,
    InvalidParameterError,
    MalformedRowError,
    PresenceError,
)
from modules.geo_mapper import GeoPoint
from modules.similarity import registrable_domain
from utils.logger import get_logger, log_event

logger = get_logger(__name__)

COLUMNS = ("location_id", "name", "lat", "lon", "url")


@dataclass
class LoadReport:
    loaded: int = 0
    rejected: int = 0
    virtual_only: int = 0
    reasons: list = field(default_factory=list)

    def reject(self, lineno: int, reason: str) -> None:
        self.rejected += 1
        self.reasons.append((lineno, reason))
        logger.warning("[WARN] Location row %d rejected: %s", lineno, reason)


def _parse_row(row: dict, lineno: int) -> tuple[VirtualLocation, Optional[GeoPoint]]:
    location_id = (row.get("location_id") or "").strip()
    if not location_id:
        raise MalformedRowError(f"Row {lineno}: empty location_id.")
    urls = (row.get("url") or "").split()
    if not urls:
        raise MalformedRowError(f"Row {lineno}: no url for {location_id!r}.")
    lat, lon = (row.get("lat") or "").strip(), (row.get("lon") or "").strip()
    point = None
    if lat or lon:
        if not (lat and lon):
            raise MalformedRowError(f"Row {lineno}: {location_id!r} has only one of lat/lon.")
        try:
            point = GeoPoint(float(lat), float(lon))
        except ValueError:
            raise MalformedRowError(f"Row {lineno}: unparsable lat/lon for {location_id!r}.") from None
    location = VirtualLocation(location_id, frozenset(urls), (row.get("name") or "").strip())
    return location, point


def read_locations(lines: Iterable[str], registry: Optional[LocationRegistry] = None,
                   strict: bool = False) -> tuple[LocationRegistry, LoadReport]:
    registry = registry if registry is not None else LocationRegistry()
    report = LoadReport()
    reader = csv.DictReader(lines)
    missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise MalformedRowError(f"Locations CSV is missing column(s): {missing}.")

    for lineno, row in enumerate(reader, start=2):
        try:
            location, point = _parse_row(row, lineno)
            registry.register(location, point)
        except (DuplicateLocationError, CoordinateConflictError) as exc:
            if strict:
                raise
            report.reject(lineno, str(exc))
            continue
        except PresenceError as exc:
            if strict:
                raise MalformedRowError(f"Row {lineno}: {exc}") from exc
            report.reject(lineno, str(exc))
            continue
        report.loaded += 1
        if point is None:
            report.virtual_only += 1
    return registry, report


def load_locations(path, registry: Optional[LocationRegistry] = None,
                   strict: bool = False) -> tuple[LocationRegistry, LoadReport]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            registry, report = read_locations(fh, registry, strict)
    except OSError as exc:
        raise InvalidParameterError(f"Cannot read locations file {path}: {exc}") from exc
    logger.info(
        "Loaded %d location(s) from %s (%d virtual-only, %d rejected).",
        report.loaded, path, report.virtual_only, report.rejected,
    )
    log_event("locations_loaded", path=str(path), loaded=report.loaded, rejected=report.rejected)
    return registry, report


def derive_domain_locations(urls: Iterable[str]) -> list[VirtualLocation]:
    """One virtual location per registrable domain, id = the domain."""
    grouped: dict[str, set[str]] = defaultdict(set)
    for url in urls:
        coordinate = normalize_coordinate(url)
        grouped[registrable_domain(coordinate_host(coordinate))].add(coordinate)
    return [VirtualLocation(domain, frozenset(coords), domain) for domain, coords in sorted(grouped.items())]
