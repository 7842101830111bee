"""
core_model.py — domain vocabulary: users, virtual coordinates, virtual
locations, visit intervals and the visit log.

Time is integer epoch seconds everywhere in this module. Touching intervals
([a, b] and [b, c]) merge; zero-length intervals are accepted and contribute
nothing.

Visit-log exchange format
-------------------------
  user_id<TAB>location_id<TAB>start_epoch<TAB>end_epoch     (UTF-8, LF)
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Iterator, Optional
from urllib.parse import urlsplit, urlunsplit

from modules.errors import (
    CoordinateConflictError,
    DuplicateLocationError,
    InvalidCoordinateError,
    InvalidIntervalError,
    InvalidParameterError,
    MalformedRowError,
    UnknownLocationError,
)
from utils.logger import get_logger

if TYPE_CHECKING:
    from modules.geo_mapper import GeoPoint

logger = get_logger(__name__)

UserId = str


# ---------------------------------------------------------------------------
# Virtual coordinates
# ---------------------------------------------------------------------------

def normalize_coordinate(uri: str) -> str:
    """
    Validate an absolute URI and lowercase its scheme and host.

    Path, query and fragment keep their case: two pages that differ only in
    path case are different resources.
    """
    if not isinstance(uri, str) or not uri.strip():
        raise InvalidCoordinateError("Virtual coordinate must be a non-empty URI string.")
    try:
        parts = urlsplit(uri.strip())
    except ValueError as exc:
        raise InvalidCoordinateError(f"Unparsable URI {uri!r}: {exc}") from exc
    if not parts.scheme or not parts.netloc or not parts.hostname:
        raise InvalidCoordinateError(f"Not an absolute URI with a host: {uri!r}")

    userinfo, sep, hostport = parts.netloc.rpartition("@")
    netloc = f"{userinfo}{sep}{hostport.lower()}"
    return urlunsplit((parts.scheme.lower(), netloc, parts.path, parts.query, parts.fragment))


def coordinate_host(uri: str) -> str:
    host = urlsplit(uri).hostname
    if not host:
        raise InvalidCoordinateError(f"Coordinate has no parsable host: {uri!r}")
    return host.lower()


# ---------------------------------------------------------------------------
# Virtual locations and the registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VirtualLocation:
    id: str
    coordinates: frozenset
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id.strip():
            raise InvalidParameterError("Location id must be a non-empty string.")
        coords = frozenset(normalize_coordinate(c) for c in self.coordinates)
        if not coords:
            raise InvalidCoordinateError(f"Location {self.id!r} needs at least one coordinate.")
        object.__setattr__(self, "coordinates", coords)


class LocationRegistry:
    """
    Virtual locations of one deployment, optionally bound to a single geo
    point each. A coordinate belongs to at most one location.
    """

    def __init__(self):
        self._locations: dict[str, VirtualLocation] = {}
        self._owners: dict[str, str] = {}
        self._points: dict[str, "GeoPoint"] = {}

    def register(self, location: VirtualLocation, point: Optional["GeoPoint"] = None) -> VirtualLocation:
        if location.id in self._locations:
            raise DuplicateLocationError(f"Location {location.id!r} is already registered.")
        clashes = sorted(c for c in location.coordinates if c in self._owners)
        if clashes:
            raise CoordinateConflictError(
                f"Coordinate {clashes[0]!r} of {location.id!r} already belongs to "
                f"location {self._owners[clashes[0]]!r}."
            )
        self._locations[location.id] = location
        for coordinate in location.coordinates:
            self._owners[coordinate] = location.id
        if point is not None:
            self._points[location.id] = point
        return location

    def bind(self, location_id: str, point: "GeoPoint") -> None:
        self.get(location_id)
        self._points[location_id] = point

    def get(self, location_id: str) -> VirtualLocation:
        try:
            return self._locations[location_id]
        except KeyError:
            raise UnknownLocationError(f"Unknown location id {location_id!r}.") from None

    def point(self, location_id: str) -> Optional["GeoPoint"]:
        self.get(location_id)
        return self._points.get(location_id)

    def location_for(self, uri: str) -> Optional[str]:
        """Owning location of a virtual coordinate, or None."""
        return self._owners.get(normalize_coordinate(uri))

    def bindings(self) -> list[tuple[str, "GeoPoint"]]:
        return sorted(self._points.items())

    def ids(self) -> list[str]:
        return sorted(self._locations)

    def __contains__(self, location_id) -> bool:
        return location_id in self._locations

    def __iter__(self) -> Iterator[VirtualLocation]:
        return (self._locations[i] for i in self.ids())

    def __len__(self) -> int:
        return len(self._locations)

    def to_dict(self) -> dict:
        rows = []
        for location in self:
            point = self._points.get(location.id)
            rows.append({
                "id": location.id,
                "name": location.name,
                "coordinates": sorted(location.coordinates),
                "lat": point.lat if point else None,
                "lon": point.lon if point else None,
            })
        return {"locations": rows}

    @classmethod
    def from_dict(cls, data: dict) -> "LocationRegistry":
        from modules.geo_mapper import GeoPoint

        registry = cls()
        for row in data.get("locations", []):
            point = None
            if row.get("lat") is not None and row.get("lon") is not None:
                point = GeoPoint(row["lat"], row["lon"])
            registry.register(
                VirtualLocation(row["id"], frozenset(row["coordinates"]), row.get("name", "")),
                point,
            )
        return registry


# ---------------------------------------------------------------------------
# Visits
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class VisitInterval:
    start: int
    end: int

    def __post_init__(self):
        for value in (self.start, self.end):
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidIntervalError(f"Interval bounds must be integer epoch seconds, got {value!r}.")
        if self.start > self.end:
            raise InvalidIntervalError(f"Interval start {self.start} > end {self.end}.")

    @property
    def duration(self) -> int:
        return self.end - self.start


def normalize_intervals(intervals: Iterable[VisitInterval]) -> tuple[VisitInterval, ...]:
    """Sort and merge overlapping or touching intervals. Idempotent."""
    merged: list[VisitInterval] = []
    for interval in sorted(intervals):
        if merged and interval.start <= merged[-1].end:
            if interval.end > merged[-1].end:
                merged[-1] = VisitInterval(merged[-1].start, interval.end)
        else:
            merged.append(interval)
    return tuple(merged)


class VisitLog:
    """
    Per (user, location) visit intervals, kept normalised after every insert.

    Open visits (entered, not yet left) live beside the closed intervals and
    only materialise when a caller supplies `now`.
    """

    def __init__(self, registry: LocationRegistry):
        self.registry = registry
        self._entries: dict[tuple[str, str], tuple[VisitInterval, ...]] = {}
        self._open: dict[tuple[str, str], int] = {}

    # -- mutation (single writer) -------------------------------------------

    def add_visit(self, user: UserId, location_id: str, interval: VisitInterval,
                  now: Optional[int] = None) -> "VisitLog":
        key = self._key(user, location_id)
        now = int(time.time()) if now is None else now
        if interval.end > now:
            raise InvalidIntervalError(
                f"Interval [{interval.start}, {interval.end}] ends in the future (now={now})."
            )
        self._entries[key] = normalize_intervals((*self._entries.get(key, ()), interval))
        return self

    def open_visit(self, user: UserId, location_id: str, start: int,
                   now: Optional[int] = None) -> "VisitLog":
        key = self._key(user, location_id)
        now = int(time.time()) if now is None else now
        if start > now:
            raise InvalidIntervalError(f"Visit cannot start in the future (start={start}, now={now}).")
        self._open[key] = min(start, self._open.get(key, start))
        return self

    def close_visit(self, user: UserId, location_id: str, end: int,
                    now: Optional[int] = None) -> "VisitLog":
        key = self._key(user, location_id)
        if key not in self._open:
            raise InvalidParameterError(f"[{user}] has no open visit at {location_id!r}.")
        start = self._open[key]
        self.add_visit(user, location_id, VisitInterval(start, end), now=now)
        del self._open[key]
        return self

    def _key(self, user: UserId, location_id: str) -> tuple[str, str]:
        if not isinstance(user, str) or not user:
            raise InvalidParameterError("User id must be a non-empty string.")
        self.registry.get(location_id)
        return user, location_id

    # -- queries -------------------------------------------------------------

    def intervals(self, user: UserId, location_id: str,
                  now: Optional[int] = None) -> tuple[VisitInterval, ...]:
        self.registry.get(location_id)
        key = (user, location_id)
        stored = self._entries.get(key, ())
        start = self._open.get(key)
        if now is None or start is None or start > now:
            return stored
        return normalize_intervals((*stored, VisitInterval(start, now)))

    def total_visit_time(self, user: UserId, location_id: str, now: Optional[int] = None) -> int:
        return sum(v.duration for v in self.intervals(user, location_id, now))

    def locations_of(self, user: UserId) -> list[str]:
        return sorted({loc for (u, loc) in (*self._entries, *self._open) if u == user})

    def users(self) -> list[UserId]:
        return sorted({u for (u, _) in (*self._entries, *self._open)})

    def pairs(self) -> list[tuple[str, str]]:
        return sorted({*self._entries, *self._open})

    def latest_end(self, user: UserId) -> Optional[int]:
        ends = [iv[-1].end for (u, _), iv in self._entries.items() if u == user and iv]
        return max(ends) if ends else None

    def snapshot(self) -> "VisitLog":
        """Independent copy; later writes to self never show through."""
        copy = VisitLog(self.registry)
        copy._entries = dict(self._entries)
        copy._open = dict(self._open)
        return copy

    def __eq__(self, other) -> bool:
        if not isinstance(other, VisitLog):
            return NotImplemented
        return self._entries == other._entries and self._open == other._open

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "visits": [
                [user, loc, v.start, v.end]
                for (user, loc), intervals in sorted(self._entries.items())
                for v in intervals
            ],
            "open": [[user, loc, start] for (user, loc), start in sorted(self._open.items())],
        }

    @classmethod
    def from_dict(cls, data: dict, registry: LocationRegistry) -> "VisitLog":
        log = cls(registry)
        for user, loc, start, end in data.get("visits", []):
            key = log._key(user, loc)
            log._entries[key] = normalize_intervals((*log._entries.get(key, ()), VisitInterval(start, end)))
        for user, loc, start in data.get("open", []):
            log._open[log._key(user, loc)] = start
        return log


# ---------------------------------------------------------------------------
# Exchange format
# ---------------------------------------------------------------------------

def load_visit_records(log: VisitLog, lines: Iterable[str], now: Optional[int] = None) -> int:
    """Insert TAB-delimited visit records into `log`. Returns the number inserted."""
    count = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise MalformedRowError(f"Visit record line {lineno}: expected 4 TAB-separated fields.")
        user, location_id, start, end = fields
        try:
            interval = VisitInterval(int(start), int(end))
        except ValueError:
            raise MalformedRowError(f"Visit record line {lineno}: non-integer epoch.") from None
        log.add_visit(user, location_id, interval, now=now)
        count += 1
    logger.info("Loaded %d visit record(s).", count)
    return count


def dump_visit_records(log: VisitLog) -> str:
    return "".join(f"{u}\t{loc}\t{s}\t{e}\n" for u, loc, s, e in log.to_dict()["visits"])
