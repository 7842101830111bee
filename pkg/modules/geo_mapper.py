"""
geo_mapper.py — physical space folded onto virtual locations

Covers the single-point geo binding of a location, haversine radius lookup,
visit detection over 1 Hz GPS tracks under (r_v, t_v_min, gap_max), and the
grid statistics used to judge how densely a region is covered.

Distances are haversine metres everywhere except inside grid computations,
which use an equirectangular projection about the region's centre latitude.
Radius comparisons are inclusive (≤) with a 1e-6 m tolerance.

GPS track format
----------------
  epoch_seconds,lat,lon        (header row optional)
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from modules.core_model import LocationRegistry, VisitInterval
from modules.errors import (
    InvalidGeoPointError,
    InvalidParameterError,
    MalformedRowError,
    TrackOrderError,
)
from utils.logger import get_logger

logger = get_logger(__name__)

EARTH_RADIUS_M = 6_371_000.0
RADIUS_TOL_M = 1e-6
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


# ---------------------------------------------------------------------------
# Points and distances
# ---------------------------------------------------------------------------

def _coordinate(value, label: str, bound: float) -> float:
    if isinstance(value, bool):
        raise InvalidGeoPointError(f"{label} must be a number, got {value!r}.")
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidGeoPointError(f"{label} must be a number, got {value!r}.") from None
    if not math.isfinite(value) or abs(value) > bound:
        raise InvalidGeoPointError(f"{label} {value} outside [-{bound:g}, {bound:g}].")
    return value


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        object.__setattr__(self, "lat", _coordinate(self.lat, "Latitude", 90.0))
        object.__setattr__(self, "lon", _coordinate(self.lon, "Longitude", 180.0))


@dataclass(frozen=True)
class GeoBinding:
    location: str
    point: GeoPoint


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, max(0.0, h))))


def haversine_many(lats, lons, point: GeoPoint) -> np.ndarray:
    """Vectorised haversine from many readings to one point."""
    phi = np.radians(np.asarray(lats, dtype=float))
    lmb = np.radians(np.asarray(lons, dtype=float))
    phi0, lmb0 = math.radians(point.lat), math.radians(point.lon)
    h = np.sin((phi - phi0) / 2) ** 2 + np.cos(phi) * math.cos(phi0) * np.sin((lmb - lmb0) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def geo_bindings(registry: LocationRegistry) -> list[GeoBinding]:
    """Every bound location, ordered by location id."""
    return [GeoBinding(location_id, point) for location_id, point in registry.bindings()]


def nearest_location(registry: LocationRegistry, at: GeoPoint,
                     radius: float) -> Optional[tuple[str, float]]:
    """Closest bound location within `radius` metres; ties go to the lowest id."""
    if not radius > 0:
        raise InvalidParameterError(f"Radius must be > 0, got {radius}.")
    bindings = geo_bindings(registry)
    if not bindings:
        return None
    ids = [b.location for b in bindings]
    lats = [b.point.lat for b in bindings]
    lons = [b.point.lon for b in bindings]
    distances = haversine_many(lats, lons, at)
    best = int(np.argmin(distances))
    if distances[best] > radius + RADIUS_TOL_M:
        return None
    return ids[best], float(distances[best])


# ---------------------------------------------------------------------------
# Tracks and visit detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VisitParams:
    r_v: float
    t_v_min: int
    gap_max: int = 5

    def __post_init__(self):
        if not self.r_v > 0:
            raise InvalidParameterError(f"r_v must be > 0 m, got {self.r_v}.")
        if self.t_v_min < 0:
            raise InvalidParameterError(f"t_v_min must be ≥ 0 s, got {self.t_v_min}.")
        if self.gap_max < 1:
            raise InvalidParameterError(f"gap_max must be ≥ 1 s, got {self.gap_max}.")


class GeoTrack:
    """Time-ordered GPS readings, held as parallel numpy arrays."""

    def __init__(self, times: Sequence[int], lats: Sequence[float], lons: Sequence[float]):
        self.times = np.asarray(times, dtype=np.int64)
        self.lats = np.asarray(lats, dtype=float)
        self.lons = np.asarray(lons, dtype=float)
        if not (self.times.shape == self.lats.shape == self.lons.shape) or self.times.ndim != 1:
            raise InvalidParameterError("Track arrays must be one-dimensional and equally long.")
        steps = np.diff(self.times)
        if steps.size and np.any(steps <= 0):
            bad = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise TrackOrderError(f"Track timestamps must strictly increase (reading {bad}).")
        for lat, lon in zip(self.lats, self.lons):
            GeoPoint(lat, lon)

    @classmethod
    def from_readings(cls, readings: Iterable[tuple[int, GeoPoint]]) -> "GeoTrack":
        rows = list(readings)
        return cls([t for t, _ in rows], [p.lat for _, p in rows], [p.lon for _, p in rows])

    @property
    def readings(self) -> list[tuple[int, GeoPoint]]:
        return [(int(t), GeoPoint(la, lo)) for t, la, lo in zip(self.times, self.lats, self.lons)]

    def __len__(self) -> int:
        return int(self.times.size)


def read_track_csv(lines: Iterable[str]) -> GeoTrack:
    times, lats, lons = [], [], []
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or not "".join(row).strip():
            continue
        if lineno == 1 and row[0].strip() == "epoch_seconds":
            continue
        if len(row) != 3:
            raise MalformedRowError(f"Track line {lineno}: expected epoch_seconds,lat,lon.")
        try:
            times.append(int(row[0]))
            lats.append(float(row[1]))
            lons.append(float(row[2]))
        except ValueError:
            raise MalformedRowError(f"Track line {lineno}: unparsable reading {row!r}.") from None
    return GeoTrack(times, lats, lons)


def _runs(times: np.ndarray, inside: np.ndarray, gap_max: int) -> list[np.ndarray]:
    """Indices of maximal inside-runs, split on outside readings and on gaps."""
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero((np.diff(idx) > 1) | (np.diff(times[idx]) > gap_max)) + 1
    return np.split(idx, breaks)


def detect_visits(track: GeoTrack, registry: LocationRegistry,
                  params: VisitParams) -> dict[str, list[VisitInterval]]:
    """
    Visits per bound location, each [first reading, last reading] of a run
    lasting at least t_v_min. Locations are evaluated independently, so one
    reading may count toward several parallel visits.
    """
    if len(track) == 0:
        raise InvalidParameterError("Cannot detect visits on an empty track.")
    visits: dict[str, list[VisitInterval]] = {}
    for binding in geo_bindings(registry):
        inside = haversine_many(track.lats, track.lons, binding.point) <= params.r_v + RADIUS_TOL_M
        found = []
        for run in _runs(track.times, inside, params.gap_max):
            first, last = int(track.times[run[0]]), int(track.times[run[-1]])
            if last - first >= params.t_v_min:
                found.append(VisitInterval(first, last))
        if found:
            visits[binding.location] = found
    logger.debug(
        "Detected %d visit(s) at %d location(s) (r_v=%s, t_v_min=%s).",
        sum(len(v) for v in visits.values()), len(visits), params.r_v, params.t_v_min,
    )
    return visits


# ---------------------------------------------------------------------------
# Regions and grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Bounding box; grid squares are anchored at the south-west corner."""

    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    def __post_init__(self):
        GeoPoint(self.lat_min, self.lon_min)
        GeoPoint(self.lat_max, self.lon_max)
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise InvalidParameterError(
                f"Degenerate region [{self.lat_min}, {self.lon_min}, {self.lat_max}, {self.lon_max}]."
            )

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Region":
        if len(values) != 4:
            raise InvalidParameterError("Region must be [lat_min, lon_min, lat_max, lon_max].")
        return cls(*values)

    @classmethod
    def from_center(cls, center: GeoPoint, width_m: float, height_m: float) -> "Region":
        half_lat = height_m / 2 / _M_PER_DEG
        half_lon = width_m / 2 / (_M_PER_DEG * math.cos(math.radians(center.lat)))
        return cls(center.lat - half_lat, center.lon - half_lon,
                   center.lat + half_lat, center.lon + half_lon)

    @property
    def ref_lat(self) -> float:
        return (self.lat_min + self.lat_max) / 2

    def project(self, lats, lons) -> np.ndarray:
        """Metres east/north of the south-west corner, shape (n, 2)."""
        kx = _M_PER_DEG * math.cos(math.radians(self.ref_lat))
        x = (np.asarray(lons, dtype=float) - self.lon_min) * kx
        y = (np.asarray(lats, dtype=float) - self.lat_min) * _M_PER_DEG
        return np.column_stack([x, y])

    @property
    def size_m(self) -> tuple[float, float]:
        corner = self.project([self.lat_max], [self.lon_max])[0]
        return float(corner[0]), float(corner[1])

    def contains(self, point: GeoPoint) -> bool:
        return self.lat_min <= point.lat <= self.lat_max and self.lon_min <= point.lon <= self.lon_max

    def grid_shape(self, square_m: float) -> tuple[int, int]:
        if not square_m > 0:
            raise InvalidParameterError(f"square_m must be > 0, got {square_m}.")
        width, height = self.size_m
        nx = max(1, math.ceil(width / square_m - 1e-9))
        ny = max(1, math.ceil(height / square_m - 1e-9))
        return nx, ny

    def cell_centers(self, square_m: float) -> np.ndarray:
        nx, ny = self.grid_shape(square_m)
        xs = (np.arange(nx) + 0.5) * square_m
        ys = (np.arange(ny) + 0.5) * square_m
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


def planar_distance(region: Region, a: GeoPoint, b: GeoPoint) -> float:
    xy = region.project([a.lat, b.lat], [a.lon, b.lon])
    return float(np.hypot(*(xy[0] - xy[1])))


def _nearest_center_distances(registry: LocationRegistry, region: Region,
                              square_m: float) -> np.ndarray:
    centers = region.cell_centers(square_m)
    points = [b.point for b in geo_bindings(registry)]
    if not points:
        return np.full(len(centers), np.inf)
    xy = region.project([p.lat for p in points], [p.lon for p in points])
    distances, _ = cKDTree(xy).query(centers, k=1)
    return distances


def coverage_percent(registry: LocationRegistry, region: Region,
                     square_m: float, r_v: float) -> float:
    """Share of grid squares whose centre lies within r_v of a bound location, in percent."""
    return coverage_curve(registry, region, square_m, [r_v])[0][1]


def coverage_curve(registry: LocationRegistry, region: Region, square_m: float,
                   r_v_list: Iterable[float]) -> list[tuple[float, float]]:
    r_v_list = list(r_v_list)
    if not r_v_list:
        raise InvalidParameterError("Coverage needs at least one r_v.")
    for r_v in r_v_list:
        if not r_v > 0:
            raise InvalidParameterError(f"r_v must be > 0 m, got {r_v}.")
    nearest = _nearest_center_distances(registry, region, square_m)
    return [
        (float(r_v), 100.0 * float(np.count_nonzero(nearest <= r_v + RADIUS_TOL_M)) / nearest.size)
        for r_v in r_v_list
    ]


def grid_distribution(registry: LocationRegistry, region: Region,
                      square_m: float) -> dict[int, int]:
    """Histogram locations-per-square → number of squares, non-empty squares only."""
    nx, ny = region.grid_shape(square_m)
    inside = [b.point for b in geo_bindings(registry) if region.contains(b.point)]
    if not inside:
        return {}
    xy = region.project([p.lat for p in inside], [p.lon for p in inside])
    ix = np.minimum((xy[:, 0] // square_m).astype(int), nx - 1)
    iy = np.minimum((xy[:, 1] // square_m).astype(int), ny - 1)
    per_square = Counter(zip(ix.tolist(), iy.tolist()))
    return dict(sorted(Counter(per_square.values()).items()))
