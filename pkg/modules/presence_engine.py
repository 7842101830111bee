"""
presence_engine.py — decayed visit time, presence, and both cumulative
presence variants, by exact piecewise integration over the visit log.

Visit intervals are converted to age ranges (minutes before `now`) and
handed to DecaySpec.integrate, so no quantity here carries time-step error.

The multi-location variant weights every instant by the maximum closeness
over all locations the user is visiting at that instant, with the queried
location itself at weight 1. Overlapping visits at similar locations are
therefore never counted twice.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

from modules.core_model import VisitInterval, VisitLog
from modules.decay_kernel import DecaySpec, age_minutes
from modules.errors import InvalidParameterError, OverlappingVisitsError

Closeness = Union[Callable[[str, str], float], Mapping[tuple, float]]

SIMPLE = "simple"
CUMULATIVE_SINGLE = "cumulative_single"
CUMULATIVE_MULTI = "cumulative_multi"
KINDS = (SIMPLE, CUMULATIVE_SINGLE, CUMULATIVE_MULTI)


@dataclass(frozen=True)
class PresenceQuery:
    user: str
    location: str
    decay: DecaySpec
    now: int


@dataclass(frozen=True)
class WeightedTimeline:
    """Piecewise-constant weight over age; breakpoints ascend from age 0."""

    breakpoints: tuple
    weights: tuple

    def segments(self) -> Iterator[tuple[float, float, float]]:
        for i, weight in enumerate(self.weights):
            yield self.breakpoints[i], self.breakpoints[i + 1], weight

    def integrate(self, decay: DecaySpec) -> float:
        return sum(w * decay.integrate(lo, hi) for lo, hi, w in self.segments() if w > 0)


def _closeness_fn(dist: Closeness) -> Callable[[str, str], float]:
    if callable(dist):
        return dist
    table = dict(dist)

    def lookup(a: str, b: str) -> float:
        if a == b:
            return 1.0
        return table.get((a, b), table.get((b, a), 0.0))

    return lookup


def _check_query(log: VisitLog, q: PresenceQuery) -> None:
    log.registry.get(q.location)
    latest = log.latest_end(q.user)
    if latest is not None and latest > q.now:
        raise InvalidParameterError(
            f"[{q.user}] presence evaluated at {q.now}, before the latest visit end {latest}."
        )


def _area(decay: DecaySpec, interval: VisitInterval, now: int) -> float:
    return decay.integrate(age_minutes(now, interval.end), age_minutes(now, interval.start))


def _normalize(value: float, decay: DecaySpec) -> float:
    return min(1.0, max(0.0, value / decay.normalization()))


# ---------------------------------------------------------------------------
# Single-location quantities
# ---------------------------------------------------------------------------

def decayed_visit_time(log: VisitLog, q: PresenceQuery) -> float:
    """Decay-weighted minutes the user spent at the location."""
    _check_query(log, q)
    return sum(_area(q.decay, v, q.now) for v in log.intervals(q.user, q.location, q.now))


def presence(log: VisitLog, q: PresenceQuery) -> float:
    return _normalize(decayed_visit_time(log, q), q.decay)


# ---------------------------------------------------------------------------
# Cumulative presence
# ---------------------------------------------------------------------------

def _weighted_spans(log: VisitLog, q: PresenceQuery, dist: Closeness):
    closeness = _closeness_fn(dist)
    spans = []
    for location_id in log.locations_of(q.user):
        weight = closeness(q.location, location_id)
        for interval in log.intervals(q.user, location_id, q.now):
            spans.append((interval, location_id, weight))
    return spans


def cumulative_presence_single(log: VisitLog, q: PresenceQuery, dist: Closeness,
                               strict: bool = True) -> float:
    """
    Similarity-weighted sum over every visit of the user, normalised.

    Assumes one location at a time and refuses overlapping cross-location
    visits. With strict=False the check is skipped and the unclamped sum is
    returned, which is the over-counting upper bound of the multi variant.
    """
    _check_query(log, q)
    spans = _weighted_spans(log, q, dist)
    if strict:
        latest_end, latest_loc = None, None
        for interval, location_id, _ in sorted(spans, key=lambda s: (s[0].start, s[0].end)):
            if latest_end is not None and interval.start < latest_end and location_id != latest_loc:
                raise OverlappingVisitsError(
                    f"[{q.user}] visits at {latest_loc!r} and {location_id!r} overlap; "
                    "use the multi-location variant."
                )
            if latest_end is None or interval.end > latest_end:
                latest_end, latest_loc = interval.end, location_id

    total = sum(w * _area(q.decay, interval, q.now) for interval, _, w in spans if w > 0)
    if not strict:
        return total / q.decay.normalization()
    return _normalize(total, q.decay)


def build_timeline(log: VisitLog, q: PresenceQuery, dist: Closeness) -> WeightedTimeline:
    """Per-instant max closeness over concurrently visited locations."""
    events: dict[int, list[tuple[int, float]]] = {}
    for interval, _, weight in _weighted_spans(log, q, dist):
        if interval.start == interval.end:
            continue
        events.setdefault(interval.start, []).append((+1, weight))
        events.setdefault(interval.end, []).append((-1, weight))

    times = sorted(events)
    active: Counter = Counter()
    epoch_weights = []
    for t in times:
        for delta, weight in events[t]:
            active[weight] += delta
            if active[weight] == 0:
                del active[weight]
        epoch_weights.append(max(active) if active else 0.0)

    # epoch segment [times[i], times[i+1]] has weight epoch_weights[i];
    # walk backwards from now to get ascending ages.
    breakpoints = [0.0]
    weights = []
    if times and times[-1] < q.now:
        breakpoints.append(age_minutes(q.now, times[-1]))
        weights.append(0.0)
    for i in range(len(times) - 2, -1, -1):
        weight = epoch_weights[i]
        age = age_minutes(q.now, times[i])
        if weights and weights[-1] == weight:
            breakpoints[-1] = age
        else:
            breakpoints.append(age)
            weights.append(weight)
    return WeightedTimeline(tuple(breakpoints), tuple(weights))


def cumulative_presence_multi(log: VisitLog, q: PresenceQuery, dist: Closeness) -> float:
    _check_query(log, q)
    return _normalize(build_timeline(log, q, dist).integrate(q.decay), q.decay)


def evaluate(log: VisitLog, q: PresenceQuery, kind: str = SIMPLE, dist: Closeness = None) -> float:
    """Dispatch on the presence kind used by the REST surface and the CLI."""
    if kind == SIMPLE:
        return presence(log, q)
    if dist is None:
        dist = {}
    if kind == CUMULATIVE_SINGLE:
        return cumulative_presence_single(log, q, dist)
    if kind == CUMULATIVE_MULTI:
        return cumulative_presence_multi(log, q, dist)
    raise InvalidParameterError(f"Unknown presence kind {kind!r}; expected one of {KINDS}.")
