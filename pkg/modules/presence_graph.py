"""
presence_graph.py — the user/location graph and awareness queries

Three typed edge stores, one per endpoint-type signature:

  user_edges      (UserPair)      social ties, symmetric, weight in [0, 1]
  location_edges  (LocationPair)  d_web closeness, symmetric
  presence_edges  (PresenceEdge)  cumulative multi-location presence

A key of one store cannot be built from the endpoints of another, so the
classes stay disjoint. Graphs are immutable; refresh returns a new graph
and callers swap the reference.

User ties file
--------------
  user_a<TAB>user_b<TAB>weight
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, NamedTuple, Optional

from modules.core_model import LocationRegistry, VisitLog
from modules.decay_kernel import DecaySpec
from modules.errors import InvalidParameterError, MalformedRowError, UnknownLocationError
from modules.presence_engine import PresenceQuery, cumulative_presence_multi
from utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_PRUNE_EPSILON = 1e-4


class UserPair(NamedTuple):
    a: str
    b: str

    @classmethod
    def of(cls, u: str, v: str) -> "UserPair":
        return cls(*sorted((u, v)))


class LocationPair(NamedTuple):
    a: str
    b: str

    @classmethod
    def of(cls, l1: str, l2: str) -> "LocationPair":
        return cls(*sorted((l1, l2)))


class PresenceEdge(NamedTuple):
    user: str
    location: str


def _weight(value, label: str) -> float:
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise InvalidParameterError(f"{label} weight must lie in [0, 1], got {value}.")
    return value


@dataclass(frozen=True)
class PresenceGraph:
    users: frozenset = frozenset()
    locations: frozenset = frozenset()
    user_edges: Mapping[UserPair, float] = field(default_factory=dict)
    location_edges: Mapping[LocationPair, float] = field(default_factory=dict)
    presence_edges: Mapping[PresenceEdge, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("user_edges", "location_edges", "presence_edges"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))

    def closeness(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self.location_edges.get(LocationPair.of(a, b), 0.0)

    def tie(self, u: str, v: str) -> float:
        if u == v:
            return 0.0
        return self.user_edges.get(UserPair.of(u, v), 0.0)

    def presence(self, user: str, location: str) -> float:
        return self.presence_edges.get(PresenceEdge(user, location), 0.0)

    def present_at(self, location: str) -> dict[str, float]:
        return {e.user: w for e, w in self.presence_edges.items() if e.location == location}

    def with_presence(self, presence_edges: Mapping[PresenceEdge, float]) -> "PresenceGraph":
        users = self.users | {e.user for e in presence_edges}
        return PresenceGraph(users, self.locations, self.user_edges, self.location_edges, presence_edges)

    def to_dict(self) -> dict:
        return {
            "users": sorted(self.users),
            "locations": sorted(self.locations),
            "user_edges": [[k.a, k.b, w] for k, w in sorted(self.user_edges.items())],
            "location_edges": [[k.a, k.b, w] for k, w in sorted(self.location_edges.items())],
            "presence_edges": [[k.user, k.location, w] for k, w in sorted(self.presence_edges.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PresenceGraph":
        return cls(
            frozenset(data.get("users", [])),
            frozenset(data.get("locations", [])),
            {UserPair(a, b): w for a, b, w in data.get("user_edges", [])},
            {LocationPair(a, b): w for a, b, w in data.get("location_edges", [])},
            {PresenceEdge(u, loc): w for u, loc, w in data.get("presence_edges", [])},
        )


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def read_user_ties(lines: Iterable[str]) -> dict[UserPair, float]:
    ties: dict[UserPair, float] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise MalformedRowError(f"User ties line {lineno}: expected user_a<TAB>user_b<TAB>weight.")
        a, b, w = fields
        if not a or not b or a == b:
            raise MalformedRowError(f"User ties line {lineno}: needs two distinct users.")
        try:
            ties[UserPair.of(a, b)] = _weight(w, "Tie")
        except (ValueError, InvalidParameterError) as exc:
            raise MalformedRowError(f"User ties line {lineno}: {exc}") from None
    return ties


def build_graph(registry: LocationRegistry,
                closeness: Optional[Callable[[str, str], float]] = None,
                user_ties: Optional[Mapping[UserPair, float]] = None) -> PresenceGraph:
    """Graph with location and user edges; presence edges come from refresh."""
    ids = registry.ids()
    location_edges = {}
    if closeness is not None:
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                value = _weight(closeness(a, b), "Closeness")
                if value > 0:
                    location_edges[LocationPair.of(a, b)] = value
    ties = {UserPair.of(*k): _weight(w, "Tie") for k, w in (user_ties or {}).items()}
    users = frozenset(u for pair in ties for u in pair)
    return PresenceGraph(users, frozenset(ids), ties, location_edges, {})


def refresh_presence_edges(graph: PresenceGraph, log: VisitLog, decay: DecaySpec, now: int,
                           prune_epsilon: float = DEFAULT_PRUNE_EPSILON) -> PresenceGraph:
    """Recompute every presence edge at `now`, dropping weights below prune_epsilon."""
    edges: dict[PresenceEdge, float] = {}
    for user in log.users():
        for location_id in sorted(graph.locations):
            q = PresenceQuery(user, location_id, decay, now)
            value = cumulative_presence_multi(log, q, graph.closeness)
            if value >= prune_epsilon and value > 0:
                edges[PresenceEdge(user, location_id)] = value
    logger.debug("Refreshed %d presence edge(s) at %d.", len(edges), now)
    return graph.with_presence(edges)


# ---------------------------------------------------------------------------
# Awareness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AwarenessEntry:
    user: str
    score: float
    location: str
    closeness: float
    presence: float

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "score": self.score,
            "explanation": {
                "location": self.location,
                "d_web": self.closeness,
                "presence": self.presence,
            },
        }


@dataclass(frozen=True)
class AwarenessResult:
    location: str
    requester: str
    entries: tuple = ()

    def users(self) -> list[str]:
        return [e.user for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "requester": self.requester,
            "ranked": [e.to_dict() for e in self.entries],
        }


def _check_location(graph: PresenceGraph, at: str) -> None:
    if at not in graph.locations:
        raise UnknownLocationError(f"Unknown location id {at!r}.")


def _ranked(entries: list[AwarenessEntry]) -> tuple:
    return tuple(sorted(entries, key=lambda e: (-e.score, e.user)))


def co_located_ranked(graph: PresenceGraph, at: str, requester: str) -> AwarenessResult:
    _check_location(graph, at)
    entries = [
        AwarenessEntry(user, weight, at, 1.0, weight)
        for user, weight in graph.present_at(at).items()
        if user != requester
    ]
    return AwarenessResult(at, requester, _ranked(entries))


def extended_awareness(graph: PresenceGraph, at: str, requester: str, top_k: int,
                       theta: float, tie_boost: float = 0.0) -> AwarenessResult:
    """
    One-hop awareness: score(u) = max over l of d_web(at, l) · presence(u, l),
    boosted by (1 + tie_boost · tie(requester, u)) and clamped to 1.

    Users scoring exactly 0 are never listed, even at theta = 0: closeness
    0 or presence 0 means unrelated, and no tie boost lifts a zero score.
    """
    _check_location(graph, at)
    if isinstance(top_k, bool) or not isinstance(top_k, int) or top_k < 1:
        raise InvalidParameterError(f"top_k must be an integer ≥ 1, got {top_k!r}.")
    if not 0.0 <= theta <= 1.0:
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta}.")
    if tie_boost < 0:
        raise InvalidParameterError(f"tie_boost must be ≥ 0, got {tie_boost}.")

    best: dict[str, AwarenessEntry] = {}
    for edge, weight in sorted(graph.presence_edges.items()):
        if edge.user == requester:
            continue
        closeness = graph.closeness(at, edge.location)
        score = closeness * weight
        current = best.get(edge.user)
        if current is None or score > current.score:
            best[edge.user] = AwarenessEntry(edge.user, score, edge.location, closeness, weight)

    entries = []
    for user, entry in best.items():
        score = min(1.0, entry.score * (1.0 + tie_boost * graph.tie(requester, user)))
        if score > 0 and score >= theta:
            entries.append(AwarenessEntry(user, score, entry.location, entry.closeness, entry.presence))
    return AwarenessResult(at, requester, _ranked(entries)[:top_k])
