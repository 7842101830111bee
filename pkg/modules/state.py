"""
state.py — in-memory service state

PresenceState bundles the registry, the visit log, the d_web table and the
presence graph. Mutations go through one lock (single writer). Queries copy
the visit log under the lock and compute outside it, so every answer comes
from one consistent snapshot. The graph is immutable and replaced whole on
refresh.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional, Union

from modules.config import ServiceConfig
from modules.core_model import LocationRegistry, VisitInterval, VisitLog, load_visit_records
from modules.decay_kernel import DecaySpec, parse_decay
from modules.presence_engine import SIMPLE, PresenceQuery, evaluate
from modules.presence_graph import (
    AwarenessResult,
    PresenceGraph,
    UserPair,
    build_graph,
    extended_awareness,
    read_user_ties,
    refresh_presence_edges,
)
from modules.repository import load_locations
from modules.similarity import ContentCorpus, DistanceTable, build_measures
from utils.logger import get_logger, log_event

logger = get_logger(__name__)


def _now(now: Optional[int]) -> int:
    return int(time.time()) if now is None else int(now)


class PresenceState:
    def __init__(self, registry: LocationRegistry, distances: DistanceTable,
                 config: Optional[ServiceConfig] = None,
                 log: Optional[VisitLog] = None,
                 user_ties: Optional[dict] = None,
                 graph: Optional[PresenceGraph] = None):
        self.config = config or ServiceConfig()
        self.registry = registry
        self.distances = distances
        self.log = log if log is not None else VisitLog(registry)
        self.decay = self.config.decay_spec
        self._lock = threading.Lock()
        self._version = 0
        if graph is None:
            distances.fill()
            graph = build_graph(registry, distances, user_ties or {})
        self._graph = graph
        self._graph_key: Optional[tuple[int, int]] = None

    # -- construction ----------------------------------------------------------

    @classmethod
    def from_config(cls, config: ServiceConfig) -> "PresenceState":
        registry = LocationRegistry()
        if config.locations_path:
            registry, _ = load_locations(config.locations_path)
        corpus = ContentCorpus.from_directory(config.corpus_dir) if config.corpus_dir else None
        measures = build_measures(config.measure_names, corpus, config.shingle_len)
        distances = DistanceTable(registry, measures, config.weights)

        ties = {}
        if config.user_ties_path:
            with open(config.user_ties_path, encoding="utf-8") as fh:
                ties = read_user_ties(fh)

        log = VisitLog(registry)
        if config.visit_log_path and Path(config.visit_log_path).exists():
            with open(config.visit_log_path, encoding="utf-8") as fh:
                load_visit_records(log, fh)
        return cls(registry, distances, config, log, ties)

    # -- mutation (single writer) ---------------------------------------------

    def report_visit(self, user: str, location_id: str, start: int,
                     end: Optional[int] = None, now: Optional[int] = None) -> None:
        with self._lock:
            if end is None:
                self.log.open_visit(user, location_id, start, now=now)
            else:
                self.log.add_visit(user, location_id, VisitInterval(start, end), now=now)
            self._version += 1
        log_event("visit_reported", user=user, location_id=location_id, start=start, end=end)

    def close_visit(self, user: str, location_id: str, end: int, now: Optional[int] = None) -> None:
        with self._lock:
            self.log.close_visit(user, location_id, end, now=now)
            self._version += 1
        log_event("visit_closed", user=user, location_id=location_id, end=end)

    def add_visits(self, user: str, visits: dict[str, list[VisitInterval]],
                   now: Optional[int] = None) -> int:
        """Bulk insert detected visits for one user; returns the count."""
        count = 0
        with self._lock:
            for location_id, intervals in sorted(visits.items()):
                for interval in intervals:
                    self.log.add_visit(user, location_id, interval, now=now)
                    count += 1
            self._version += 1
        log_event("visits_replayed", user=user, count=count)
        return count

    # -- queries ---------------------------------------------------------------

    def _log_snapshot(self) -> tuple[VisitLog, int]:
        with self._lock:
            return self.log.snapshot(), self._version

    def presence_value(self, user: str, location_id: str,
                       decay: Union[str, DecaySpec, None] = None,
                       kind: str = SIMPLE, now: Optional[int] = None) -> float:
        if isinstance(decay, str):
            decay = parse_decay(decay)
        log, _ = self._log_snapshot()
        q = PresenceQuery(user, location_id, decay or self.decay, _now(now))
        return evaluate(log, q, kind, self.distances)

    def graph_at(self, now: Optional[int] = None) -> PresenceGraph:
        """Presence graph refreshed at `now`; reused while the log is unchanged."""
        now = _now(now)
        log, version = self._log_snapshot()
        if self._graph_key == (now, version):
            return self._graph
        graph = refresh_presence_edges(self._graph, log, self.decay, now,
                                       self.config.awareness.prune_epsilon)
        with self._lock:
            self._graph, self._graph_key = graph, (now, version)
        return graph

    def awareness(self, user: str, location_id: str, top_k: Optional[int] = None,
                  theta: Optional[float] = None, now: Optional[int] = None) -> AwarenessResult:
        self.registry.get(location_id)
        cfg = self.config.awareness
        return extended_awareness(
            self.graph_at(now), location_id, user,
            cfg.top_k if top_k is None else top_k,
            cfg.theta if theta is None else theta,
            cfg.tie_boost,
        )

    @property
    def graph(self) -> PresenceGraph:
        return self._graph

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        # every pair is evaluated, so a restored table needs no measures
        distances = self.distances.fill()
        with self._lock:
            log = self.log.snapshot()
            graph = self._graph
            graph_key = self._graph_key
        return {
            "config": self.config.dict(),
            "registry": self.registry.to_dict(),
            "distances": [[a, b, w] for (a, b), w in sorted(distances.items())],
            "log": log.to_dict(),
            "graph": graph.to_dict(),
            "graph_at": graph_key[0] if graph_key else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PresenceState":
        config = ServiceConfig.parse_obj(data["config"])
        registry = LocationRegistry.from_dict(data["registry"])
        # pairs absent from the table are 0; no measure evaluation after restore
        distances = DistanceTable(registry)
        for a, b, w in data.get("distances", []):
            distances.set(a, b, w)
        log = VisitLog.from_dict(data["log"], registry)
        graph = PresenceGraph.from_dict(data["graph"])
        state = cls(registry, distances, config, log, graph=graph)
        if data.get("graph_at") is not None:
            state._graph_key = (data["graph_at"], 0)
        return state

    def user_ties(self) -> dict[UserPair, float]:
        return dict(self._graph.user_edges)
