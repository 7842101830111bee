"""
rooms.py — group-chat room identifiers for locations

Every location owns a web room; locations with a geo binding also own a geo
room. Identifiers are a pure function of (location, kind), so clients and
any chat deployment can derive them without a lookup table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from modules.core_model import LocationRegistry
from modules.errors import InvalidParameterError, UnboundLocationError, UnknownLocationError

WEB = "web"
GEO = "geo"
KINDS = (WEB, GEO)


@dataclass(frozen=True)
class RoomAssignment:
    location: str
    web_room: str
    geo_room: Optional[str] = None

    def to_dict(self) -> dict:
        body = {"location_id": self.location, "web_room": self.web_room}
        if self.geo_room is not None:
            body["geo_room"] = self.geo_room
        return body


def room_for(registry: LocationRegistry, location_id: str, kind: str) -> str:
    if kind not in KINDS:
        raise InvalidParameterError(f"Room kind must be one of {KINDS}, got {kind!r}.")
    registry.get(location_id)
    if kind == GEO and registry.point(location_id) is None:
        raise UnboundLocationError(f"Location {location_id!r} has no physical counterpart.")
    return f"{kind}-{location_id}"


def assignment_for(registry: LocationRegistry, location_id: str) -> RoomAssignment:
    geo = room_for(registry, location_id, GEO) if registry.point(location_id) is not None else None
    return RoomAssignment(location_id, room_for(registry, location_id, WEB), geo)


def location_for_room(registry: LocationRegistry, room: str) -> tuple[str, str]:
    """Inverse of room_for: (location_id, kind)."""
    kind, sep, location_id = room.partition("-")
    if not sep or kind not in KINDS:
        raise InvalidParameterError(f"Not a room identifier: {room!r}.")
    if location_id not in registry:
        raise UnknownLocationError(f"Room {room!r} names unknown location {location_id!r}.")
    return location_id, kind
