"""
lambda_handler.py — presenced REST gateway (Lambda entry point)

Entry point: handler(event, context), API Gateway HTTP API (v2) events.
`presenced.py serve` feeds the same events from a local HTTP server.

Routes (JSON in, JSON out, integer epoch seconds):
  GET  /locations/nearest?lat=&lon=&radius=        → {location_id, distance_m, geo_room}
  GET  /locations/resolve?uri=                     → {location_id, web_room, geo_room?}
  POST /visits {user, location_id, start, end?}    → 201
  POST /visits/close {user, location_id, end}      → 200
  GET  /presence?user=&location=&decay=&kind=&now= → {value, ...}
  GET  /awareness?user=&location=&top_k=&theta=&now=
  GET  /rooms?location=&kind=web|geo               → {room}
  POST /snapshot {destination?}                    → 201 {destination, size}

Errors answer {"error": message} with the status carried by the
PresenceError subclass; unknown path → 404, wrong method → 405.
"""

import base64
import json
from typing import Optional

import snapshot_utils
from modules.config import load_config
from modules.errors import InvalidParameterError, PresenceError, UnknownLocationError
from modules.geo_mapper import GeoPoint, nearest_location
from modules.presence_engine import SIMPLE
from modules.rooms import assignment_for, room_for
from modules.state import PresenceState
from utils.logger import get_logger

logger = get_logger("gateway")

# ---------------------------------------------------------------------------
# Service state: built lazily from PRESENCED_CONFIG, or injected by the CLI
# ---------------------------------------------------------------------------
_STATE: Optional[PresenceState] = None


def set_state(state: Optional[PresenceState]) -> None:
    global _STATE
    _STATE = state


def get_state() -> PresenceState:
    global _STATE
    if _STATE is None:
        _STATE = PresenceState.from_config(load_config())
    return _STATE


def json_response(status: int, body: dict) -> dict:
    return {
        "statusCode": status,
        "headers": {"Content-Type": "application/json"},
        "body": json.dumps(body, sort_keys=True),
    }


# ---------------------------------------------------------------------------
# Parameter helpers
# ---------------------------------------------------------------------------

def _require(params: dict, name: str):
    value = params.get(name)
    if value is None or value == "":
        raise InvalidParameterError(f"Missing parameter '{name}'.")
    return value


def _as_int(value, name: str) -> int:
    if isinstance(value, bool):
        raise InvalidParameterError(f"Parameter '{name}' must be an integer.")
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"Parameter '{name}' must be an integer, got {value!r}.") from None
    if isinstance(value, float) and number != value:
        raise InvalidParameterError(f"Parameter '{name}' must be an integer, got {value!r}.")
    return number


def _as_float(value, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"Parameter '{name}' must be a number, got {value!r}.") from None


def _optional(params: dict, name: str, cast):
    value = params.get(name)
    if value is None or value == "":
        return None
    return cast(value, name)


def _body(event: dict) -> dict:
    raw_body = event.get("body") or ""
    if event.get("isBase64Encoded"):
        raw_body = base64.b64decode(raw_body).decode("utf-8")
    if not raw_body:
        return {}
    try:
        body = json.loads(raw_body)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"Request body is not valid JSON: {exc}") from None
    if not isinstance(body, dict):
        raise InvalidParameterError("Request body must be a JSON object.")
    return body


# ---------------------------------------------------------------------------
# Route handlers
# ---------------------------------------------------------------------------

def get_nearest(state: PresenceState, params: dict, body: dict) -> dict:
    at = GeoPoint(_as_float(_require(params, "lat"), "lat"), _as_float(_require(params, "lon"), "lon"))
    radius = _as_float(params.get("radius") or state.config.visit.r_v, "radius")
    hit = nearest_location(state.registry, at, radius)
    if hit is None:
        return json_response(404, {"error": f"No location within {radius} m."})
    location_id, distance = hit
    return json_response(200, {
        "location_id": location_id,
        "distance_m": distance,
        "geo_room": room_for(state.registry, location_id, "geo"),
    })


def get_resolve(state: PresenceState, params: dict, body: dict) -> dict:
    uri = _require(params, "uri")
    location_id = state.registry.location_for(uri)
    if location_id is None:
        raise UnknownLocationError(f"No location owns {uri!r}.")
    return json_response(200, assignment_for(state.registry, location_id).to_dict())


def post_visit(state: PresenceState, params: dict, body: dict) -> dict:
    user = _require(body, "user")
    location_id = _require(body, "location_id")
    start = _as_int(_require(body, "start"), "start")
    end = _optional(body, "end", _as_int)
    state.report_visit(user, location_id, start, end)
    return json_response(201, {
        "user": user, "location_id": location_id, "start": start, "end": end, "open": end is None,
    })


def post_visit_close(state: PresenceState, params: dict, body: dict) -> dict:
    user = _require(body, "user")
    location_id = _require(body, "location_id")
    end = _as_int(_require(body, "end"), "end")
    state.close_visit(user, location_id, end)
    return json_response(200, {"user": user, "location_id": location_id, "end": end, "open": False})


def get_presence(state: PresenceState, params: dict, body: dict) -> dict:
    user = _require(params, "user")
    location_id = _require(params, "location")
    decay = params.get("decay") or state.config.decay
    kind = params.get("kind") or SIMPLE
    now = _optional(params, "now", _as_int)
    value = state.presence_value(user, location_id, decay, kind, now)
    return json_response(200, {
        "user": user, "location": location_id, "decay": decay, "kind": kind, "now": now, "value": value,
    })


def get_awareness(state: PresenceState, params: dict, body: dict) -> dict:
    result = state.awareness(
        _require(params, "user"),
        _require(params, "location"),
        top_k=_optional(params, "top_k", _as_int),
        theta=_optional(params, "theta", _as_float),
        now=_optional(params, "now", _as_int),
    )
    return json_response(200, result.to_dict())


def get_room(state: PresenceState, params: dict, body: dict) -> dict:
    room = room_for(state.registry, _require(params, "location"), params.get("kind") or "web")
    return json_response(200, {"room": room})


def post_snapshot(state: PresenceState, params: dict, body: dict) -> dict:
    """Archive the live state, visits reported over REST included."""
    destination = body.get("destination") or state.config.snapshot_path
    if not destination:
        raise InvalidParameterError("No destination: pass one or set snapshot_path.")
    try:
        archive = snapshot_utils.save_state(state.to_dict(), destination, state.config.snapshot_key_path)
    except snapshot_utils.SnapshotError as exc:
        logger.error("[snapshot] %s", exc)
        return json_response(500, {"error": str(exc)})
    return json_response(201, {"destination": destination, "size": len(archive)})


ROUTES: dict = {
    ("GET", "/locations/nearest"): get_nearest,
    ("GET", "/locations/resolve"): get_resolve,
    ("POST", "/visits"): post_visit,
    ("POST", "/visits/close"): post_visit_close,
    ("GET", "/presence"): get_presence,
    ("GET", "/awareness"): get_awareness,
    ("GET", "/rooms"): get_room,
    ("POST", "/snapshot"): post_snapshot,
}
_PATHS = {path for _, path in ROUTES}


# ---------------------------------------------------------------------------
# Lambda entry point
# ---------------------------------------------------------------------------

def handler(event: dict, context) -> dict:  # noqa: ANN001
    method = (
        event.get("requestContext", {})
             .get("http", {})
             .get("method", "GET")
             .upper()
    )
    path = (event.get("rawPath") or "/").rstrip("/") or "/"

    route = ROUTES.get((method, path))
    if route is None:
        if path in _PATHS:
            return json_response(405, {"error": "Method not allowed."})
        return json_response(404, {"error": f"No route for {path}."})

    try:
        params = event.get("queryStringParameters") or {}
        body = _body(event) if method == "POST" else {}
        return route(get_state(), params, body)
    except PresenceError as exc:
        logger.info("[%s %s] %s: %s", method, path, type(exc).__name__, exc)
        return json_response(exc.status, {"error": str(exc)})
    except Exception:
        logger.exception("[%s %s] Unhandled error", method, path)
        return json_response(500, {"error": "Internal error."})


def build_event(method: str, path: str, params: Optional[dict] = None,
                body: Optional[dict] = None) -> dict:
    """API Gateway v2 event for local serving and tests."""
    return {
        "rawPath": path,
        "requestContext": {"http": {"method": method.upper()}},
        "queryStringParameters": params or None,
        "body": json.dumps(body) if body is not None else None,
        "isBase64Encoded": False,
    }
