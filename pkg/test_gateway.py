"""
test_gateway.py — REST routes, CLI and snapshot determinism

Every REST answer is compared against the library call it wraps. The
end-to-end test drives the CLI: load → replay a track → query over REST →
snapshot → restore → the same queries answer byte-identically.

Run from the project root (no AWS credentials needed):
  python test_gateway.py      (or: pytest test_gateway.py)
"""

import base64
import contextlib
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from unittest import mock

import pytest

import lambda_handler
import presenced
import snapshot_utils
from lambda_handler import build_event, handler
from modules.config import ServiceConfig, load_config
from modules.geo_mapper import EARTH_RADIUS_M, GeoPoint
from modules.repository import read_locations
from modules.similarity import DOMAIN_EQUALITY, DistanceTable, WeightVector
from modules.state import PresenceState
from utils.script_runner import run_module_tests

PUB = GeoPoint(53.2744, -9.0494)
T0 = 1_650_000_000
NOW = T0 + 3600

LOCATIONS_CSV = (
    "location_id,name,lat,lon,url\n"
    "L1,Pub,53.2744,-9.0494,http://pub.example/\n"
    "L2,Pub terrace,{lat2},{lon2},http://www.pub.example/terrace\n"
    "L3,Web shop,,,http://shop.example/\n"
)


def _east(point: GeoPoint, metres: float) -> GeoPoint:
    dlon = metres / (EARTH_RADIUS_M * math.cos(math.radians(point.lat))) * 180 / math.pi
    return GeoPoint(point.lat, point.lon + dlon)


TERRACE = _east(PUB, 300)


def _locations_text() -> str:
    return LOCATIONS_CSV.format(lat2=TERRACE.lat, lon2=TERRACE.lon)


def _state(decay: str = "window:60") -> PresenceState:
    registry, _ = read_locations(io.StringIO(_locations_text()))
    distances = DistanceTable(registry, [DOMAIN_EQUALITY], WeightVector((("domain_equality", 1.0),)))
    return PresenceState(registry, distances, ServiceConfig(decay=decay))


def _call(method, path, params=None, body=None):
    response = handler(build_event(method, path, params, body), None)
    return response["statusCode"], json.loads(response["body"])


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------

def test_unknown_path_and_wrong_method():
    lambda_handler.set_state(_state())
    assert _call("GET", "/nowhere")[0] == 404
    assert _call("GET", "/visits")[0] == 405
    assert _call("DELETE", "/presence")[0] == 405


def test_unhandled_error_is_500():
    lambda_handler.set_state(_state())

    def boom(state, params, body):
        raise RuntimeError("boom")

    with mock.patch.dict(lambda_handler.ROUTES, {("GET", "/rooms"): boom}):
        status, body = _call("GET", "/rooms", {"location": "L1"})
    assert status == 500
    assert "boom" not in body["error"]


# ---------------------------------------------------------------------------
# Locations and rooms
# ---------------------------------------------------------------------------

def test_nearest_location():
    lambda_handler.set_state(_state())
    status, body = _call("GET", "/locations/nearest", {"lat": str(PUB.lat), "lon": str(_east(PUB, 20).lon),
                                                       "radius": "50"})
    assert status == 200
    assert body["location_id"] == "L1"
    assert body["geo_room"] == "geo-L1"
    assert body["distance_m"] == pytest.approx(20, abs=0.01)
    far = _east(PUB, 1000)
    assert _call("GET", "/locations/nearest", {"lat": str(far.lat), "lon": str(far.lon), "radius": "50"})[0] == 404
    assert _call("GET", "/locations/nearest", {"lat": "95", "lon": "0"})[0] == 400


def test_resolve_uri():
    lambda_handler.set_state(_state())
    status, body = _call("GET", "/locations/resolve", {"uri": "http://WWW.pub.example/terrace"})
    assert status == 200
    assert body == {"location_id": "L2", "web_room": "web-L2", "geo_room": "geo-L2"}
    assert _call("GET", "/locations/resolve", {"uri": "http://elsewhere.example/"})[0] == 404


def test_rooms():
    lambda_handler.set_state(_state())
    assert _call("GET", "/rooms", {"location": "L3"}) == (200, {"room": "web-L3"})
    assert _call("GET", "/rooms", {"location": "L1", "kind": "geo"}) == (200, {"room": "geo-L1"})
    assert _call("GET", "/rooms", {"location": "L3", "kind": "geo"})[0] == 404
    assert _call("GET", "/rooms", {"location": "L9"})[0] == 404


# ---------------------------------------------------------------------------
# Visits, presence, awareness
# ---------------------------------------------------------------------------

def test_open_then_close_visit():
    state = _state()
    lambda_handler.set_state(state)
    status, body = _call("POST", "/visits", body={"user": "amy", "location_id": "L1", "start": NOW - 600})
    assert status == 201 and body["open"] is True
    params = {"user": "amy", "location": "L1", "now": str(NOW)}
    assert _call("GET", "/presence", params)[1]["value"] == pytest.approx(10 / 60, abs=1e-12)

    status, body = _call("POST", "/visits/close", body={"user": "amy", "location_id": "L1", "end": NOW - 300})
    assert status == 200
    assert _call("GET", "/presence", params)[1]["value"] == pytest.approx(5 / 60, abs=1e-12)
    assert _call("POST", "/visits/close", body={"user": "amy", "location_id": "L1", "end": NOW})[0] == 400


def test_visit_validation():
    lambda_handler.set_state(_state())
    assert _call("POST", "/visits", body={"user": "amy", "location_id": "L1"})[0] == 400
    assert _call("POST", "/visits", body={"user": "amy", "location_id": "L9", "start": T0})[0] == 404
    assert _call("POST", "/visits", body={"user": "amy", "location_id": "L1",
                                          "start": T0 + 10, "end": T0})[0] == 400
    event = build_event("POST", "/visits")
    event["body"] = "{not json"
    assert handler(event, None)["statusCode"] == 400


def test_base64_body_accepted():
    lambda_handler.set_state(_state())
    event = build_event("POST", "/visits")
    raw = json.dumps({"user": "amy", "location_id": "L1", "start": T0, "end": T0 + 60})
    event["body"] = base64.b64encode(raw.encode("utf-8")).decode("ascii")
    event["isBase64Encoded"] = True
    assert handler(event, None)["statusCode"] == 201


def test_presence_matches_library():
    state = _state()
    state.report_visit("amy", "L1", NOW - 1800, NOW - 600, now=NOW)
    state.report_visit("amy", "L2", NOW - 900, NOW - 60, now=NOW)
    state.report_visit("bob", "L3", NOW - 3000, NOW, now=NOW)
    lambda_handler.set_state(state)
    for decay in ("window:60", "exp:0.05", "linear:90"):
        for kind in ("simple", "cumulative_multi"):
            for user in ("amy", "bob"):
                for location_id in ("L1", "L2", "L3"):
                    status, body = _call("GET", "/presence", {
                        "user": user, "location": location_id, "decay": decay, "kind": kind, "now": str(NOW),
                    })
                    assert status == 200
                    assert body["value"] == state.presence_value(user, location_id, decay, kind, NOW)
    assert _call("GET", "/presence", {"user": "amy", "location": "L1", "decay": "cubic:2"})[0] == 400
    assert _call("GET", "/presence", {"user": "amy", "location": "L9", "now": str(NOW)})[0] == 404
    assert _call("GET", "/presence", {"user": "amy", "location": "L1", "kind": "cumulative_single",
                                      "now": str(NOW)})[0] == 409


def test_awareness_matches_library():
    state = _state()
    state.report_visit("amy", "L1", NOW - 3600, NOW, now=NOW)
    state.report_visit("bob", "L2", NOW - 1200, NOW, now=NOW)
    state.report_visit("cat", "L3", NOW - 3600, NOW, now=NOW)
    lambda_handler.set_state(state)
    status, body = _call("GET", "/awareness", {"user": "me", "location": "L1", "top_k": "5", "now": str(NOW)})
    assert status == 200
    expected = state.awareness("me", "L1", top_k=5, now=NOW).to_dict()
    assert body == json.loads(json.dumps(expected))
    assert [e["user"] for e in body["ranked"]] == ["amy", "bob"]
    assert body["ranked"][0]["score"] == 1.0
    assert _call("GET", "/awareness", {"user": "me", "location": "L1", "top_k": "0"})[0] == 400


# ---------------------------------------------------------------------------
# Live-state snapshots
# ---------------------------------------------------------------------------

def _restore(path: str) -> PresenceState:
    archive = snapshot_utils.read_snapshot(path)
    return PresenceState.from_dict(snapshot_utils.restore_snapshot(archive, "test-key"))


def test_snapshot_route_keeps_visits_reported_over_rest():
    with tempfile.TemporaryDirectory() as tmp, \
            mock.patch.dict(os.environ, {snapshot_utils.KEY_ENV: "test-key"}):
        destination = str(Path(tmp, "live.snapshot"))
        lambda_handler.set_state(_state("exp:0.05"))
        visit = {"user": "amy", "location_id": "L1", "start": NOW - 1800, "end": NOW - 60}
        assert _call("POST", "/visits", body=visit)[0] == 201
        assert _call("POST", "/visits", body={"user": "bob", "location_id": "L2", "start": NOW - 300})[0] == 201
        queries = [{"user": user, "location": loc, "kind": kind, "now": str(NOW)}
                   for user in ("amy", "bob") for loc in ("L1", "L2")
                   for kind in ("simple", "cumulative_multi")]
        before = [_call("GET", "/presence", params) for params in queries]
        assert before[0][1]["value"] > 0

        status, body = _call("POST", "/snapshot", body={"destination": destination})
        assert status == 201
        assert body["destination"] == destination and body["size"] > 0

        lambda_handler.set_state(_restore(destination))
        assert [_call("GET", "/presence", params) for params in queries] == before


def test_snapshot_route_needs_a_destination():
    lambda_handler.set_state(_state())
    assert _call("POST", "/snapshot")[0] == 400
    assert _call("GET", "/snapshot")[0] == 405
    with tempfile.TemporaryDirectory() as tmp:
        missing_dir = str(Path(tmp, "absent", "live.snapshot"))
        assert _call("POST", "/snapshot", body={"destination": missing_dir})[0] == 500


def test_shutdown_snapshot_writes_served_state():
    state = _state()
    state.report_visit("amy", "L1", NOW - 600, NOW, now=NOW)
    with tempfile.TemporaryDirectory() as tmp, \
            mock.patch.dict(os.environ, {snapshot_utils.KEY_ENV: "test-key"}):
        path = str(Path(tmp, "shutdown.snapshot"))
        assert presenced.snapshot_on_shutdown(state, ServiceConfig(snapshot_path=path)) is True
        assert _restore(path).log == state.log
        assert presenced.snapshot_on_shutdown(state, ServiceConfig()) is False
        unwritable = ServiceConfig(snapshot_path=str(Path(tmp, "absent", "x.snapshot")))
        assert presenced.snapshot_on_shutdown(state, unwritable) is False


def test_fresh_deployment_without_visit_log():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "locations.csv").write_text(_locations_text(), encoding="utf-8")
        config_path = tmp / "presenced.json"
        config_path.write_text(json.dumps({
            "locations_path": str(tmp / "locations.csv"),
            "visit_log_path": str(tmp / "visits.tsv"),
        }), encoding="utf-8")
        with mock.patch.dict(os.environ, {"PRESENCED_CONFIG": str(config_path)}):
            lambda_handler.set_state(None)
            assert _call("GET", "/rooms", {"location": "L1"}) == (200, {"room": "web-L1"})
        lambda_handler.set_state(None)


# ---------------------------------------------------------------------------
# CLI end to end
# ---------------------------------------------------------------------------

def _write_track(path: Path) -> None:
    rows = ["epoch_seconds,lat,lon"]
    legs = [(_east(PUB, 5), 120), (_east(PUB, 150), 60), (_east(TERRACE, -5), 100)]
    t = T0
    for point, seconds in legs:
        for _ in range(seconds):
            rows.append(f"{t},{point.lat!r},{point.lon!r}")
            t += 1
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _run_cli(argv) -> tuple[int, str]:
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = presenced.main(argv)
    return code, out.getvalue()


def _answers() -> list[str]:
    queries = [
        ("/presence", {"user": "walker", "location": loc, "kind": kind, "now": str(NOW)})
        for loc in ("L1", "L2", "L3") for kind in ("simple", "cumulative_multi")
    ] + [
        ("/awareness", {"user": "me", "location": loc, "now": str(NOW)}) for loc in ("L1", "L2", "L3")
    ]
    return [handler(build_event("GET", path, params), None)["body"] for path, params in queries]


def test_load_replay_serve_snapshot_restore():
    with tempfile.TemporaryDirectory() as tmp, \
            mock.patch.dict(os.environ, {snapshot_utils.KEY_ENV: "test-key"}):
        tmp = Path(tmp)
        (tmp / "locations.csv").write_text(_locations_text(), encoding="utf-8")
        _write_track(tmp / "track.csv")
        config_path = tmp / "presenced.json"
        config_path.write_text(json.dumps({
            "decay": "exp:0.05",
            "visit": {"r_v": 25, "t_v_min": 60},
            "locations_path": str(tmp / "locations.csv"),
            "visit_log_path": str(tmp / "visits.tsv"),
        }), encoding="utf-8")
        cfg = ["--config", str(config_path)]

        code, out = _run_cli(cfg + ["load-locations", str(tmp / "locations.csv")])
        assert code == 0
        loaded = json.loads(out)
        assert loaded == {"geo_bound": 2, "loaded": 3, "rejected": 0, "virtual_only": 1}

        assert presenced.main(cfg + ["replay-track", str(tmp / "track.csv"), "--r-v", "25,100",
                                     "--t-v-min", "60", "--csv", str(tmp / "report.csv"),
                                     "--append-log", str(tmp / "visits.tsv")]) == 0
        assert (tmp / "visits.tsv").read_text(encoding="utf-8").splitlines() == [
            f"walker\tL1\t{T0}\t{T0 + 119}",
            f"walker\tL2\t{T0 + 180}\t{T0 + 279}",
        ]
        report = (tmp / "report.csv").read_text(encoding="utf-8").splitlines()
        assert report[1].startswith("25.0,60,218,2,2,")

        state = PresenceState.from_config(load_config(str(config_path)))
        lambda_handler.set_state(state)
        before = _answers()

        assert presenced.main(cfg + ["snapshot", str(tmp / "state.snapshot")]) == 0
        archive = snapshot_utils.read_snapshot(str(tmp / "state.snapshot"))
        restored = PresenceState.from_dict(snapshot_utils.restore_snapshot(archive, "test-key"))
        lambda_handler.set_state(restored)
        assert _answers() == before

        code, out = _run_cli(cfg + ["restore", str(tmp / "state.snapshot")])
        assert code == 0
        summary = json.loads(out)
        assert summary["locations"] == 3 and summary["users"] == 1

        (tmp / "broken.snapshot").write_text(archive[:-4], encoding="ascii")
        assert presenced.main(cfg + ["restore", str(tmp / "broken.snapshot")]) == 1


def test_cli_presence_matches_library():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "locations.csv").write_text(_locations_text(), encoding="utf-8")
        (tmp / "visits.tsv").write_text(f"amy\tL1\t{NOW - 900}\t{NOW}\n", encoding="utf-8")
        code, out = _run_cli(["presence", "--user", "amy", "--location", "L1", "--decay", "window:60",
                              "--now", str(NOW), "--locations", str(tmp / "locations.csv"),
                              "--visits", str(tmp / "visits.tsv")])
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(0.25, abs=1e-12)
        assert presenced.main(["presence", "--user", "amy", "--location", "L9", "--now", str(NOW),
                               "--locations", str(tmp / "locations.csv")]) == 1


def test_cli_coverage():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "locations.csv").write_text(_locations_text(), encoding="utf-8")
        region = f"{PUB.lat - 0.005},{PUB.lon - 0.01},{PUB.lat + 0.005},{PUB.lon + 0.01}"
        code, out = _run_cli(["coverage", "--locations", str(tmp / "locations.csv"), "--region", region,
                              "--square-m", "100", "--r-v", "50,100,200",
                              "--histogram", str(tmp / "hist.csv")])
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "r_v,coverage_percent"
        values = [float(line.split(",")[1]) for line in lines[1:]]
        assert len(values) == 3 and values == sorted(values) and values[0] > 0
        assert (tmp / "hist.csv").read_text(encoding="utf-8").splitlines()[1:] == ["1,2"]


if __name__ == "__main__":
    sys.exit(run_module_tests(globals(), "gateway.py"))
