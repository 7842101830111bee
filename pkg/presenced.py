#!/usr/bin/env python3
"""
presenced.py — command-line entry point

Usage (from the project root):
  python presenced.py [--config FILE] <command> [options]

Commands:
  serve               run the REST gateway on listen_host:listen_port
  load-locations      validate a locations CSV and report loaded/rejected rows
  replay-track        GPS CSV → detected visits + track report (CSV, JSONL, PDF)
  analyze-pagecounts  raw pagecount files → visitor distribution + meeting probability
  coverage            grid coverage sweep over r_v, plus locations-per-square histogram
  presence            one-off presence query over a visit-log file
  snapshot            write a signed archive of the state built from the config files
                      (the running server archives itself: POST /snapshot, or at shutdown)
  restore             verify an archive and print what it holds

The config file comes from --config, else PRESENCED_CONFIG.
Exit status: 0 success, 1 domain or archive error, 2 usage error.
"""

import argparse
import contextlib
import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qsl, urlsplit

import lambda_handler
import snapshot_utils
from modules.analytics import (
    ingest_files,
    meeting_probability_curve,
    track_report,
    visitor_distribution,
    write_distribution_csv,
    write_meeting_csv,
    write_series_jsonl,
    write_track_csv,
)
from modules.config import ServiceConfig, load_config
from modules.core_model import LocationRegistry, VisitLog, dump_visit_records, load_visit_records
from modules.errors import InvalidParameterError, PresenceError
from modules.geo_mapper import (
    Region,
    VisitParams,
    coverage_curve,
    detect_visits,
    grid_distribution,
    read_track_csv,
)
from modules.presence_engine import KINDS, SIMPLE
from modules.report_pdf import generate_meeting_pdf, generate_track_pdf
from modules.repository import load_locations
from modules.state import PresenceState
from utils.logger import get_logger, log_event

logger = get_logger("cli")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _int_range(text: str) -> list[int]:
    """`2:30` → 2..30 inclusive, or a comma list."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return _ints(text)


def _output(path):
    """Open `path` for writing, or stdout for None / '-'."""
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


def _registry(config: ServiceConfig, override) -> LocationRegistry:
    path = override or config.locations_path
    if not path:
        raise InvalidParameterError("No locations file: pass --locations or set locations_path.")
    registry, _ = load_locations(path)
    return registry


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

class GatewayRequestHandler(BaseHTTPRequestHandler):
    """Turns HTTP requests into API Gateway v2 events for lambda_handler."""

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        length = int(self.headers.get("Content-Length") or 0)
        raw_body = self.rfile.read(length).decode("utf-8") if length else None
        event = {
            "rawPath": parts.path,
            "requestContext": {"http": {"method": method}},
            "queryStringParameters": dict(parse_qsl(parts.query)) or None,
            "body": raw_body,
            "isBase64Encoded": False,
        }
        response = lambda_handler.handler(event, None)
        payload = response["body"].encode("utf-8")
        self.send_response(response["statusCode"])
        for name, value in response.get("headers", {}).items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):  # noqa: N802
        self._dispatch("GET")

    def do_POST(self):  # noqa: N802
        self._dispatch("POST")

    def do_PUT(self):  # noqa: N802
        self._dispatch("PUT")

    def do_DELETE(self):  # noqa: N802
        self._dispatch("DELETE")

    def log_message(self, fmt, *args):
        logger.info("%s - %s", self.address_string(), fmt % args)


def cmd_serve(args, config: ServiceConfig) -> int:
    config.check_paths()
    state = PresenceState.from_config(config)
    if args.restore:
        secret = snapshot_utils.resolve_signing_key(config.snapshot_key_path)
        state = PresenceState.from_dict(
            snapshot_utils.restore_snapshot(snapshot_utils.read_snapshot(args.restore), secret)
        )
    lambda_handler.set_state(state)
    server = ThreadingHTTPServer((config.listen_host, config.listen_port), GatewayRequestHandler)
    logger.info("Serving on http://%s:%d (%d location(s)).",
                config.listen_host, config.listen_port, len(state.registry))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("Shutting down.")
    finally:
        server.server_close()
        snapshot_on_shutdown(lambda_handler.get_state(), config)
    return 0


def snapshot_on_shutdown(state: PresenceState, config: ServiceConfig) -> bool:
    """Archive the served state to snapshot_path, when one is configured."""
    if not config.snapshot_path:
        return False
    try:
        snapshot_utils.save_state(state.to_dict(), config.snapshot_path, config.snapshot_key_path)
    except snapshot_utils.SnapshotError as exc:
        logger.error("[snapshot] Shutdown snapshot failed: %s", exc)
        return False
    return True


# ---------------------------------------------------------------------------
# load-locations
# ---------------------------------------------------------------------------

def cmd_load_locations(args, config: ServiceConfig) -> int:
    registry, report = load_locations(args.path, strict=args.strict)
    print(json.dumps({
        "loaded": report.loaded,
        "rejected": report.rejected,
        "virtual_only": report.virtual_only,
        "geo_bound": len(registry.bindings()),
    }, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# replay-track
# ---------------------------------------------------------------------------

def cmd_replay_track(args, config: ServiceConfig) -> int:
    registry = _registry(config, args.locations)
    with open(args.track, newline="", encoding="utf-8") as fh:
        track = read_track_csv(fh)

    r_v_list = _floats(args.r_v) if args.r_v else [config.visit.r_v]
    t_v_min_list = _ints(args.t_v_min) if args.t_v_min else [config.visit.t_v_min]
    report = track_report(track, registry, r_v_list, t_v_min_list, config.visit.gap_max)

    with _output(args.csv) as fh:
        write_track_csv(report, fh)
    if args.series:
        with _output(args.series) as fh:
            write_series_jsonl(report, fh)
    if args.pdf:
        Path(args.pdf).write_bytes(generate_track_pdf(report, Path(args.track).name))
        logger.info("Track report PDF written: %s", args.pdf)

    if args.append_log:
        params = VisitParams(config.visit.r_v, config.visit.t_v_min, config.visit.gap_max)
        log = VisitLog(registry)
        log_path = Path(args.append_log)
        if log_path.exists():
            with log_path.open(encoding="utf-8") as fh:
                load_visit_records(log, fh)
        visits = detect_visits(track, registry, params)
        for location_id, intervals in sorted(visits.items()):
            for interval in intervals:
                log.add_visit(args.user, location_id, interval)
        log_path.write_text(dump_visit_records(log), encoding="utf-8")
        count = sum(len(v) for v in visits.values())
        logger.info("[%s] %d visit(s) appended to %s.", args.user, count, log_path)
        log_event("visits_replayed", user=args.user, count=count, path=str(log_path))
    return 0


# ---------------------------------------------------------------------------
# analyze-pagecounts
# ---------------------------------------------------------------------------

def cmd_analyze_pagecounts(args, config: ServiceConfig) -> int:
    result = ingest_files(args.files, args.project)
    curve = meeting_probability_curve(result.records, _int_range(args.xs))
    with _output(args.out) as fh:
        write_meeting_csv(curve, fh)
    if args.distribution:
        with _output(args.distribution) as fh:
            write_distribution_csv(visitor_distribution(result.records), fh)
    if args.pdf:
        Path(args.pdf).write_bytes(generate_meeting_pdf(curve, f"Meeting probability ({args.project})"))
    logger.info("%d record(s), %d malformed line(s).", len(result.records), result.malformed)
    return 0


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def cmd_coverage(args, config: ServiceConfig) -> int:
    registry = _registry(config, args.locations)
    region = Region.from_list(_floats(args.region)) if args.region else config.region_box
    if region is None:
        raise InvalidParameterError("No region: pass --region or set region in the config.")
    square_m = args.square_m or config.grid.square_m
    r_v_list = _floats(args.r_v) if args.r_v else [config.visit.r_v]

    with _output(args.out) as fh:
        fh.write("r_v,coverage_percent\n")
        for r_v, percent in coverage_curve(registry, region, square_m, r_v_list):
            fh.write(f"{r_v:g},{percent!r}\n")
    if args.histogram:
        with _output(args.histogram) as fh:
            fh.write("locations_per_square,frequency\n")
            for per_square, frequency in grid_distribution(registry, region, square_m).items():
                fh.write(f"{per_square},{frequency}\n")
    return 0


# ---------------------------------------------------------------------------
# presence
# ---------------------------------------------------------------------------

def cmd_presence(args, config: ServiceConfig) -> int:
    if args.locations:
        config = config.copy(update={"locations_path": args.locations})
    if args.visits:
        config = config.copy(update={"visit_log_path": args.visits})
    state = PresenceState.from_config(config)
    value = state.presence_value(args.user, args.location, args.decay or config.decay, args.kind, args.now)
    print(json.dumps({
        "user": args.user, "location": args.location, "kind": args.kind, "now": args.now, "value": value,
    }, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# snapshot / restore
# ---------------------------------------------------------------------------

def cmd_snapshot(args, config: ServiceConfig) -> int:
    """Archive the state built from the config files; a running server answers POST /snapshot."""
    destination = args.destination or config.snapshot_path
    if not destination:
        raise InvalidParameterError("No destination: pass one or set snapshot_path.")
    state = PresenceState.from_config(config)
    snapshot_utils.save_state(state.to_dict(), destination, config.snapshot_key_path)
    return 0


def cmd_restore(args, config: ServiceConfig) -> int:
    source = args.source or config.snapshot_path
    if not source:
        raise InvalidParameterError("No source: pass one or set snapshot_path.")
    secret = snapshot_utils.resolve_signing_key(config.snapshot_key_path)
    state = PresenceState.from_dict(snapshot_utils.restore_snapshot(snapshot_utils.read_snapshot(source), secret))
    log_event("snapshot_restored", source=source)
    if args.visit_log:
        Path(args.visit_log).write_text(dump_visit_records(state.log), encoding="utf-8")
    print(json.dumps({
        "locations": len(state.registry),
        "users": len(state.log.users()),
        "presence_edges": len(state.graph.presence_edges),
    }, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="presenced", description="Decay-weighted presence service.")
    parser.add_argument("--config", help="JSON config file (default: $PRESENCED_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the REST gateway")
    p.add_argument("--restore", help="start from a snapshot archive (path or s3://)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("load-locations", help="validate a locations CSV")
    p.add_argument("path")
    p.add_argument("--strict", action="store_true", help="fail on the first bad row")
    p.set_defaults(func=cmd_load_locations)

    p = sub.add_parser("replay-track", help="GPS track → visits and track report")
    p.add_argument("track")
    p.add_argument("--locations")
    p.add_argument("--user", default="walker")
    p.add_argument("--r-v", help="comma list of vicinity radii in metres")
    p.add_argument("--t-v-min", help="comma list of minimum visiting times in seconds")
    p.add_argument("--csv", help="track matrix CSV (default stdout)")
    p.add_argument("--series", help="parallel-visit series JSON lines")
    p.add_argument("--pdf", help="render the report tables to PDF")
    p.add_argument("--append-log", help="append detected visits to this visit-log file")
    p.set_defaults(func=cmd_replay_track)

    p = sub.add_parser("analyze-pagecounts", help="meeting probability from raw pagecounts")
    p.add_argument("files", nargs="+")
    p.add_argument("--project", default="en")
    p.add_argument("--xs", default="2:30", help="x values, `lo:hi` or comma list")
    p.add_argument("--out", help="meeting-probability CSV (default stdout)")
    p.add_argument("--distribution", help="visitor distribution CSV")
    p.add_argument("--pdf")
    p.set_defaults(func=cmd_analyze_pagecounts)

    p = sub.add_parser("coverage", help="grid coverage sweep")
    p.add_argument("--locations")
    p.add_argument("--region", help="lat_min,lon_min,lat_max,lon_max")
    p.add_argument("--square-m", type=float)
    p.add_argument("--r-v", help="comma list of radii in metres")
    p.add_argument("--out", help="coverage CSV (default stdout)")
    p.add_argument("--histogram", help="locations-per-square CSV")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("presence", help="one-off presence query")
    p.add_argument("--user", required=True)
    p.add_argument("--location", required=True)
    p.add_argument("--decay")
    p.add_argument("--kind", choices=KINDS, default=SIMPLE)
    p.add_argument("--now", type=int)
    p.add_argument("--locations")
    p.add_argument("--visits", help="visit-log file")
    p.set_defaults(func=cmd_presence)

    p = sub.add_parser("snapshot", help="write a signed archive of the configured state")
    p.add_argument("destination", nargs="?", help="path or s3://bucket/key")
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("restore", help="verify an archive")
    p.add_argument("source", nargs="?")
    p.add_argument("--visit-log", help="write the restored visit log here")
    p.set_defaults(func=cmd_restore)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, check_paths=False)
        return args.func(args, config)
    except PresenceError as exc:
        logger.error("[%s] %s", type(exc).__name__, exc)
        return 1
    except snapshot_utils.SnapshotError as exc:
        logger.error("[%s] %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
