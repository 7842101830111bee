import json
import logging
import os
from datetime import datetime, timezone

LOG_LEVEL = os.environ.get("PRESENCED_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

_configured = False


def _configure():
    global _configured
    if _configured:
        return
    root = logging.getLogger("presenced")
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    root.setLevel(LOG_LEVEL)
    root.propagate = False
    _configured = True


def get_logger(name):
    """Return a logger under the shared `presenced` hierarchy."""
    _configure()
    if not name.startswith("presenced"):
        name = f"presenced.{name}"
    return logging.getLogger(name)


_audit = get_logger("audit")


def log_event(event, **fields):
    """
    Emit one JSON audit line for a state mutation.

    Keys are sorted so identical events produce identical lines, which keeps
    replay logs diffable.
    """
    record = {
        "event": event,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        **fields,
    }
    _audit.info(json.dumps(record, sort_keys=True, default=str))
    return record
