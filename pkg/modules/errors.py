"""
errors.py — exception hierarchy for presenced

Every failure a caller can act on derives from PresenceError. Each subclass
carries the HTTP status the REST gateway answers with, so lambda_handler.py
can translate library errors without a lookup table of its own.
"""


class PresenceError(Exception):
    """Base class for all presenced failures."""

    status = 400


# ---------------------------------------------------------------------------
# Lookups
# ---------------------------------------------------------------------------

class UnknownLocationError(PresenceError):
    """
    Location id is not registered in the LocationRegistry.
    HTTP response: 404 Not Found.
    """

    status = 404


class UnboundLocationError(PresenceError):
    """
    A physical counterpart was requested (geo room, radius query) for a
    location that has no geo binding.
    HTTP response: 404 Not Found.
    """

    status = 404


# ---------------------------------------------------------------------------
# Input validation
# ---------------------------------------------------------------------------

class InvalidIntervalError(PresenceError):
    """Visit interval with start > end, or ending after `now`."""


class InvalidCoordinateError(PresenceError):
    """Virtual coordinate is not an absolute URI with a parsable host."""


class InvalidDecayError(PresenceError):
    """Decay spec string or parameters are malformed, or an age is negative."""


class DivergentDecayError(InvalidDecayError):
    """
    Decay whose normalisation integral is infinite (identically 1, or a
    tabulated decay without a horizon). Rejected at construction.
    """


class InvalidWeightsError(PresenceError):
    """Similarity weights do not sum to 1, are negative, or name unknown measures."""


class InvalidParameterError(PresenceError):
    """Out-of-range query or configuration parameter."""


class InvalidGeoPointError(PresenceError):
    """Latitude outside [-90, 90] or longitude outside [-180, 180]."""


class MalformedRowError(PresenceError):
    """A row of an input file does not match its documented schema."""


class TrackOrderError(PresenceError):
    """GPS readings are not strictly increasing in time."""


# ---------------------------------------------------------------------------
# State conflicts
# ---------------------------------------------------------------------------

class OverlappingVisitsError(PresenceError):
    """
    Single-location cumulative presence assumes one location at a time.
    Raised when a user's visits at different locations overlap; callers
    must use the multi-location variant instead.
    HTTP response: 409 Conflict.
    """

    status = 409


class CoordinateConflictError(PresenceError):
    """
    A virtual coordinate is already owned by another location in the same
    registry (coordinate sets must stay pairwise disjoint).
    HTTP response: 409 Conflict.
    """

    status = 409


class DuplicateLocationError(PresenceError):
    """HTTP response: 409 Conflict."""

    status = 409


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

class PagecountReadError(PresenceError):
    """Pagecount stream could not be opened or decompressed."""

    status = 500
