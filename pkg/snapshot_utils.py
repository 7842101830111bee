"""
snapshot_utils.py — signed state archives for presenced

Archive format
--------------
  <base64url(envelope_json)>.<base64url(hmac_sha256_signature)>

The signature covers the entire base64url-encoded envelope string, so a
truncated or edited archive never decodes.

Envelope fields
---------------
  version    : int   — archive format version (SNAPSHOT_VERSION)
  created_at : int   — unix timestamp of the snapshot
  state      : dict  — PresenceState.to_dict()

Signing key
-----------
  1. env PRESENCED_SNAPSHOT_KEY
  2. SSM parameter named by `snapshot_key_path` (decrypted, cached per process)
  3. LOCAL_KEY — integrity checksum only, no authenticity

Destinations are local paths or s3://bucket/key (SSE AES256).
"""

import base64
import hashlib
import hmac
import json
import os
import time
from pathlib import Path
from typing import Optional

import boto3

from utils.logger import get_logger, log_event

logger = get_logger(__name__)

SNAPSHOT_VERSION = 1
KEY_ENV = "PRESENCED_SNAPSHOT_KEY"
LOCAL_KEY = "presenced-local-checksum-key"

# ---------------------------------------------------------------------------
# Module-level SSM key cache
# ---------------------------------------------------------------------------
_KEY_CACHE: dict[str, str] = {}


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class SnapshotError(Exception):
    """Base class for all archive failures."""

class SnapshotChecksumError(SnapshotError):
    """
    Signature does not match the envelope: the archive is truncated,
    edited, or was signed with another key. Nothing is loaded.
    """

class SnapshotVersionError(SnapshotError):
    """
    Archive is intact but written by an incompatible format version.
    """


# ---------------------------------------------------------------------------
# Internal base64url helpers (RFC 4648 §5, unpadded)
# ---------------------------------------------------------------------------

def _b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _b64url_decode(s: str) -> bytes:
    remainder = len(s) % 4
    if remainder:
        s += "=" * (4 - remainder)
    return base64.urlsafe_b64decode(s)


def _sign(envelope_b64: str, secret: str) -> bytes:
    return hmac.new(secret.encode("utf-8"), envelope_b64.encode("ascii"), digestmod=hashlib.sha256).digest()


# ---------------------------------------------------------------------------
# Key retrieval
# ---------------------------------------------------------------------------

def get_signing_key(ssm_path: str) -> str:
    """
    Fetch the archive signing secret from SSM Parameter Store, decrypted.

    Raises:
        botocore.exceptions.ClientError if the parameter does not exist or
        the caller lacks ssm:GetParameter.
    """
    if ssm_path not in _KEY_CACHE:
        ssm = boto3.client("ssm")
        resp = ssm.get_parameter(Name=ssm_path, WithDecryption=True)
        _KEY_CACHE[ssm_path] = resp["Parameter"]["Value"]
    return _KEY_CACHE[ssm_path]


def resolve_signing_key(ssm_path: Optional[str] = None) -> str:
    secret = os.environ.get(KEY_ENV)
    if secret:
        return secret
    if ssm_path:
        return get_signing_key(ssm_path)
    return LOCAL_KEY


# ---------------------------------------------------------------------------
# Archive creation / restore
# ---------------------------------------------------------------------------

def create_snapshot(state: dict, secret: str) -> str:
    """Sign a state dict and return the archive string."""
    envelope = {
        "version": SNAPSHOT_VERSION,
        "created_at": int(time.time()),
        "state": state,
    }
    envelope_json = json.dumps(envelope, separators=(",", ":"), sort_keys=True)
    envelope_b64 = _b64url_encode(envelope_json.encode("utf-8"))
    return f"{envelope_b64}.{_b64url_encode(_sign(envelope_b64, secret))}"


def restore_snapshot(archive: str, secret: str) -> dict:
    """
    Verify an archive and return its state dict.

    Validation order: signature first (never decode an unverified envelope),
    version second.

    Raises:
        SnapshotChecksumError — malformed, truncated or tampered archive
        SnapshotVersionError  — intact archive of another format version
    """
    try:
        envelope_b64, signature_b64 = archive.strip().rsplit(".", 1)
    except ValueError:
        raise SnapshotChecksumError("Malformed archive: missing '.' separator.")

    try:
        received_sig = _b64url_decode(signature_b64)
    except Exception:
        raise SnapshotChecksumError("Malformed archive: signature segment could not be decoded.")

    if not hmac.compare_digest(_sign(envelope_b64, secret), received_sig):
        raise SnapshotChecksumError("Archive checksum does not match; refusing to load.")

    try:
        envelope = json.loads(_b64url_decode(envelope_b64).decode("utf-8"))
    except Exception:
        raise SnapshotChecksumError("Archive envelope could not be decoded after verification.")

    version = envelope.get("version")
    if version != SNAPSHOT_VERSION:
        raise SnapshotVersionError(
            f"Archive version {version!r} is not supported (expected {SNAPSHOT_VERSION})."
        )
    return envelope["state"]


# ---------------------------------------------------------------------------
# Destinations
# ---------------------------------------------------------------------------

def _split_s3(uri: str) -> tuple[str, str]:
    bucket, _, key = uri[len("s3://"):].partition("/")
    if not bucket or not key:
        raise SnapshotError(f"S3 destination must look like s3://bucket/key, got {uri!r}.")
    return bucket, key


def write_snapshot(archive: str, destination: str) -> str:
    if destination.startswith("s3://"):
        bucket, key = _split_s3(destination)
        boto3.client("s3").put_object(
            Bucket=bucket,
            Key=key,
            Body=archive.encode("ascii"),
            ContentType="text/plain",
            ServerSideEncryption="AES256",
        )
    else:
        Path(destination).write_text(archive, encoding="ascii")
    logger.info("Snapshot written: %s", destination)
    log_event("snapshot_written", destination=destination, size=len(archive))
    return destination


def read_snapshot(source: str) -> str:
    try:
        if source.startswith("s3://"):
            bucket, key = _split_s3(source)
            resp = boto3.client("s3").get_object(Bucket=bucket, Key=key)
            return resp["Body"].read().decode("ascii")
        return Path(source).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise SnapshotError(f"Cannot read archive {source}: {exc}") from exc


def save_state(state: dict, destination: str, ssm_path: Optional[str] = None) -> str:
    """Sign `state` with the resolved key and write it; returns the archive."""
    archive = create_snapshot(state, resolve_signing_key(ssm_path))
    try:
        write_snapshot(archive, destination)
    except OSError as exc:
        raise SnapshotError(f"Cannot write archive {destination}: {exc}") from exc
    return archive
