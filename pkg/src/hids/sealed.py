"""HMAC-sealed line-oriented documents.

Baselines and USB allow-lists share one integrity mechanism: a UTF-8
text body followed by a final ``seal\t<hmac-sha256-hex>`` line computed
over every preceding byte under the operator key. Nothing from the body
is honored before the seal verifies.

The operator key is 32 bytes, sourced from the ``HIDS_SEAL_KEY``
environment variable (64 hex chars) or a key file; when neither is
present a fixed all-zero development key is used and callers must warn
loudly.
"""

from __future__ import annotations

import hmac
import hashlib
import os
import re

__all__ = [
    "DEV_KEY",
    "FormatError",
    "SealInvalidError",
    "escape_field",
    "load_key",
    "open_document",
    "seal_document",
    "unescape_field",
]

DEV_KEY = bytes(32)

_SEAL_LINE = re.compile(rb"^seal\t([0-9a-f]{64})$")
_KEY_HEX = re.compile(r"^[0-9a-fA-F]{64}$")


class SealInvalidError(Exception):
    """The document's seal is missing, malformed, or does not verify."""

    code = "SEAL_INVALID"


class FormatError(Exception):
    """A sealed body that does not follow the expected record grammar."""

    code = "FORMAT_ERROR"

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        at = f" at line {line_number}" if line_number is not None else ""
        super().__init__(f"{message}{at}")


def _seal_hex(body: bytes, key: bytes) -> str:
    return hmac.new(key, body, hashlib.sha256).hexdigest()


def seal_document(body: bytes, key: bytes) -> bytes:
    """Append the seal line to ``body`` (which must end with a newline)."""
    if len(key) != 32:
        raise ValueError("seal key must be exactly 32 bytes")
    if body and not body.endswith(b"\n"):
        raise ValueError("sealed body must end with a newline")
    return body + f"seal\t{_seal_hex(body, key)}\n".encode("ascii")


def open_document(data: bytes, key: bytes) -> bytes:
    """Verify the seal and return the body, or raise SealInvalidError."""
    if len(key) != 32:
        raise ValueError("seal key must be exactly 32 bytes")
    if not data.endswith(b"\n"):
        raise SealInvalidError("document does not end with a seal line")
    head, _, _ = data.rpartition(b"\n")  # drop trailing newline
    body, _, last = head.rpartition(b"\n")
    if body:
        body += b"\n"
    match = _SEAL_LINE.match(last)
    if match is None:
        raise SealInvalidError("final line is not a well-formed seal")
    expected = _seal_hex(body, key)
    if not hmac.compare_digest(expected, match.group(1).decode("ascii")):
        raise SealInvalidError("seal does not verify under this key")
    return body


def load_key(key_file: str | None = None,
             env: dict[str, str] | None = None) -> tuple[bytes, bool]:
    """Resolve the operator key; returns (key, using_dev_key).

    Precedence: ``HIDS_SEAL_KEY`` env var, then ``key_file``, then the
    all-zero development key (flagged so callers can emit a warning).
    """
    environment = os.environ if env is None else env
    raw = environment.get("HIDS_SEAL_KEY")
    source = "HIDS_SEAL_KEY"
    if raw is None and key_file is not None:
        with open(key_file, "r", encoding="utf-8") as fh:
            raw = fh.read().strip()
        source = key_file
    if raw is None:
        return DEV_KEY, True
    if not _KEY_HEX.match(raw):
        raise ValueError(f"{source}: seal key must be 64 hex characters")
    return bytes.fromhex(raw), False


def escape_field(text: str) -> str:
    """Escape backslash, tab, and newline for tab-separated records."""
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_field(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(text):
            raise ValueError("dangling backslash escape")
        nxt = text[i + 1]
        if nxt == "\\":
            out.append("\\")
        elif nxt == "t":
            out.append("\t")
        elif nxt == "n":
            out.append("\n")
        else:
            raise ValueError(f"unknown escape sequence \\{nxt}")
        i += 2
    return "".join(out)
