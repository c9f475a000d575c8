"""USB device identity, the trusted allow-list, and enforcement.

A device's ID is the SHA-256 of its canonical identity string
``<vvvv>:<pppp>:<serial>:<product>`` (vendor and product as 4 lowercase
hex digits, ``:`` and ``\\`` in the free-text fields backslash-escaped),
so allow-list entries are uniform 64-hex tokens even for unprintable
serials.

Allow-list files reuse the sealed text container of the baseline store::

    HIDSALLOW 1
    device\t<64-hex-id>
    ...
    seal\t<hmac-sha256-hex>
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .detect import Finding, FindingCode, make_finding
from .host import DetachStatus, Host, UsbDeviceDescriptor
from .sealed import FormatError, open_document, seal_document

__all__ = [
    "ALLOWLIST_HEADER",
    "AllowList",
    "UsbChecker",
    "canonical_device_string",
    "check_usb",
    "generate_device_id",
    "load_allowlist",
    "serialize_allowlist",
]

ALLOWLIST_HEADER = "HIDSALLOW 1"

_ID_HEX = re.compile(r"^[0-9a-f]{64}$")


def _escape_identity(text: str) -> str:
    return text.replace("\\", "\\\\").replace(":", "\\:")


def canonical_device_string(desc: UsbDeviceDescriptor) -> str:
    """The colon-joined identity string fed into the device ID hash."""
    return (
        f"{desc.vendor_id:04x}:{desc.product_id:04x}:"
        f"{_escape_identity(desc.serial_number)}:{_escape_identity(desc.product_name)}"
    )


def generate_device_id(desc: UsbDeviceDescriptor) -> str:
    """Opaque allow-list key: SHA-256 hex of the canonical identity."""
    return hashlib.sha256(canonical_device_string(desc).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AllowList:
    """The trusted set of device IDs; everything else gets detached."""

    entries: frozenset[str]
    source_path: str = ""

    def __contains__(self, device_id: str) -> bool:
        return device_id in self.entries


def serialize_allowlist(entries: set[str] | frozenset[str], key: bytes) -> bytes:
    for entry in entries:
        if not _ID_HEX.match(entry):
            raise ValueError(f"allow-list entry is not a 64-hex device id: {entry!r}")
    lines = [ALLOWLIST_HEADER] + [f"device\t{e}" for e in sorted(set(entries))]
    body = "".join(line + "\n" for line in lines).encode("utf-8")
    return seal_document(body, key)


def load_allowlist(data: bytes, key: bytes, source_path: str = "") -> AllowList:
    """Parse a sealed allow-list; seal verification comes first."""
    body = open_document(data, key).decode("utf-8")
    lines = body.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != ALLOWLIST_HEADER:
        raise FormatError(f"missing {ALLOWLIST_HEADER!r} header", 1)
    entries: set[str] = set()
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if fields[0] != "device" or len(fields) != 2:
            raise FormatError("expected a device\\t<id> record", number)
        if not _ID_HEX.match(fields[1]):
            raise FormatError("device id is not 64 lowercase hex chars", number)
        entries.add(fields[1])
    return AllowList(entries=frozenset(entries), source_path=source_path)


def _describe(desc: UsbDeviceDescriptor) -> str:
    return (f"{desc.vendor_id:04x}:{desc.product_id:04x}"
            f" serial={desc.serial_number!r} product={desc.product_name!r}"
            f" bus={desc.bus_ref}")


@dataclass
class UsbChecker:
    """Stateful enforcement: flag and detach devices outside the allow-list.

    An unauthorized device raises one USB_UNAUTHORIZED per presence
    episode (re-insertion after removal re-alerts); detach is retried
    every cycle while the device stays attached, each failure emitting
    USB_DISABLE_FAILED.
    """

    allowlist: AllowList
    _alerted: set[str] = field(default_factory=set)

    def check(self, host: Host) -> list[Finding]:
        now = host.now_ms()
        findings: list[Finding] = []
        devices = host.list_usb_devices()
        present = {generate_device_id(d) for d in devices}
        self._alerted.intersection_update(present)

        for desc in devices:
            device_id = generate_device_id(desc)
            if device_id in self.allowlist:
                continue
            if device_id not in self._alerted:
                self._alerted.add(device_id)
                findings.append(make_finding(
                    FindingCode.USB_UNAUTHORIZED, device_id,
                    f"unauthorized device {_describe(desc)}", now))
            result = host.detach_device(desc.bus_ref)
            if result.status is DetachStatus.FAILED:
                findings.append(make_finding(
                    FindingCode.USB_DISABLE_FAILED, device_id,
                    f"detach failed for {_describe(desc)}: {result.detail}", now))
            else:
                detail = f"device detached ({_describe(desc)})"
                if result.payload_cancelled is False:
                    detail += "; autorun had already fired"
                findings.append(make_finding(
                    FindingCode.USB_DISABLED, device_id, detail, now))
        return findings


def check_usb(host: Host, allowlist: AllowList) -> list[Finding]:
    """One stateless poll cycle (fresh dedup state each call)."""
    return UsbChecker(allowlist).check(host)
