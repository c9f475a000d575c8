"""Deterministic simulated host driven by JSON fixture documents.

Fixture schema (UTF-8 JSON; unknown keys are rejected)::

    {
      "clock_start_ms": 0,
      "processes": [
        {"name": "rtu-poller", "pid": 101,
         "modules": [
           {"path": "/opt/scada/bin/rtu", "perms": "r-xp",
            "start_addr": "0x400000", "end_addr": "0x401000",
            "content": "deadbeef..."}
         ]}
      ],
      "usb_devices": [
        {"vendor_id": "0x1d6b", "product_id": "0x0002",
         "serial": "0001", "product": "xHCI Host Controller",
         "inserted_at_ms": 0, "autorun_delay_ms": 0,
         "payload": {"target_process": "rtu-poller", "module": {...}}}
      ]
    }

Addresses and USB ids are hex strings with a required ``0x`` prefix.
``content`` is either a literal hex string covering the whole region or
a generator spec ``{"seed": N, "length": L}`` with ``L`` equal to the
region size.  Generated content is a fixed counter-hash stream: block
*i* is SHA-256(seed as 8 big-endian bytes || i as 8 big-endian bytes),
blocks concatenated and truncated to the requested length, so identical
fixtures behave byte-identically everywhere.

The clock starts at ``clock_start_ms`` and only moves through explicit
``advance_to`` calls.  A device's autorun payload injects its module
into the named target process at ``inserted_at_ms + autorun_delay_ms``;
a detach strictly before that instant cancels it.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field

from .host import (
    DetachResult,
    DetachStatus,
    Host,
    HostError,
    MemoryRangeError,
    NoSuchProcessError,
    ProcessRecord,
    UsbDeviceDescriptor,
)
from .procmaps import MemoryRegion, Permissions, render_maps_line

__all__ = [
    "FixtureError",
    "SimulatedHost",
    "generated_bytes",
    "load_fixture",
    "load_fixture_dict",
]

_HEX_LITERAL = re.compile(r"^0x[0-9a-fA-F]+$")
_HEX_BYTES = re.compile(r"^(?:[0-9a-fA-F]{2})*$")

_TOP_KEYS = {"processes", "usb_devices", "clock_start_ms"}
_PROCESS_KEYS = {"name", "pid", "modules"}
_MODULE_KEYS = {"path", "perms", "start_addr", "end_addr", "content"}
_DEVICE_REQUIRED = {"vendor_id", "product_id"}
_DEVICE_KEYS = _DEVICE_REQUIRED | {
    "serial",
    "product",
    "inserted_at_ms",
    "autorun_delay_ms",
    "payload",
}
_PAYLOAD_KEYS = {"target_process", "module"}
_CONTENT_KEYS = {"seed", "length"}


class FixtureError(ValueError):
    """A fixture document violating the schema; names field and location."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def generated_bytes(seed: int, length: int) -> bytes:
    """The fixed counter-hash content stream (see module docstring)."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    if length < 0:
        raise ValueError("length must be non-negative")
    out = bytearray()
    prefix = seed.to_bytes(8, "big")
    for block in range((length + 31) // 32):
        out += hashlib.sha256(prefix + block.to_bytes(8, "big")).digest()
    return bytes(out[:length])


def _expect_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise FixtureError(f"unknown field {sorted(unknown)[0]!r}", where)
    missing = required - set(obj)
    if missing:
        raise FixtureError(f"missing field {sorted(missing)[0]!r}", where)


def _parse_hex(value: object, where: str, limit: int | None = None) -> int:
    if not isinstance(value, str) or not _HEX_LITERAL.match(value):
        raise FixtureError("expected a 0x-prefixed hex string", where)
    number = int(value, 16)
    if limit is not None and number > limit:
        raise FixtureError(f"value {value} exceeds 0x{limit:x}", where)
    return number


def _parse_name(value: object, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise FixtureError("expected a non-empty string", where)
    if any(c in value for c in "\t\n\r"):
        raise FixtureError("name must not contain tab or newline characters", where)
    return value


def _parse_number(value: object, where: str, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FixtureError("expected a number", where)
    if minimum is not None and value < minimum:
        raise FixtureError(f"must be >= {minimum}", where)
    return float(value)


@dataclass
class _SimRegion:
    region: MemoryRegion
    content: bytearray


def _parse_module(obj: object, where: str) -> _SimRegion:
    if not isinstance(obj, dict):
        raise FixtureError("expected an object", where)
    _expect_keys(obj, _MODULE_KEYS, _MODULE_KEYS, where)

    path = obj["path"]
    if not isinstance(path, str):
        raise FixtureError("expected a string", f"{where}.path")
    if any(c in path for c in "\t\n\r"):
        raise FixtureError("path must not contain tab or newline characters", f"{where}.path")

    perms_raw = obj["perms"]
    if not isinstance(perms_raw, str):
        raise FixtureError("expected a string", f"{where}.perms")
    try:
        perms = Permissions.parse(perms_raw)
    except ValueError:
        raise FixtureError(
            "must be 4 characters matching [r-][w-][x-][ps]", f"{where}.perms"
        ) from None

    start = _parse_hex(obj["start_addr"], f"{where}.start_addr")
    end = _parse_hex(obj["end_addr"], f"{where}.end_addr")
    if start >= end:
        raise FixtureError("start_addr must be below end_addr", f"{where}.start_addr")
    size = end - start

    content_spec = obj["content"]
    if isinstance(content_spec, str):
        if not _HEX_BYTES.match(content_spec):
            raise FixtureError("literal content must be an even-length hex string",
                               f"{where}.content")
        content = bytearray.fromhex(content_spec)
        if len(content) != size:
            raise FixtureError(
                f"content covers {len(content)} bytes but the region spans {size}",
                f"{where}.content")
    elif isinstance(content_spec, dict):
        _expect_keys(content_spec, _CONTENT_KEYS, _CONTENT_KEYS, f"{where}.content")
        seed = content_spec["seed"]
        length = content_spec["length"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise FixtureError("seed must be an integer in [0, 2^64)", f"{where}.content.seed")
        if isinstance(length, bool) or not isinstance(length, int) or length != size:
            raise FixtureError(
                f"length must equal the region size ({size})", f"{where}.content.length")
        content = bytearray(generated_bytes(seed, length))
    else:
        raise FixtureError("content must be a hex string or {seed, length} spec",
                           f"{where}.content")

    region = MemoryRegion(
        start_addr=start, end_addr=end, perms=perms,
        offset=0, device="00:00", inode=0, path=path,
    )
    return _SimRegion(region=region, content=content)


def _check_overlaps(regions: list[_SimRegion], where: str) -> None:
    ordered = sorted(regions, key=lambda r: r.region.start_addr)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.region.start_addr < prev.region.end_addr:
            raise FixtureError(
                f"region 0x{cur.region.start_addr:x} ({cur.region.path or 'anonymous'}) "
                f"overlaps region ending at 0x{prev.region.end_addr:x}",
                where)


@dataclass
class _SimProcess:
    record: ProcessRecord
    regions: list[_SimRegion] = field(default_factory=list)


# Payload lifecycle: pending until the clock crosses the fire instant,
# then fired; a detach strictly before that instant makes it cancelled.
_PENDING, _FIRED, _CANCELLED = "pending", "fired", "cancelled"


@dataclass
class _SimDevice:
    descriptor_fields: tuple[int, int, str, str]
    bus_ref: str
    inserted_at_ms: float
    autorun_delay_ms: float
    payload_target: str | None = None
    payload_module: _SimRegion | None = None
    detached_at_ms: float | None = None
    payload_state: str | None = None  # None when the device has no payload
    payload_injected: bool = False

    @property
    def fire_at_ms(self) -> float:
        return self.inserted_at_ms + self.autorun_delay_ms

    def descriptor(self) -> UsbDeviceDescriptor:
        vendor, product, serial, name = self.descriptor_fields
        return UsbDeviceDescriptor(
            vendor_id=vendor, product_id=product,
            serial_number=serial, product_name=name,
            bus_ref=self.bus_ref,
        )


class SimulatedHost(Host):
    """In-memory host whose behavior is fully determined by its fixture.

    Beyond the :class:`~hids.host.Host` interface it exposes harness
    controls used by scenario runs and tests: ``insert_device``,
    ``spawn_process``, ``poke`` and ``payload_fired``. All mutations are
    serialized on an internal lock.
    """

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._now = 0.0
        self._processes: dict[int, _SimProcess] = {}
        self._devices: list[_SimDevice] = []
        self._next_bus_index = 0

    # -- construction -----------------------------------------------------

    @classmethod
    def _from_validated(cls, clock_start_ms: int,
                        processes: dict[int, _SimProcess],
                        devices: list[_SimDevice]) -> SimulatedHost:
        host = cls()
        host._now = float(clock_start_ms)
        host._processes = processes
        host._devices = devices
        host._next_bus_index = len(devices)
        # Payloads whose fire instant predates the clock start have
        # already run by the time the host exists.
        for device in devices:
            if device.payload_state == _PENDING and device.fire_at_ms <= host._now:
                host._fire_payload(device)
        return host

    # -- Host interface ---------------------------------------------------

    def now_ms(self) -> float:
        with self._lock:
            return self._now

    def advance_to(self, t_ms: float) -> None:
        with self._lock:
            if t_ms < self._now:
                raise ValueError(
                    f"clock may not move backwards ({t_ms} < {self._now})")
            due = [d for d in self._devices
                   if d.payload_state == _PENDING and d.fire_at_ms <= t_ms]
            due.sort(key=lambda d: (d.fire_at_ms, d.bus_ref))
            for device in due:
                self._now = max(self._now, device.fire_at_ms)
                self._fire_payload(device)
            self._now = t_ms

    def list_processes(self) -> list[ProcessRecord]:
        with self._lock:
            return [self._processes[pid].record for pid in sorted(self._processes)]

    def read_maps(self, pid: int) -> str:
        with self._lock:
            proc = self._processes.get(pid)
            if proc is None:
                raise NoSuchProcessError(pid)
            ordered = sorted(proc.regions, key=lambda r: r.region.start_addr)
            return "".join(render_maps_line(r.region) + "\n" for r in ordered)

    def read_mem(self, pid: int, start_addr: int, length: int) -> bytes:
        if length < 0:
            raise MemoryRangeError(f"negative read length {length}")
        if length == 0:
            return b""
        with self._lock:
            proc = self._processes.get(pid)
            if proc is None:
                raise NoSuchProcessError(pid)
            for sim_region in proc.regions:
                region = sim_region.region
                if region.start_addr <= start_addr and start_addr + length <= region.end_addr:
                    lo = start_addr - region.start_addr
                    return bytes(sim_region.content[lo:lo + length])
            raise MemoryRangeError(
                f"pid {pid}: [{start_addr:#x}, {start_addr + length:#x}) "
                "is not contained in any region")

    def list_usb_devices(self) -> list[UsbDeviceDescriptor]:
        with self._lock:
            attached = [d for d in self._devices
                        if d.detached_at_ms is None and d.inserted_at_ms <= self._now]
            attached.sort(key=lambda d: (d.descriptor_fields[0], d.descriptor_fields[1],
                                         d.descriptor_fields[2], d.bus_ref))
            return [d.descriptor() for d in attached]

    def detach_device(self, bus_ref: object) -> DetachResult:
        with self._lock:
            device = next((d for d in self._devices if d.bus_ref == bus_ref), None)
            if device is None:
                return DetachResult(DetachStatus.FAILED,
                                    detail=f"unknown bus reference {bus_ref!r}")
            if device.detached_at_ms is not None:
                return DetachResult(DetachStatus.ALREADY_DETACHED,
                                    detail="device already detached")
            device.detached_at_ms = self._now
            cancelled: bool | None = None
            if device.payload_state == _PENDING:
                # Pending at detach time means now < fire instant.
                device.payload_state = _CANCELLED
                cancelled = True
            elif device.payload_state in (_FIRED, _CANCELLED):
                cancelled = device.payload_state == _CANCELLED
            return DetachResult(DetachStatus.DETACHED, payload_cancelled=cancelled)

    # -- harness controls -------------------------------------------------

    def insert_device(self, vendor_id: int, product_id: int, serial: str = "",
                      product: str = "", autorun_delay_ms: float = 0.0,
                      payload: dict | None = None,
                      inserted_at_ms: float | None = None) -> str:
        """Attach a new device at the current (or a future) instant."""
        with self._lock:
            at = self._now if inserted_at_ms is None else float(inserted_at_ms)
            if at < self._now:
                raise ValueError("cannot insert a device in the past")
            if autorun_delay_ms < 0:
                raise ValueError("autorun_delay_ms must be >= 0")
            device = _SimDevice(
                descriptor_fields=(vendor_id, product_id, serial, product),
                bus_ref=f"usb:{self._next_bus_index}",
                inserted_at_ms=at,
                autorun_delay_ms=float(autorun_delay_ms),
            )
            self._next_bus_index += 1
            if payload is not None:
                target, module = _parse_payload(payload, "payload")
                device.payload_target = target
                device.payload_module = module
                device.payload_state = _PENDING
                if device.fire_at_ms <= self._now:
                    self._fire_payload(device)
            self._devices.append(device)
            return device.bus_ref

    def spawn_process(self, name: str, pid: int, modules: list[dict]) -> None:
        """Add a process that was not part of the fixture."""
        with self._lock:
            if pid in self._processes:
                raise FixtureError(f"duplicate pid {pid}", "spawn_process.pid")
            record = ProcessRecord(pid=pid, name=_parse_name(name, "spawn_process.name"))
            regions = [_parse_module(m, f"spawn_process.modules[{i}]")
                       for i, m in enumerate(modules)]
            _check_overlaps(regions, "spawn_process.modules")
            self._processes[pid] = _SimProcess(record=record, regions=regions)

    def poke(self, pid: int, addr: int, data: bytes) -> None:
        """Overwrite process memory in place (attack simulation only)."""
        with self._lock:
            proc = self._processes.get(pid)
            if proc is None:
                raise NoSuchProcessError(pid)
            for sim_region in proc.regions:
                region = sim_region.region
                if region.start_addr <= addr and addr + len(data) <= region.end_addr:
                    lo = addr - region.start_addr
                    sim_region.content[lo:lo + len(data)] = data
                    return
            raise MemoryRangeError(
                f"pid {pid}: poke at {addr:#x} (+{len(data)}) outside all regions")

    def payload_fired(self, bus_ref: object) -> bool | None:
        """Whether the device's payload ran; None if it has no payload."""
        with self._lock:
            device = next((d for d in self._devices if d.bus_ref == bus_ref), None)
            if device is None:
                raise HostError(f"unknown bus reference {bus_ref!r}")
            if device.payload_state is None:
                return None
            return device.payload_state == _FIRED

    # -- internals ---------------------------------------------------------

    def _fire_payload(self, device: _SimDevice) -> None:
        device.payload_state = _FIRED
        assert device.payload_module is not None
        targets = [p for p in self._processes.values()
                   if p.record.name == device.payload_target]
        if not targets:
            return
        target = min(targets, key=lambda p: p.record.pid)
        module = device.payload_module
        for existing in target.regions:
            if (module.region.start_addr < existing.region.end_addr
                    and existing.region.start_addr < module.region.end_addr):
                return  # landing zone occupied; injection fizzles
        target.regions.append(_SimRegion(region=module.region,
                                         content=bytearray(module.content)))
        device.payload_injected = True


def _parse_payload(obj: object, where: str) -> tuple[str, _SimRegion]:
    if not isinstance(obj, dict):
        raise FixtureError("expected an object", where)
    _expect_keys(obj, _PAYLOAD_KEYS, _PAYLOAD_KEYS, where)
    target = _parse_name(obj["target_process"], f"{where}.target_process")
    module = _parse_module(obj["module"], f"{where}.module")
    return target, module


def load_fixture_dict(document: dict) -> SimulatedHost:
    """Build a simulated host from an already-decoded fixture document."""
    if not isinstance(document, dict):
        raise FixtureError("fixture root must be an object")
    _expect_keys(document, _TOP_KEYS, _TOP_KEYS, "fixture")

    clock_start = document["clock_start_ms"]
    if isinstance(clock_start, bool) or not isinstance(clock_start, int):
        raise FixtureError("expected an integer", "fixture.clock_start_ms")

    raw_processes = document["processes"]
    if not isinstance(raw_processes, list):
        raise FixtureError("expected a list", "fixture.processes")
    processes: dict[int, _SimProcess] = {}
    for index, entry in enumerate(raw_processes):
        where = f"processes[{index}]"
        if not isinstance(entry, dict):
            raise FixtureError("expected an object", where)
        _expect_keys(entry, _PROCESS_KEYS, _PROCESS_KEYS, where)
        name = _parse_name(entry["name"], f"{where}.name")
        pid = entry["pid"]
        if isinstance(pid, bool) or not isinstance(pid, int) or pid < 1:
            raise FixtureError("pid must be a positive integer", f"{where}.pid")
        if pid in processes:
            raise FixtureError(f"duplicate pid {pid}", f"{where}.pid")
        raw_modules = entry["modules"]
        if not isinstance(raw_modules, list):
            raise FixtureError("expected a list", f"{where}.modules")
        regions = [_parse_module(m, f"{where}.modules[{i}]")
                   for i, m in enumerate(raw_modules)]
        _check_overlaps(regions, f"{where}.modules")
        processes[pid] = _SimProcess(record=ProcessRecord(pid=pid, name=name),
                                     regions=regions)

    raw_devices = document["usb_devices"]
    if not isinstance(raw_devices, list):
        raise FixtureError("expected a list", "fixture.usb_devices")
    devices: list[_SimDevice] = []
    for index, entry in enumerate(raw_devices):
        where = f"usb_devices[{index}]"
        if not isinstance(entry, dict):
            raise FixtureError("expected an object", where)
        _expect_keys(entry, _DEVICE_KEYS, _DEVICE_REQUIRED, where)
        vendor = _parse_hex(entry["vendor_id"], f"{where}.vendor_id", limit=0xFFFF)
        product = _parse_hex(entry["product_id"], f"{where}.product_id", limit=0xFFFF)
        serial = entry.get("serial", "")
        if not isinstance(serial, str):
            raise FixtureError("expected a string", f"{where}.serial")
        product_name = entry.get("product", "")
        if not isinstance(product_name, str):
            raise FixtureError("expected a string", f"{where}.product")
        inserted_at = _parse_number(entry.get("inserted_at_ms", clock_start),
                                    f"{where}.inserted_at_ms")
        delay = _parse_number(entry.get("autorun_delay_ms", 0),
                              f"{where}.autorun_delay_ms", minimum=0)
        device = _SimDevice(
            descriptor_fields=(vendor, product, serial, product_name),
            bus_ref=f"usb:{index}",
            inserted_at_ms=inserted_at,
            autorun_delay_ms=delay,
        )
        payload = entry.get("payload")
        if payload is not None:
            target, module = _parse_payload(payload, f"{where}.payload")
            device.payload_target = target
            device.payload_module = module
            device.payload_state = _PENDING
        devices.append(device)

    return SimulatedHost._from_validated(clock_start, processes, devices)


def load_fixture(document: bytes | str) -> SimulatedHost:
    """Parse and validate a fixture document, returning a fresh host.

    Byte-identical documents yield byte-identically behaving hosts.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FixtureError(f"fixture is not valid UTF-8: {exc}") from None
    try:
        decoded = json.loads(document)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"fixture is not valid JSON: {exc}") from None
    return load_fixture_dict(decoded)
