"""Host access boundary: process table, memory maps, raw memory, USB bus, clock.

Everything above this layer talks to a :class:`Host`; the two
implementations are the deterministic simulated backend
(:mod:`hids.simhost`) and the thin real-Linux adapter
(:mod:`hids.realhost`).
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from enum import Enum


class HostError(Exception):
    """Base class for failures at the host boundary."""


class HostUnavailableError(HostError):
    """The process table or USB bus cannot be read at all."""


class NoSuchProcessError(HostError):
    def __init__(self, pid: int):
        self.pid = pid
        super().__init__(f"no such process: pid {pid}")


class MemoryRangeError(HostError):
    """A memory read fell outside any readable region."""


class PermissionDeniedError(HostError):
    """The host refused access (real backend only)."""


@dataclass(frozen=True, order=True)
class ProcessRecord:
    """One entry of a process-table snapshot."""

    pid: int
    name: str


@dataclass(frozen=True)
class UsbDeviceDescriptor:
    """Raw identity fields of one attached USB device.

    ``bus_ref`` is an opaque handle understood by ``detach_device`` of
    the host that produced the descriptor.
    """

    vendor_id: int
    product_id: int
    serial_number: str = ""
    product_name: str = ""
    bus_ref: object = None


class DetachStatus(Enum):
    DETACHED = "detached"
    ALREADY_DETACHED = "already-detached"
    FAILED = "failed"


@dataclass(frozen=True)
class DetachResult:
    """Outcome of a detach attempt.

    ``payload_cancelled`` is only meaningful on the simulated backend:
    True when the detach landed before the device's autorun payload
    fired, False when the payload had already run, None when the device
    carried no payload (or on the real backend).
    """

    status: DetachStatus
    payload_cancelled: bool | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status is DetachStatus.DETACHED


class Host(abc.ABC):
    """Narrow interface over one monitored host.

    Handles are safe to share across threads. Time is always read and
    advanced through the handle so monitoring code has a single code
    path for real and simulated runs.
    """

    @abc.abstractmethod
    def list_processes(self) -> list[ProcessRecord]:
        """Snapshot of running processes, ordered by pid ascending."""

    @abc.abstractmethod
    def read_maps(self, pid: int) -> str:
        """The memory-maps document for ``pid`` (procfs line format)."""

    @abc.abstractmethod
    def read_mem(self, pid: int, start_addr: int, length: int) -> bytes:
        """Exactly ``length`` bytes of process memory at ``start_addr``."""

    @abc.abstractmethod
    def list_usb_devices(self) -> list[UsbDeviceDescriptor]:
        """Attached devices, ordered by (vendor_id, product_id, serial)."""

    @abc.abstractmethod
    def detach_device(self, bus_ref: object) -> DetachResult:
        """Detach a device from its driver, disabling it for the host."""

    @abc.abstractmethod
    def now_ms(self) -> float:
        """Current host-clock time in milliseconds."""

    @abc.abstractmethod
    def advance_to(self, t_ms: float) -> None:
        """Move the host clock forward to ``t_ms`` (never backwards)."""

    def advance(self, delta_ms: float) -> None:
        self.advance_to(self.now_ms() + delta_ms)
