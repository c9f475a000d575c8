"""Thin real-Linux adapter over procfs and sysfs.

Provided for completeness on actual hosts; the acceptance and test
suites exercise the simulated backend only. Memory reads require the
privileges of the monitored processes (typically root), and detach
works by de-authorizing the device in sysfs.
"""

from __future__ import annotations

import os
import time

from .host import (
    DetachResult,
    DetachStatus,
    Host,
    HostUnavailableError,
    MemoryRangeError,
    NoSuchProcessError,
    PermissionDeniedError,
    ProcessRecord,
    UsbDeviceDescriptor,
)

__all__ = ["RealLinuxHost"]


class RealLinuxHost(Host):
    def __init__(self, proc_root: str = "/proc",
                 usb_root: str = "/sys/bus/usb/devices"):
        self.proc_root = proc_root
        self.usb_root = usb_root

    def list_processes(self) -> list[ProcessRecord]:
        try:
            entries = os.listdir(self.proc_root)
        except OSError as exc:
            raise HostUnavailableError(f"cannot read {self.proc_root}: {exc}") from None
        records = []
        for entry in entries:
            if not entry.isdigit():
                continue
            try:
                with open(f"{self.proc_root}/{entry}/comm", encoding="utf-8") as fh:
                    name = fh.read().rstrip("\n")
            except OSError:
                continue  # raced with process exit
            if name:
                records.append(ProcessRecord(pid=int(entry), name=name))
        records.sort(key=lambda r: r.pid)
        return records

    def read_maps(self, pid: int) -> str:
        try:
            with open(f"{self.proc_root}/{pid}/maps", encoding="utf-8") as fh:
                return fh.read()
        except FileNotFoundError:
            raise NoSuchProcessError(pid) from None
        except PermissionError as exc:
            raise PermissionDeniedError(str(exc)) from None

    def read_mem(self, pid: int, start_addr: int, length: int) -> bytes:
        if length == 0:
            return b""
        try:
            with open(f"{self.proc_root}/{pid}/mem", "rb") as fh:
                fh.seek(start_addr)
                data = fh.read(length)
        except FileNotFoundError:
            raise NoSuchProcessError(pid) from None
        except PermissionError as exc:
            raise PermissionDeniedError(str(exc)) from None
        except OSError as exc:
            raise MemoryRangeError(
                f"pid {pid}: read at {start_addr:#x} failed: {exc}") from None
        if len(data) != length:
            raise MemoryRangeError(
                f"pid {pid}: short read at {start_addr:#x} "
                f"({len(data)} of {length} bytes)")
        return data

    def _read_attr(self, device_dir: str, attr: str) -> str:
        try:
            with open(f"{self.usb_root}/{device_dir}/{attr}", encoding="utf-8") as fh:
                return fh.read().strip()
        except OSError:
            return ""

    def list_usb_devices(self) -> list[UsbDeviceDescriptor]:
        try:
            entries = os.listdir(self.usb_root)
        except OSError as exc:
            raise HostUnavailableError(f"cannot read {self.usb_root}: {exc}") from None
        devices = []
        for entry in entries:
            if ":" in entry:  # interface nodes, not devices
                continue
            vendor = self._read_attr(entry, "idVendor")
            product = self._read_attr(entry, "idProduct")
            if not vendor or not product:
                continue
            if self._read_attr(entry, "authorized") == "0":
                continue  # detached devices stay out of snapshots
            devices.append(UsbDeviceDescriptor(
                vendor_id=int(vendor, 16),
                product_id=int(product, 16),
                serial_number=self._read_attr(entry, "serial"),
                product_name=self._read_attr(entry, "product"),
                bus_ref=entry,
            ))
        devices.sort(key=lambda d: (d.vendor_id, d.product_id, d.serial_number))
        return devices

    def detach_device(self, bus_ref: object) -> DetachResult:
        path = f"{self.usb_root}/{bus_ref}/authorized"
        try:
            with open(path, "r+", encoding="utf-8") as fh:
                if fh.read().strip() == "0":
                    return DetachResult(DetachStatus.ALREADY_DETACHED)
                fh.seek(0)
                fh.write("0")
        except OSError as exc:
            return DetachResult(DetachStatus.FAILED, detail=str(exc))
        return DetachResult(DetachStatus.DETACHED)

    def now_ms(self) -> float:
        return time.time() * 1000.0

    def advance_to(self, t_ms: float) -> None:
        delta = (t_ms - self.now_ms()) / 1000.0
        if delta > 0:
            time.sleep(delta)
