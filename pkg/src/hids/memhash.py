"""Executable-memory dumps of process modules and their SHA-256 hashes.

A module's dump is the concatenation of its readable+executable,
non-special regions in ascending address order; only region content is
hashed, never addresses, so the hash is stable across map-line order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .host import Host, NoSuchProcessError, ProcessRecord
from .procmaps import is_hashable_region, parse_maps

__all__ = ["ModuleDump", "get_module_hash", "read_module_memory"]


@dataclass(frozen=True)
class ModuleDump:
    """The hashing unit: one module's executable memory in one process."""

    process: ProcessRecord
    module_path: str
    data: bytes
    region_count: int


def read_module_memory(host: Host, pid: int, module_path: str) -> ModuleDump:
    """Assemble the dump of ``module_path`` within process ``pid``.

    Regions are matched by exact path equality and concatenated lowest
    address first. A module with no hashable regions yields an empty
    dump with ``region_count == 0``; an unknown pid raises
    :class:`~hids.host.NoSuchProcessError`.
    """
    record = next((p for p in host.list_processes() if p.pid == pid), None)
    if record is None:
        raise NoSuchProcessError(pid)

    regions = [
        r for r in parse_maps(host.read_maps(pid))
        if r.path == module_path and is_hashable_region(r)
    ]
    regions.sort(key=lambda r: r.start_addr)

    chunks = [host.read_mem(pid, r.start_addr, r.size) for r in regions]
    return ModuleDump(
        process=record,
        module_path=module_path,
        data=b"".join(chunks),
        region_count=len(regions),
    )


def get_module_hash(dump: ModuleDump | bytes) -> str:
    """SHA-256 of the dump bytes as 64 lowercase hex characters."""
    data = dump.data if isinstance(dump, ModuleDump) else dump
    return hashlib.sha256(data).hexdigest()
