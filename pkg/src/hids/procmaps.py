"""Parsing and classification of procfs memory-map documents.

A maps line is laid out as::

    <start>-<end> <perms> <offset> <dev> <inode>[ <path>]

Addresses and offset are lowercase hex with no ``0x`` prefix, the
permission field is exactly four characters, and fields are separated by
runs of spaces.  Everything after the fifth field is the backing path:
leading spaces stripped, interior spaces preserved, empty for anonymous
mappings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

__all__ = [
    "DELETED_SUFFIX",
    "MapsParseError",
    "MemoryRegion",
    "Permissions",
    "is_deleted_backing",
    "is_hashable_region",
    "is_special_region",
    "parse_maps",
    "parse_maps_line",
    "render_maps_line",
]

_ADDR_PAIR = re.compile(r"^([0-9a-f]+)-([0-9a-f]+)$")
_PERMS = re.compile(r"^[r-][w-][x-][ps]$")
_HEX = re.compile(r"^[0-9a-f]+$")
_DEV = re.compile(r"^[0-9a-f]+:[0-9a-f]+$")
_INODE = re.compile(r"^[0-9]+$")

DELETED_SUFFIX = " (deleted)"


class MapsParseError(ValueError):
    """Raised for a line that does not follow the maps layout.

    ``column`` names the field class that failed: "address pair",
    "perms", "offset", "dev" or "inode".
    """

    def __init__(self, line: str, column: str, line_number: int | None = None):
        self.line = line
        self.column = column
        self.line_number = line_number
        at = f" at line {line_number}" if line_number is not None else ""
        super().__init__(f"malformed maps line{at}, bad {column}: {line!r}")


@dataclass(frozen=True)
class Permissions:
    """The four-character permission field of one mapping."""

    readable: bool
    writable: bool
    executable: bool
    shared: bool  # 's' flag; False means private ('p')

    @classmethod
    def parse(cls, text: str) -> Permissions:
        if not _PERMS.match(text):
            raise ValueError(f"bad permission field: {text!r}")
        return cls(
            readable=text[0] == "r",
            writable=text[1] == "w",
            executable=text[2] == "x",
            shared=text[3] == "s",
        )

    def __str__(self) -> str:
        return (
            ("r" if self.readable else "-")
            + ("w" if self.writable else "-")
            + ("x" if self.executable else "-")
            + ("s" if self.shared else "p")
        )


@dataclass(frozen=True)
class MemoryRegion:
    """One parsed mapping: address range, permissions, backing file."""

    start_addr: int
    end_addr: int
    perms: Permissions
    offset: int
    device: str
    inode: int
    path: str = ""

    @property
    def size(self) -> int:
        return self.end_addr - self.start_addr


def parse_maps_line(line: str, line_number: int | None = None) -> MemoryRegion:
    """Parse one non-empty maps line into a :class:`MemoryRegion`.

    Raises :class:`MapsParseError` identifying the offending field class.
    """
    text = line.rstrip("\r\n")
    fields = text.split(maxsplit=5)

    def bad(column: str) -> MapsParseError:
        return MapsParseError(line, column, line_number)

    if not fields:
        raise bad("address pair")
    match = _ADDR_PAIR.match(fields[0])
    if match is None:
        raise bad("address pair")
    start_addr = int(match.group(1), 16)
    end_addr = int(match.group(2), 16)
    if start_addr >= end_addr:
        raise bad("address pair")

    if len(fields) < 2 or not _PERMS.match(fields[1]):
        raise bad("perms")
    if len(fields) < 3 or not _HEX.match(fields[2]):
        raise bad("offset")
    if len(fields) < 4 or not _DEV.match(fields[3]):
        raise bad("dev")
    if len(fields) < 5 or not _INODE.match(fields[4]):
        raise bad("inode")

    return MemoryRegion(
        start_addr=start_addr,
        end_addr=end_addr,
        perms=Permissions.parse(fields[1]),
        offset=int(fields[2], 16),
        device=fields[3],
        inode=int(fields[4]),
        path=fields[5] if len(fields) > 5 else "",
    )


def parse_maps(document: str) -> list[MemoryRegion]:
    """Parse a whole maps document, one region per non-empty line.

    The first malformed line aborts with its 1-based line number.
    """
    regions: list[MemoryRegion] = []
    for number, line in enumerate(document.split("\n"), start=1):
        if not line.strip():
            continue
        regions.append(parse_maps_line(line, line_number=number))
    return regions


def render_maps_line(region: MemoryRegion) -> str:
    """Render a region in canonical maps form (single-space separated)."""
    head = (
        f"{region.start_addr:08x}-{region.end_addr:08x} {region.perms} "
        f"{region.offset:08x} {region.device} {region.inode}"
    )
    return f"{head} {region.path}" if region.path else head


def is_deleted_backing(region: MemoryRegion) -> bool:
    """True for mappings whose backing file was unlinked."""
    return region.path.endswith(DELETED_SUFFIX)


def is_special_region(region: MemoryRegion) -> bool:
    """Pseudo-mappings with no stable file identity.

    Covers anonymous mappings, bracketed kernel pseudo-paths such as
    ``[heap]`` and ``[vdso]``, and mappings whose backing file was
    deleted.
    """
    path = region.path
    if not path:
        return True
    if path.startswith("[") and path.endswith("]"):
        return True
    return is_deleted_backing(region)


def is_hashable_region(region: MemoryRegion) -> bool:
    """True for regions whose content enters a module's hash.

    Only readable, executable, non-special regions can be dumped and
    baselined; everything else is skipped.
    """
    return (
        region.perms.readable
        and region.perms.executable
        and not is_special_region(region)
    )
