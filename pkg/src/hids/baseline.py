"""Setup-phase enrollment and the sealed baseline persistence format.

Serialized form (line-oriented UTF-8, canonical and diff-able)::

    HIDSBASE 1
    created\t<ms>
    process\t<name>
    module\t<path>\t<sha256hex>
    ...
    whitelist\t<path>
    ...
    seal\t<hmac-sha256-hex>

Processes are sorted by name and modules by path (bytewise), so equal
baselines serialize to identical bytes regardless of construction
order. ``whitelist`` lines sit at the end of the process blocks whose
module lists contain the path; whitelisted paths matching no enrolled
module are emitted once after the last block. Tabs, newlines and
backslashes in names are escaped ``\\t`` ``\\n`` ``\\\\``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .host import Host, HostError
from .memhash import get_module_hash, read_module_memory
from .procmaps import MapsParseError, is_special_region, parse_maps
from .sealed import (
    FormatError,
    escape_field,
    open_document,
    seal_document,
    unescape_field,
)

__all__ = ["BASELINE_HEADER", "Baseline", "deserialize", "run_setup", "serialize"]

logger = logging.getLogger(__name__)

BASELINE_HEADER = "HIDSBASE 1"

_HASH_HEX = re.compile(r"^[0-9a-f]{64}$")


@dataclass
class Baseline:
    """The sealed setup-phase snapshot all detection compares against.

    Keyed by process NAME; module path lists are kept sorted ascending
    bytewise, and every listed path has exactly one stored hash.
    """

    process_modules: dict[str, list[str]]
    module_hashes: dict[str, dict[str, str]]
    created_at_ms: int
    update_whitelist: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        for name, paths in self.process_modules.items():
            hashed = set(self.module_hashes.get(name, {}))
            if hashed != set(paths):
                raise ValueError(
                    f"process {name!r}: module list and hash map disagree")
            self.process_modules[name] = sorted(paths)


def run_setup(host: Host, update_whitelist: set[str] | None = None) -> Baseline:
    """Enroll every running process and hash each of its modules.

    Special regions (anonymous, bracketed pseudo-paths, deleted
    backings) are skipped. Per-process read failures are logged as
    enrollment warnings, never fatal. When several processes share a
    name their module lists are merged and the lowest pid's hash wins.
    """
    process_modules: dict[str, list[str]] = {}
    module_hashes: dict[str, dict[str, str]] = {}

    for proc in host.list_processes():
        try:
            regions = parse_maps(host.read_maps(proc.pid))
        except (HostError, MapsParseError) as exc:
            logger.warning("setup: skipping pid %d (%s): %s", proc.pid, proc.name, exc)
            continue
        if proc.name not in process_modules:
            logger.info("setup: new process found: %s (pid %d)", proc.name, proc.pid)
            process_modules[proc.name] = []
            module_hashes[proc.name] = {}
        paths = sorted({r.path for r in regions if not is_special_region(r)})
        for path in paths:
            if path in module_hashes[proc.name]:
                continue
            try:
                dump = read_module_memory(host, proc.pid, path)
            except HostError as exc:
                logger.warning("setup: cannot dump %s in %s: %s", path, proc.name, exc)
                continue
            process_modules[proc.name].append(path)
            module_hashes[proc.name][path] = get_module_hash(dump)
        process_modules[proc.name].sort()

    return Baseline(
        process_modules=process_modules,
        module_hashes=module_hashes,
        created_at_ms=int(host.now_ms()),
        update_whitelist=set(update_whitelist or ()),
    )


def serialize(baseline: Baseline, key: bytes) -> bytes:
    """Render the canonical sealed byte form of ``baseline``."""
    lines = [BASELINE_HEADER, f"created\t{baseline.created_at_ms}"]
    attached: set[str] = set()
    for name in sorted(baseline.process_modules):
        lines.append(f"process\t{escape_field(name)}")
        paths = baseline.process_modules[name]
        hashes = baseline.module_hashes[name]
        for path in paths:
            lines.append(f"module\t{escape_field(path)}\t{hashes[path]}")
        for path in sorted(baseline.update_whitelist.intersection(paths)):
            attached.add(path)
            lines.append(f"whitelist\t{escape_field(path)}")
    for path in sorted(baseline.update_whitelist - attached):
        lines.append(f"whitelist\t{escape_field(path)}")
    body = "".join(line + "\n" for line in lines).encode("utf-8")
    return seal_document(body, key)


def deserialize(data: bytes, key: bytes) -> Baseline:
    """Parse a sealed baseline; the seal must verify before anything else.

    Raises :class:`~hids.sealed.SealInvalidError` on any body or seal
    mutation and :class:`~hids.sealed.FormatError` (with a line number)
    on grammar violations inside a correctly sealed body.
    """
    body = open_document(data, key)
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"body is not valid UTF-8: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    if not lines or lines[0] != BASELINE_HEADER:
        raise FormatError(f"missing {BASELINE_HEADER!r} header", 1)
    if len(lines) < 2 or not lines[1].startswith("created\t"):
        raise FormatError("missing created line", 2)
    created_raw = lines[1].split("\t", 1)[1]
    if not created_raw.lstrip("-").isdigit():
        raise FormatError("created timestamp is not an integer", 2)
    created_at_ms = int(created_raw)

    process_modules: dict[str, list[str]] = {}
    module_hashes: dict[str, dict[str, str]] = {}
    whitelist: set[str] = set()
    current: str | None = None

    for number, line in enumerate(lines[2:], start=3):
        fields = line.split("\t")
        tag = fields[0]
        try:
            if tag == "process":
                if len(fields) != 2:
                    raise FormatError("process line needs exactly one field", number)
                name = unescape_field(fields[1])
                if name in process_modules:
                    raise FormatError(f"duplicate process {name!r}", number)
                process_modules[name] = []
                module_hashes[name] = {}
                current = name
            elif tag == "module":
                if current is None:
                    raise FormatError("module line before any process line", number)
                if len(fields) != 3:
                    raise FormatError("module line needs exactly two fields", number)
                path = unescape_field(fields[1])
                if not _HASH_HEX.match(fields[2]):
                    raise FormatError("module hash is not 64 lowercase hex chars", number)
                if path in module_hashes[current]:
                    raise FormatError(f"duplicate module {path!r}", number)
                process_modules[current].append(path)
                module_hashes[current][path] = fields[2]
            elif tag == "whitelist":
                if len(fields) != 2:
                    raise FormatError("whitelist line needs exactly one field", number)
                whitelist.add(unescape_field(fields[1]))
            else:
                raise FormatError(f"unknown record tag {tag!r}", number)
        except ValueError as exc:  # bad escape sequence
            raise FormatError(str(exc), number) from None

    return Baseline(
        process_modules=process_modules,
        module_hashes=module_hashes,
        created_at_ms=created_at_ms,
        update_whitelist=whitelist,
    )
