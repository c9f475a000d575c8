"""Comparison of live host state against the baseline, emitting findings."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

from .baseline import Baseline
from .host import Host, HostError
from .memhash import get_module_hash, read_module_memory
from .procmaps import (
    MapsParseError,
    is_deleted_backing,
    is_special_region,
    parse_maps,
)

__all__ = [
    "Finding",
    "FindingCode",
    "ScanReport",
    "Severity",
    "check_processes",
    "make_finding",
    "summarize",
]


class Severity(IntEnum):
    INFO = 0
    WARN = 1
    ALERT = 2


class FindingCode(str, Enum):
    USB_UNAUTHORIZED = "USB_UNAUTHORIZED"
    USB_DISABLED = "USB_DISABLED"
    USB_DISABLE_FAILED = "USB_DISABLE_FAILED"
    MODULE_UNKNOWN = "MODULE_UNKNOWN"
    MODULE_HASH_MISMATCH = "MODULE_HASH_MISMATCH"
    PROCESS_UNKNOWN = "PROCESS_UNKNOWN"
    MODULE_DELETED_BACKING = "MODULE_DELETED_BACKING"
    BASELINE_SEAL_INVALID = "BASELINE_SEAL_INVALID"
    WEAK_KEY_WARNING = "WEAK_KEY_WARNING"
    READ_FAILURE = "READ_FAILURE"
    CYCLE = "CYCLE"


# Fixed code-to-severity table; the only override is a hash mismatch on
# a whitelisted update path, which downgrades to INFO.
SEVERITY_BY_CODE: dict[FindingCode, Severity] = {
    FindingCode.USB_UNAUTHORIZED: Severity.ALERT,
    FindingCode.USB_DISABLED: Severity.INFO,
    FindingCode.USB_DISABLE_FAILED: Severity.WARN,
    FindingCode.MODULE_UNKNOWN: Severity.ALERT,
    FindingCode.MODULE_HASH_MISMATCH: Severity.ALERT,
    FindingCode.PROCESS_UNKNOWN: Severity.WARN,
    FindingCode.MODULE_DELETED_BACKING: Severity.WARN,
    FindingCode.BASELINE_SEAL_INVALID: Severity.ALERT,
    FindingCode.WEAK_KEY_WARNING: Severity.INFO,
    FindingCode.READ_FAILURE: Severity.WARN,
    FindingCode.CYCLE: Severity.INFO,
}


@dataclass(frozen=True)
class Finding:
    """One detection event."""

    code: FindingCode
    severity: Severity
    subject: str
    detail: str
    at_ms: float


def make_finding(code: FindingCode, subject: str, detail: str, at_ms: float,
                 severity: Severity | None = None) -> Finding:
    return Finding(
        code=code,
        severity=SEVERITY_BY_CODE[code] if severity is None else severity,
        subject=subject,
        detail=detail,
        at_ms=at_ms,
    )


def check_processes(host: Host, baseline: Baseline) -> list[Finding]:
    """One full sweep of live processes against the (verified) baseline.

    Per-process read failures downgrade to WARN findings; the sweep
    itself never aborts. Output is a pure function of the baseline and
    the host snapshot, so repeated sweeps on a frozen host are
    identical.
    """
    findings: list[Finding] = []
    now = host.now_ms()

    try:
        processes = host.list_processes()
    except HostError as exc:
        return [make_finding(FindingCode.READ_FAILURE, "-",
                             f"cannot enumerate processes: {exc}", now)]

    for proc in processes:
        try:
            regions = parse_maps(host.read_maps(proc.pid))
        except (HostError, MapsParseError) as exc:
            findings.append(make_finding(
                FindingCode.READ_FAILURE, proc.name,
                f"cannot read maps of pid {proc.pid}: {exc}", now))
            continue

        for path in sorted({r.path for r in regions if is_deleted_backing(r)}):
            findings.append(make_finding(
                FindingCode.MODULE_DELETED_BACKING, f"{proc.name}:{path}",
                f"executable mapping backed by a deleted file in pid {proc.pid}", now))

        module_paths = sorted({r.path for r in regions if not is_special_region(r)})

        if proc.name not in baseline.process_modules:
            findings.append(make_finding(
                FindingCode.PROCESS_UNKNOWN, proc.name,
                f"process not in baseline (pid {proc.pid}, "
                f"{len(module_paths)} modules skipped)", now))
            continue

        known = baseline.module_hashes[proc.name]
        for path in module_paths:
            if path not in known:
                findings.append(make_finding(
                    FindingCode.MODULE_UNKNOWN, f"{proc.name}:{path}",
                    f"unknown module found in pid {proc.pid}", now))
                continue
            try:
                live_hash = get_module_hash(read_module_memory(host, proc.pid, path))
            except HostError as exc:
                findings.append(make_finding(
                    FindingCode.READ_FAILURE, f"{proc.name}:{path}",
                    f"cannot dump module in pid {proc.pid}: {exc}", now))
                continue
            if live_hash == known[path]:
                continue
            if path in baseline.update_whitelist:
                findings.append(make_finding(
                    FindingCode.MODULE_HASH_MISMATCH, f"{proc.name}:{path}",
                    f"hash changed on whitelisted update path (pid {proc.pid}): "
                    f"expected {known[path]}, got {live_hash}",
                    now, severity=Severity.INFO))
            else:
                findings.append(make_finding(
                    FindingCode.MODULE_HASH_MISMATCH, f"{proc.name}:{path}",
                    f"executable memory failed verification (pid {proc.pid}): "
                    f"expected {known[path]}, got {live_hash}", now))

    return findings


@dataclass
class ScanReport:
    """Aggregate view of one sweep's findings."""

    total: int
    counts: dict[str, int]
    max_severity: Severity | None
    duration_ms: float = 0.0
    exit_code: int = 0

    def summary_line(self) -> str:
        parts = [f"{code}={n}" for code, n in sorted(self.counts.items())]
        status = "clean" if self.exit_code == 0 else "findings"
        body = " ".join(parts) if parts else "none"
        return f"scan: {status} total={self.total} [{body}]"


def summarize(findings: list[Finding], duration_ms: float = 0.0) -> ScanReport:
    """Counts per code, max severity, and the exit-code recommendation.

    Only WARN or ALERT findings make a scan dirty; INFO is operational
    noise by construction.
    """
    counts: dict[str, int] = {}
    for f in findings:
        counts[f.code.value] = counts.get(f.code.value, 0) + 1
    max_severity = max((f.severity for f in findings), default=None)
    dirty = any(f.severity >= Severity.WARN for f in findings)
    return ScanReport(
        total=len(findings),
        counts=counts,
        max_severity=max_severity,
        duration_ms=duration_ms,
        exit_code=1 if dirty else 0,
    )
