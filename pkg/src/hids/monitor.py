"""The continuous monitoring loop: USB checks fast, process sweeps slow.

Both cadences run on the host clock, so simulated and real runs share
one code path; with the simulated clock the schedule is exactly
deterministic (poll instants are ``clock_start + k * interval``). Every
finding is appended to the alert sink in emission order as one
tab-separated line::

    <iso8601-ms>\t<severity>\t<code>\t<subject>\t<detail>

plus one ``CYCLE`` heartbeat line per process sweep.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO

from .baseline import Baseline
from .detect import Finding, FindingCode, Severity, check_processes, make_finding
from .host import Host, HostError
from .sealed import escape_field
from .usbident import AllowList, UsbChecker

__all__ = ["AlertSink", "MonitorConfig", "MonitorSummary", "format_alert", "run_monitor"]


@dataclass
class MonitorConfig:
    process_interval_ms: int = 5000
    usb_interval_ms: int = 100
    max_cycles: int | None = None
    alert_path: str = "-"

    def validate(self) -> None:
        if self.process_interval_ms < 1 or self.usb_interval_ms < 1:
            raise ValueError("intervals must be >= 1 ms")
        if self.max_cycles is not None and self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1 when set")


def _iso8601(at_ms: float) -> str:
    stamp = datetime.fromtimestamp(at_ms / 1000.0, tz=timezone.utc)
    return stamp.isoformat(timespec="milliseconds")


def format_alert(finding: Finding) -> str:
    """One alert line; embedded tabs/newlines are escaped, never raw."""
    return "\t".join([
        _iso8601(finding.at_ms),
        finding.severity.name,
        finding.code.value,
        escape_field(finding.subject),
        escape_field(finding.detail),
    ])


class AlertSink:
    """Append-only, line-atomic alert writer (file path or ``-`` stdout)."""

    def __init__(self, path: str = "-"):
        self.path = path
        self._lock = threading.Lock()
        self._owned = path != "-"
        self._fh: IO[str] = open(path, "a", encoding="utf-8") if self._owned else sys.stdout

    def write_line(self, line: str) -> None:
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._owned:
            self._fh.close()

    def __enter__(self) -> AlertSink:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class MonitorSummary:
    cycles: int
    findings_emitted: int
    dirty: bool
    stopped_by: str  # "max_cycles" | "stop_signal" | "sink_error"
    started_at_ms: float
    ended_at_ms: float


def run_monitor(host: Host, baseline: Baseline, allowlist: AllowList | None,
                config: MonitorConfig, sink: AlertSink,
                stop_signal: threading.Event | None = None) -> MonitorSummary:
    """Run the combined loop until stop_signal or max_cycles.

    ``allowlist=None`` disables the USB cadence. A stop signal raised
    mid-cycle lets the current sweep complete before shutting down.
    Transient host errors become WARN findings; a sink write failure
    terminates with error status.
    """
    config.validate()
    checker = UsbChecker(allowlist) if allowlist is not None else None
    start = host.now_ms()
    next_usb = start
    next_proc = start
    cycles = 0
    emitted = 0
    dirty = False
    stopped_by = "stop_signal"

    def emit(findings: list[Finding]) -> None:
        nonlocal emitted, dirty
        for finding in findings:
            sink.write_line(format_alert(finding))
            emitted += 1
            if finding.severity >= Severity.WARN:
                dirty = True

    try:
        while True:
            if stop_signal is not None and stop_signal.is_set():
                stopped_by = "stop_signal"
                break
            due = min(next_usb, next_proc) if checker is not None else next_proc
            host.advance_to(due)

            # USB before the process sweep when both land on one instant:
            # a detach should precede the sweep that inspects its fallout.
            if checker is not None and due >= next_usb:
                try:
                    emit(checker.check(host))
                except HostError as exc:
                    emit([make_finding(FindingCode.READ_FAILURE, "-",
                                       f"usb check failed: {exc}", host.now_ms())])
                next_usb += config.usb_interval_ms

            if due >= next_proc:
                emit(check_processes(host, baseline))
                cycles += 1
                emit([make_finding(FindingCode.CYCLE, "-", f"n={cycles}",
                                   host.now_ms())])
                next_proc += config.process_interval_ms
                if config.max_cycles is not None and cycles >= config.max_cycles:
                    stopped_by = "max_cycles"
                    break
    except OSError:
        stopped_by = "sink_error"

    return MonitorSummary(
        cycles=cycles,
        findings_emitted=emitted,
        dirty=dirty,
        stopped_by=stopped_by,
        started_at_ms=start,
        ended_at_ms=host.now_ms(),
    )
