"""Desk-scale reproduction of the three attack scenarios.

Every trial owns a private simulated host, and all randomness derives
from the (scenario, seed, trial) triple, so a report is a pure function
of its seed and parameters.

The unauthorized-USB race is modeled explicitly: the device lands at a
uniform phase inside one poll period, its autorun payload fires after a
uniform delay in [0, autorun_max_ms], and the first poll at or after
insertion detaches it. With poll period P and delay bound D the detach
wins with probability 1 - P/(2D); the defaults P=100 ms, D=1000 ms are
calibrated so that probability is exactly 0.95.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .baseline import run_setup
from .detect import FindingCode, check_processes
from .simhost import load_fixture_dict
from .usbident import AllowList, UsbChecker, generate_device_id

__all__ = [
    "Scenario",
    "ScenarioReport",
    "analytic_disable_probability",
    "random_fixture",
    "run_scenario",
    "run_scenario_downloaded_malware",
    "run_scenario_usb_bypass",
    "run_scenario_usb_insertion",
    "write_report",
]


class Scenario(Enum):
    USB_INSERTION = "s1"
    DOWNLOADED_MALWARE = "s2"
    USB_BYPASS = "s3"


@dataclass
class ScenarioReport:
    """Aggregated outcome of one scenario run plus per-trial samples."""

    scenario: Scenario
    trials: int
    detected: int
    disabled: int | None
    seed: int
    params: dict[str, float]
    samples: list[dict[str, object]] = field(default_factory=list)

    @property
    def detection_rate(self) -> float:
        return self.detected / self.trials

    @property
    def disable_rate(self) -> float | None:
        return None if self.disabled is None else self.disabled / self.trials

    def to_json_bytes(self) -> bytes:
        payload = {
            "scenario": self.scenario.name,
            "trials": self.trials,
            "detected": self.detected,
            "disabled": self.disabled,
            "seed": self.seed,
            "params": self.params,
            "samples": self.samples,
        }
        return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")

    def summary_line(self) -> str:
        parts = [
            self.scenario.value,
            f"scenario={self.scenario.name}",
            f"trials={self.trials}",
            f"detected={self.detected}",
            f"detection_rate={self.detection_rate:.4f}",
        ]
        if self.disabled is not None:
            parts.append(f"disabled={self.disabled}")
            parts.append(f"disable_rate={self.disable_rate:.4f}")
            parts.append(
                "analytic="
                f"{analytic_disable_probability(self.params['poll_ms'], self.params['autorun_max_ms']):.4f}")
        parts.append(f"seed={self.seed}")
        return "\t".join(parts)


def write_report(report: ScenarioReport, path: str | Path) -> None:
    Path(path).write_bytes(report.to_json_bytes())


def analytic_disable_probability(poll_ms: float, autorun_max_ms: float) -> float:
    """Closed-form detach-wins probability of the race model.

    With poll phase T uniform on [0, P) and autorun delay A uniform on
    [0, D), P(A > T) = 1 - P/(2D), computed here as (2D - P)/(2D) for
    one correctly rounded division.
    """
    if not 0 < poll_ms <= autorun_max_ms:
        raise ValueError("need 0 < poll_ms <= autorun_max_ms")
    return (2.0 * autorun_max_ms - poll_ms) / (2.0 * autorun_max_ms)


def _trial_rng(scenario: str, seed: int, trial: int) -> random.Random:
    digest = hashlib.sha256(f"{scenario}:{seed}:{trial}".encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


_PROCESS_NAMES = [
    "scada-supervisor",
    "rtu-poller",
    "hmi-server",
    "historian",
    "modbus-gw",
    "alarm-router",
]

# Generated fixtures stay below the injection zone used by payloads.
_INJECT_BASE = 0x7F00_0000_0000


def random_fixture(rng: random.Random, min_processes: int = 1,
                   max_processes: int = 3) -> dict:
    """A seeded random SCADA-like fixture document.

    Process names are unique (same-name processes with divergent memory
    are a documented false-positive source, not something identity runs
    should produce), every process has at least one executable module,
    and deleted-backing paths are never generated because the detector
    flags those by design.
    """
    count = rng.randint(min_processes, max_processes)
    names = rng.sample(_PROCESS_NAMES, count)
    pids = sorted(rng.sample(range(100, 9000), count))

    processes = []
    for name, pid in zip(names, pids):
        cursor = 0x40_0000 + rng.randrange(0, 16) * 0x1000
        modules = []

        def region(path: str, perms: str) -> dict:
            nonlocal cursor
            size = rng.randint(16, 192)
            start = cursor
            cursor += size + rng.randrange(0x1000, 0x3000, 0x100)
            if rng.random() < 0.5:
                content: object = rng.randbytes(size).hex()
            else:
                content = {"seed": rng.getrandbits(64), "length": size}
            return {
                "path": path,
                "perms": perms,
                "start_addr": f"0x{start:x}",
                "end_addr": f"0x{start + size:x}",
                "content": content,
            }

        for index in range(rng.randint(1, 3)):
            path = (f"/opt/scada/bin/{name}" if index == 0
                    else f"/usr/lib/scada/{name}/plugin{index}.so")
            for _ in range(rng.randint(1, 2)):
                modules.append(region(path, "r-xp"))
            if rng.random() < 0.5:
                modules.append(region(path, "rw-p"))
        if rng.random() < 0.5:
            modules.append(region("[heap]", "rw-p"))
        if rng.random() < 0.3:
            modules.append(region("[stack]", "rw-p"))
        if rng.random() < 0.3:
            modules.append(region("", "rw-p"))

        processes.append({"name": name, "pid": pid, "modules": modules})

    usb_devices = []
    for index in range(rng.randint(0, 2)):
        usb_devices.append({
            "vendor_id": f"0x{rng.randint(1, 0xFFFF):04x}",
            "product_id": f"0x{rng.randint(1, 0xFFFF):04x}",
            "serial": f"SN{rng.randint(0, 99999):05d}",
            "product": f"vetted device {index}",
        })

    return {"clock_start_ms": 0, "processes": processes, "usb_devices": usb_devices}


def _s1_fixture() -> dict:
    return {
        "clock_start_ms": 0,
        "processes": [
            {"name": "op-console", "pid": 400, "modules": [
                {"path": "/opt/scada/bin/op-console", "perms": "r-xp",
                 "start_addr": "0x400000", "end_addr": "0x400040",
                 "content": {"seed": 4242, "length": 64}},
            ]},
        ],
        "usb_devices": [
            {"vendor_id": "0x1d6b", "product_id": "0x0002",
             "serial": "0001", "product": "xHCI Host Controller"},
        ],
    }


def run_scenario_usb_insertion(trials: int, seed: int, poll_ms: float = 100.0,
                               autorun_max_ms: float = 1000.0) -> ScenarioReport:
    """Scenario 1: unauthorized device inserted against a live USB poll."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < poll_ms <= autorun_max_ms:
        raise ValueError("need 0 < poll_ms <= autorun_max_ms")

    detected_total = 0
    disabled_total = 0
    samples: list[dict[str, object]] = []

    for trial in range(trials):
        rng = _trial_rng("s1", seed, trial)
        phase = rng.uniform(0.0, poll_ms)
        delay = rng.uniform(0.0, autorun_max_ms)

        host = load_fixture_dict(_s1_fixture())
        allowed_id = generate_device_id(host.list_usb_devices()[0])
        checker = UsbChecker(AllowList(frozenset({allowed_id})))
        checker.check(host)  # poll at t=0: only the vetted device present

        host.advance_to(phase)
        bus_ref = host.insert_device(
            0x1337, 0x0042, serial=f"evil-{trial:05d}", product="autorun stick",
            autorun_delay_ms=delay,
            payload={"target_process": "op-console", "module": {
                "path": "/tmp/usb-payload.so", "perms": "r-xp",
                "start_addr": f"0x{_INJECT_BASE:x}",
                "end_addr": f"0x{_INJECT_BASE + 32:x}",
                "content": {"seed": 99, "length": 32},
            }})

        detected = False
        for k in range(1, 4):
            host.advance_to(k * poll_ms)
            findings = checker.check(host)
            if any(f.code is FindingCode.USB_UNAUTHORIZED for f in findings):
                detected = True
                break
        disabled = detected and host.payload_fired(bus_ref) is False

        detected_total += detected
        disabled_total += disabled
        samples.append({
            "trial": trial,
            "poll_latency_ms": poll_ms - phase,
            "autorun_delay_ms": delay,
            "detected": detected,
            "disabled": disabled,
        })

    return ScenarioReport(
        scenario=Scenario.USB_INSERTION,
        trials=trials,
        detected=detected_total,
        disabled=disabled_total,
        seed=seed,
        params={"poll_ms": float(poll_ms), "autorun_max_ms": float(autorun_max_ms)},
        samples=samples,
    )


def _hashable_targets(fixture: dict) -> list[tuple[int, str, str, int, int]]:
    """(pid, name, path, start, size) for every executable file-backed region."""
    targets = []
    for proc in fixture["processes"]:
        for module in proc["modules"]:
            path = module["path"]
            perms = module["perms"]
            special = (not path or (path.startswith("[") and path.endswith("]"))
                       or path.endswith(" (deleted)"))
            if special or perms[0] != "r" or perms[2] != "x":
                continue
            start = int(module["start_addr"], 16)
            size = int(module["end_addr"], 16) - start
            targets.append((proc["pid"], proc["name"], path, start, size))
    return targets


def run_scenario_downloaded_malware(trials: int, seed: int) -> ScenarioReport:
    """Scenario 2: one byte of baselined executable memory is flipped."""
    if trials < 1:
        raise ValueError("trials must be >= 1")

    detected_total = 0
    samples: list[dict[str, object]] = []

    for trial in range(trials):
        rng = _trial_rng("s2", seed, trial)
        fixture = random_fixture(rng)
        host = load_fixture_dict(fixture)
        base = run_setup(host)

        targets = _hashable_targets(fixture)
        if not targets:
            raise ValueError("fixture has no hashable region to mutate")
        pid, name, path, start, size = rng.choice(targets)
        offset = rng.randrange(size)
        old = host.read_mem(pid, start + offset, 1)[0]
        host.poke(pid, start + offset, bytes([old ^ rng.randint(1, 255)]))

        findings = check_processes(host, base)
        detected = any(
            f.code is FindingCode.MODULE_HASH_MISMATCH and f.subject == f"{name}:{path}"
            for f in findings)

        detected_total += detected
        samples.append({
            "trial": trial,
            "process": name,
            "module": path,
            "byte_offset": offset,
            "region_size": size,
            "detected": detected,
        })

    return ScenarioReport(
        scenario=Scenario.DOWNLOADED_MALWARE,
        trials=trials,
        detected=detected_total,
        disabled=None,
        seed=seed,
        params={},
        samples=samples,
    )


def run_scenario_usb_bypass(trials: int, seed: int) -> ScenarioReport:
    """Scenario 3: the payload injects a module before any USB poll runs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")

    detected_total = 0
    samples: list[dict[str, object]] = []

    for trial in range(trials):
        rng = _trial_rng("s3", seed, trial)
        fixture = random_fixture(rng)
        host = load_fixture_dict(fixture)
        base = run_setup(host)

        target = rng.choice([p["name"] for p in fixture["processes"]])
        injected_path = f"/tmp/.cache-{trial:05d}.so"
        delay = rng.uniform(1.0, 50.0)
        size = rng.randint(16, 128)
        host.insert_device(
            0x0B00, 0x0BAD, serial=f"bypass-{trial:05d}", product="silent stick",
            autorun_delay_ms=delay,
            payload={"target_process": target, "module": {
                "path": injected_path, "perms": "r-xp",
                "start_addr": f"0x{_INJECT_BASE:x}",
                "end_addr": f"0x{_INJECT_BASE + size:x}",
                "content": {"seed": rng.getrandbits(64), "length": size},
            }})
        # No USB poll ever runs: the autorun fires unopposed.
        host.advance(delay + 1.0)

        findings = check_processes(host, base)
        detected = any(
            f.code is FindingCode.MODULE_UNKNOWN and f.subject == f"{target}:{injected_path}"
            for f in findings)

        detected_total += detected
        samples.append({
            "trial": trial,
            "process": target,
            "injected_path": injected_path,
            "autorun_delay_ms": delay,
            "detected": detected,
        })

    return ScenarioReport(
        scenario=Scenario.USB_BYPASS,
        trials=trials,
        detected=detected_total,
        disabled=None,
        seed=seed,
        params={},
        samples=samples,
    )


def run_scenario(scenario: Scenario, trials: int, seed: int,
                 poll_ms: float | None = None,
                 autorun_max_ms: float | None = None) -> ScenarioReport:
    """Dispatch by scenario; the timing knobs apply to scenario 1 only."""
    if scenario is Scenario.USB_INSERTION:
        return run_scenario_usb_insertion(
            trials, seed,
            poll_ms=100.0 if poll_ms is None else poll_ms,
            autorun_max_ms=1000.0 if autorun_max_ms is None else autorun_max_ms)
    if poll_ms is not None or autorun_max_ms is not None:
        raise ValueError("timing parameters only apply to the USB insertion scenario")
    if scenario is Scenario.DOWNLOADED_MALWARE:
        return run_scenario_downloaded_malware(trials, seed)
    return run_scenario_usb_bypass(trials, seed)
