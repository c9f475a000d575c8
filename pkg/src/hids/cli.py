"""Operator command line: setup, scan, monitor, usb, baseline verify, simulate.

Exit codes: 0 clean, 1 findings present, 2 usage or configuration
error, 3 seal invalid.
"""

from __future__ import annotations

import argparse
import sys
import threading
import time
from pathlib import Path

from .baseline import Baseline, deserialize, run_setup, serialize
from .detect import FindingCode, check_processes, make_finding, summarize
from .host import Host, HostError
from .monitor import AlertSink, MonitorConfig, format_alert, run_monitor
from .sealed import FormatError, SealInvalidError, load_key
from .simhost import FixtureError, load_fixture
from .usbident import (
    AllowList,
    check_usb,
    generate_device_id,
    load_allowlist,
    serialize_allowlist,
)

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_SEAL = 3


class CliError(Exception):
    """Configuration problem surfaced as exit code 2."""


def _make_host(args: argparse.Namespace) -> Host:
    if getattr(args, "fixture", None):
        return load_fixture(Path(args.fixture).read_bytes())
    if getattr(args, "real", False):
        from .realhost import RealLinuxHost
        return RealLinuxHost()
    raise CliError("select a host with --fixture PATH or --real")


def _load_operator_key(args: argparse.Namespace) -> tuple[bytes, bool]:
    try:
        return load_key(getattr(args, "key_file", None))
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None


def _weak_key_finding(host: Host):
    return make_finding(
        FindingCode.WEAK_KEY_WARNING, "-",
        "HIDS_SEAL_KEY not set and no --key-file given; "
        "sealing with the all-zero development key", host.now_ms())


def _load_baseline(path: str, key: bytes) -> Baseline:
    return deserialize(Path(path).read_bytes(), key)


def _load_allowlist_file(path: str, key: bytes) -> AllowList:
    return load_allowlist(Path(path).read_bytes(), key, source_path=path)


def _add_host_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--fixture", metavar="PATH",
                       help="drive a simulated host from this fixture file")
    group.add_argument("--real", action="store_true",
                       help="use the real Linux host (procfs/sysfs)")


def _add_key_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--key-file", metavar="PATH",
                        help="file holding the 64-hex seal key "
                             "(HIDS_SEAL_KEY env var takes precedence)")


def cmd_setup(args: argparse.Namespace) -> int:
    host = _make_host(args)
    key, weak = _load_operator_key(args)
    if weak:
        print(format_alert(_weak_key_finding(host)), file=sys.stderr)

    base = run_setup(host, update_whitelist=set(args.whitelist_module or ()))
    Path(args.out).write_bytes(serialize(base, key))
    modules = sum(len(v) for v in base.process_modules.values())
    print(f"setup: enrolled {len(base.process_modules)} processes, "
          f"{modules} modules -> {args.out}", file=sys.stderr)

    if args.allowlist:
        entries = {generate_device_id(d) for d in host.list_usb_devices()}
        Path(args.allowlist).write_bytes(serialize_allowlist(entries, key))
        print(f"setup: enrolled {len(entries)} usb devices -> {args.allowlist}",
              file=sys.stderr)
    return EXIT_CLEAN


def cmd_scan(args: argparse.Namespace) -> int:
    host = _make_host(args)
    key, weak = _load_operator_key(args)
    sink = AlertSink(args.out or "-")
    started = time.monotonic()
    try:
        findings = []
        if weak:
            findings.append(_weak_key_finding(host))
        try:
            base = _load_baseline(args.baseline, key)
        except SealInvalidError as exc:
            sink.write_line(format_alert(make_finding(
                FindingCode.BASELINE_SEAL_INVALID, args.baseline,
                str(exc), host.now_ms())))
            return EXIT_SEAL
        findings.extend(check_processes(host, base))
        for finding in findings:
            sink.write_line(format_alert(finding))
    finally:
        sink.close()

    report = summarize(findings, duration_ms=(time.monotonic() - started) * 1000.0)
    print(report.summary_line(), file=sys.stderr)
    if args.figures_dir:
        from .figures import render_scan_figure
        severities = {f.code.value: f.severity for f in findings}
        target = render_scan_figure(report.counts, severities, args.figures_dir)
        print(f"scan: figure -> {target}", file=sys.stderr)
    return report.exit_code


def cmd_monitor(args: argparse.Namespace) -> int:
    host = _make_host(args)
    key, weak = _load_operator_key(args)
    base = _load_baseline(args.baseline, key)
    allow = _load_allowlist_file(args.allowlist, key) if args.allowlist else None
    config = MonitorConfig(
        process_interval_ms=args.interval_ms,
        usb_interval_ms=args.usb_interval_ms,
        max_cycles=args.max_cycles,
        alert_path=args.out or "-",
    )
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None

    stop = threading.Event()
    with AlertSink(config.alert_path) as sink:
        if weak:
            sink.write_line(format_alert(_weak_key_finding(host)))
        summary = run_monitor(host, base, allow, config, sink, stop)
    print(f"monitor: {summary.cycles} cycles, {summary.findings_emitted} findings, "
          f"stopped by {summary.stopped_by}", file=sys.stderr)
    if summary.stopped_by == "sink_error":
        return EXIT_USAGE
    return EXIT_FINDINGS if summary.dirty else EXIT_CLEAN


def cmd_usb_list(args: argparse.Namespace) -> int:
    host = _make_host(args)
    for desc in host.list_usb_devices():
        print("\t".join([
            f"{desc.vendor_id:04x}:{desc.product_id:04x}",
            desc.serial_number,
            desc.product_name,
            generate_device_id(desc),
            str(desc.bus_ref),
        ]))
    return EXIT_CLEAN


def cmd_usb_check(args: argparse.Namespace) -> int:
    host = _make_host(args)
    key, weak = _load_operator_key(args)
    allow = _load_allowlist_file(args.allowlist, key)
    findings = []
    if weak:
        findings.append(_weak_key_finding(host))
    findings.extend(check_usb(host, allow))
    for finding in findings:
        print(format_alert(finding))
    return summarize(findings).exit_code


def cmd_baseline_verify(args: argparse.Namespace) -> int:
    key, _ = _load_operator_key(args)
    data = Path(args.file).read_bytes()
    try:
        deserialize(data, key)
    except SealInvalidError as exc:
        print(f"SEAL_INVALID: {exc}")
        return EXIT_SEAL
    except FormatError as exc:
        raise CliError(f"seal valid but body malformed: {exc}") from None
    print("OK: seal verifies and baseline parses")
    return EXIT_CLEAN


def cmd_simulate(args: argparse.Namespace) -> int:
    from .scenarios import Scenario, run_scenario, write_report

    scenario = Scenario(args.scenario)
    try:
        report = run_scenario(scenario, args.trials, args.seed,
                              poll_ms=args.poll_ms,
                              autorun_max_ms=args.autorun_max_ms)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    print(report.summary_line())
    out_path = args.out or f"hids-{args.scenario}-report.json"
    write_report(report, out_path)
    print(f"simulate: report -> {out_path}", file=sys.stderr)
    if args.figures_dir:
        from .figures import render_scenario_figures
        for target in render_scenario_figures(report, args.figures_dir):
            print(f"simulate: figure -> {target}", file=sys.stderr)
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hids",
        description="Host intrusion detection for stable SCADA-like hosts: "
                    "sealed memory-hash baselines plus USB allow-listing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_setup = sub.add_parser("setup", help="enroll the host into a sealed baseline")
    _add_host_options(p_setup)
    _add_key_option(p_setup)
    p_setup.add_argument("--out", required=True, metavar="PATH",
                         help="where to write the sealed baseline")
    p_setup.add_argument("--allowlist", metavar="PATH",
                         help="also enroll attached USB devices into a sealed "
                              "allow-list at PATH")
    p_setup.add_argument("--whitelist-module", action="append", metavar="PATH",
                         help="module path whose future hash changes are "
                              "known updates (repeatable)")
    p_setup.set_defaults(func=cmd_setup)

    p_scan = sub.add_parser("scan", help="run one process sweep against a baseline")
    _add_host_options(p_scan)
    _add_key_option(p_scan)
    p_scan.add_argument("--baseline", required=True, metavar="PATH")
    p_scan.add_argument("--out", metavar="PATH",
                        help="append findings to PATH instead of stdout")
    p_scan.add_argument("--figures-dir", metavar="DIR",
                        help="render a findings chart into DIR")
    p_scan.set_defaults(func=cmd_scan)

    p_mon = sub.add_parser("monitor", help="run the continuous monitoring loop")
    _add_host_options(p_mon)
    _add_key_option(p_mon)
    p_mon.add_argument("--baseline", required=True, metavar="PATH")
    p_mon.add_argument("--allowlist", metavar="PATH",
                       help="sealed allow-list; omitting disables USB checks")
    p_mon.add_argument("--interval-ms", type=int, default=5000,
                       help="process sweep interval (default 5000)")
    p_mon.add_argument("--usb-interval-ms", type=int, default=100,
                       help="USB poll interval (default 100)")
    p_mon.add_argument("--max-cycles", type=int, default=None,
                       help="stop after N process sweeps (default: run forever)")
    p_mon.add_argument("--out", metavar="PATH", default="-",
                       help="alert sink file, or - for stdout (default)")
    p_mon.set_defaults(func=cmd_monitor)

    p_usb = sub.add_parser("usb", help="enumerate or enforce the USB bus")
    usb_sub = p_usb.add_subparsers(dest="usb_command", required=True)
    p_usb_list = usb_sub.add_parser("list", help="list attached devices")
    _add_host_options(p_usb_list)
    p_usb_list.set_defaults(func=cmd_usb_list)
    p_usb_check = usb_sub.add_parser("check",
                                     help="flag and detach unauthorized devices")
    _add_host_options(p_usb_check)
    _add_key_option(p_usb_check)
    p_usb_check.add_argument("--allowlist", required=True, metavar="PATH")
    p_usb_check.set_defaults(func=cmd_usb_check)

    p_base = sub.add_parser("baseline", help="baseline file operations")
    base_sub = p_base.add_subparsers(dest="baseline_command", required=True)
    p_verify = base_sub.add_parser("verify", help="check a baseline's seal")
    p_verify.add_argument("file", metavar="FILE")
    _add_key_option(p_verify)
    p_verify.set_defaults(func=cmd_baseline_verify)

    p_sim = sub.add_parser("simulate",
                           help="reproduce an attack scenario on simulated hosts")
    p_sim.add_argument("scenario", choices=["s1", "s2", "s3"],
                       help="s1 usb insertion, s2 downloaded malware, s3 usb bypass")
    p_sim.add_argument("--trials", type=int, default=100)
    p_sim.add_argument("--seed", type=int, required=True,
                       help="master seed; identical seeds reproduce byte-identical reports")
    p_sim.add_argument("--poll-ms", type=float, default=None,
                       help="USB poll period for s1 (default 100)")
    p_sim.add_argument("--autorun-max-ms", type=float, default=None,
                       help="autorun delay upper bound for s1 (default 1000)")
    p_sim.add_argument("--out", metavar="PATH",
                       help="report path (default hids-<scenario>-report.json)")
    p_sim.add_argument("--figures-dir", metavar="DIR",
                       help="render scenario figures into DIR")
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_CLEAN
    try:
        return args.func(args)
    except CliError as exc:
        print(f"hids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SealInvalidError as exc:
        print(f"hids: seal invalid: {exc}", file=sys.stderr)
        return EXIT_SEAL
    except (FixtureError, FormatError, HostError) as exc:
        print(f"hids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"hids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
