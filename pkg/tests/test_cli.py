from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from hids.cli import main
from conftest import KEY, basic_fixture_dict, make_module

ALERT_LINE = re.compile(
    r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}\+00:00\t"
    r"(INFO|WARN|ALERT)\t[A-Z_]+\t[^\t\n]*\t[^\t\n]*$")


@pytest.fixture
def workdir(tmp_path) -> Path:
    (tmp_path / "f.json").write_text(json.dumps(basic_fixture_dict()))
    (tmp_path / "k.hex").write_text(KEY.hex())
    return tmp_path


def _setup(workdir: Path) -> Path:
    out = workdir / "base.hb"
    code = main(["setup", "--fixture", str(workdir / "f.json"),
                 "--out", str(out), "--key-file", str(workdir / "k.hex")])
    assert code == 0
    return out


def test_identity_pipeline_setup_then_scan_exits_clean(workdir, capsys):
    base = _setup(workdir)
    code = main(["scan", "--fixture", str(workdir / "f.json"),
                 "--baseline", str(base), "--key-file", str(workdir / "k.hex")])
    assert code == 0
    assert capsys.readouterr().out == ""  # no findings, no stdout lines


def test_mutated_fixture_scan_reports_mismatch(workdir, capsys):
    base = _setup(workdir)
    doc = basic_fixture_dict()
    content = doc["processes"][0]["modules"][0]["content"]
    doc["processes"][0]["modules"][0]["content"] = "ff" + content[2:]
    mutated = workdir / "mutated.json"
    mutated.write_text(json.dumps(doc))

    code = main(["scan", "--fixture", str(mutated),
                 "--baseline", str(base), "--key-file", str(workdir / "k.hex")])
    out = capsys.readouterr().out
    assert code == 1
    assert "MODULE_HASH_MISMATCH" in out


def test_scan_stdout_matches_alert_grammar(workdir, capsys):
    base = _setup(workdir)
    doc = basic_fixture_dict()
    doc["processes"][0]["modules"].append(
        make_module("/tmp/payload.so", "r-xp", 0x7F0000000000, "ab" * 8))
    (workdir / "injected.json").write_text(json.dumps(doc))

    code = main(["scan", "--fixture", str(workdir / "injected.json"),
                 "--baseline", str(base), "--key-file", str(workdir / "k.hex")])
    assert code == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines
    for line in lines:
        assert ALERT_LINE.match(line), line


def test_baseline_verify_ok_and_tampered(workdir, capsys):
    base = _setup(workdir)
    assert main(["baseline", "verify", str(base),
                 "--key-file", str(workdir / "k.hex")]) == 0

    data = bytearray(base.read_bytes())
    data[len(data) // 2] ^= 1
    tampered = workdir / "tampered.hb"
    tampered.write_bytes(bytes(data))
    assert main(["baseline", "verify", str(tampered),
                 "--key-file", str(workdir / "k.hex")]) == 3
    out = capsys.readouterr().out
    assert "OK" in out and "SEAL_INVALID" in out


def test_scan_with_tampered_baseline_exits_3(workdir, capsys):
    base = _setup(workdir)
    data = bytearray(base.read_bytes())
    data[-2] ^= 1
    base.write_bytes(bytes(data))
    code = main(["scan", "--fixture", str(workdir / "f.json"),
                 "--baseline", str(base), "--key-file", str(workdir / "k.hex")])
    assert code == 3
    out = capsys.readouterr().out
    assert "BASELINE_SEAL_INVALID" in out


def test_unknown_flag_is_usage_error(workdir, capsys):
    code = main(["scan", "--fixture", str(workdir / "f.json"), "--frobnicate"])
    assert code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_host_selection_is_usage_error(workdir, capsys):
    base = _setup(workdir)
    code = main(["scan", "--baseline", str(base),
                 "--key-file", str(workdir / "k.hex")])
    assert code == 2
    assert "--fixture" in capsys.readouterr().err


def test_setup_writes_allowlist_and_usb_check_enforces(workdir, capsys):
    allow = workdir / "allow.hl"
    code = main(["setup", "--fixture", str(workdir / "f.json"),
                 "--out", str(workdir / "base.hb"),
                 "--key-file", str(workdir / "k.hex"),
                 "--allowlist", str(allow)])
    assert code == 0
    assert allow.exists()

    code = main(["usb", "check", "--fixture", str(workdir / "f.json"),
                 "--allowlist", str(allow), "--key-file", str(workdir / "k.hex")])
    assert code == 0
    assert capsys.readouterr().out == ""

    doc = basic_fixture_dict()
    doc["usb_devices"].append({"vendor_id": "0x1337", "product_id": "0x0042",
                               "serial": "EVIL"})
    (workdir / "intruded.json").write_text(json.dumps(doc))
    code = main(["usb", "check", "--fixture", str(workdir / "intruded.json"),
                 "--allowlist", str(allow), "--key-file", str(workdir / "k.hex")])
    out = capsys.readouterr().out
    assert code == 1
    assert "USB_UNAUTHORIZED" in out and "USB_DISABLED" in out


def test_usb_list_output(workdir, capsys):
    assert main(["usb", "list", "--fixture", str(workdir / "f.json")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1
    fields = lines[0].split("\t")
    assert fields[0] == "1d6b:0002"
    assert fields[1] == "0001"
    assert re.fullmatch(r"[0-9a-f]{64}", fields[3])


def test_monitor_cli_writes_heartbeats(workdir):
    base = _setup(workdir)
    alerts = workdir / "alerts.log"
    code = main(["monitor", "--fixture", str(workdir / "f.json"),
                 "--baseline", str(base), "--key-file", str(workdir / "k.hex"),
                 "--max-cycles", "2", "--interval-ms", "1000",
                 "--usb-interval-ms", "100", "--out", str(alerts)])
    assert code == 0
    codes = [line.split("\t")[2] for line in alerts.read_text().splitlines()]
    assert codes == ["CYCLE", "CYCLE"]


def test_weak_key_warning_emitted_without_key_material(workdir, capsys, monkeypatch):
    monkeypatch.delenv("HIDS_SEAL_KEY", raising=False)
    code = main(["setup", "--fixture", str(workdir / "f.json"),
                 "--out", str(workdir / "base.hb")])
    assert code == 0
    assert "WEAK_KEY_WARNING" in capsys.readouterr().err

    code = main(["scan", "--fixture", str(workdir / "f.json"),
                 "--baseline", str(workdir / "base.hb")])
    out = capsys.readouterr().out
    assert code == 0  # INFO findings never dirty a scan
    assert "WEAK_KEY_WARNING" in out


def test_seal_key_env_var_is_honored(workdir, monkeypatch):
    monkeypatch.setenv("HIDS_SEAL_KEY", "cd" * 32)
    base = workdir / "env.hb"
    assert main(["setup", "--fixture", str(workdir / "f.json"),
                 "--out", str(base)]) == 0
    assert main(["baseline", "verify", str(base)]) == 0
    monkeypatch.setenv("HIDS_SEAL_KEY", "ee" * 32)
    assert main(["baseline", "verify", str(base)]) == 3


def test_simulate_writes_report_and_figures(workdir, capsys):
    report_path = workdir / "report.json"
    figures_dir = workdir / "figs"
    code = main(["simulate", "s1", "--trials", "20", "--seed", "9",
                 "--poll-ms", "100", "--autorun-max-ms", "1000",
                 "--out", str(report_path), "--figures-dir", str(figures_dir)])
    assert code == 0
    summary = capsys.readouterr().out.splitlines()[0]
    assert summary.startswith("s1\t")

    report = json.loads(report_path.read_text())
    assert report["trials"] == 20
    assert report["detected"] == 20
    assert len(report["samples"]) == 20

    images = list(figures_dir.glob("*.png"))
    assert images
    assert images[0].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_simulate_rejects_timing_knobs_for_s2(workdir, capsys):
    code = main(["simulate", "s2", "--trials", "5", "--seed", "1",
                 "--poll-ms", "50"])
    assert code == 2


def test_simulate_requires_seed(capsys):
    assert main(["simulate", "s1", "--trials", "5"]) == 2


def test_fixture_schema_error_is_usage_error(workdir, capsys):
    bad = workdir / "bad.json"
    bad.write_text(json.dumps({"processes": [], "usb_devices": []}))  # no clock
    code = main(["usb", "list", "--fixture", str(bad)])
    assert code == 2
    assert "clock_start_ms" in capsys.readouterr().err
