from __future__ import annotations

import math
import random

import pytest

from hids.baseline import run_setup
from hids.detect import FindingCode, check_processes
from hids.scenarios import (
    Scenario,
    analytic_disable_probability,
    random_fixture,
    run_scenario,
    run_scenario_downloaded_malware,
    run_scenario_usb_bypass,
    run_scenario_usb_insertion,
)
from hids.simhost import load_fixture_dict
from conftest import load_dict, make_fixture, make_module


# -- analytic race model -------------------------------------------------------

def test_analytic_value_at_calibrated_parameters():
    assert analytic_disable_probability(100, 1000) == 0.95


def test_analytic_symmetric_case():
    # Two independent uniforms on [0, D): P(A > T) = 1/2.
    assert analytic_disable_probability(1000, 1000) == 0.5


def test_analytic_instant_polling_limit():
    assert analytic_disable_probability(1e-9, 1000) == pytest.approx(1.0)


def test_analytic_rejects_bad_parameters():
    with pytest.raises(ValueError):
        analytic_disable_probability(0, 1000)
    with pytest.raises(ValueError):
        analytic_disable_probability(-5, 1000)
    with pytest.raises(ValueError):
        analytic_disable_probability(2000, 1000)


def test_analytic_agrees_with_direct_monte_carlo():
    # Independent oracle: sample the two uniforms directly, no host at all.
    rng = random.Random(123)
    for poll, bound in [(100.0, 1000.0), (250.0, 500.0), (400.0, 400.0)]:
        n = 20_000
        wins = sum(rng.uniform(0, bound) > rng.uniform(0, poll) for _ in range(n))
        estimate = wins / n
        sigma = math.sqrt(estimate * (1 - estimate) / n)
        assert abs(estimate - analytic_disable_probability(poll, bound)) < 4 * sigma + 1e-9


# -- scenario 1 ----------------------------------------------------------------

def test_s1_detects_every_insertion_for_any_seed():
    for seed in (0, 1, 99):
        report = run_scenario_usb_insertion(40, seed)
        assert report.detected == 40
        assert report.scenario is Scenario.USB_INSERTION


def test_s1_disable_outcome_matches_race_inputs_per_trial():
    # The host's verdict must coincide with the recorded timing race.
    report = run_scenario_usb_insertion(300, 7)
    for sample in report.samples:
        expected = sample["autorun_delay_ms"] > sample["poll_latency_ms"]
        assert sample["disabled"] == expected
    assert report.disabled == sum(s["disabled"] for s in report.samples)


def test_s1_disable_rate_converges_to_analytic():
    report = run_scenario_usb_insertion(4000, 11)
    analytic = analytic_disable_probability(100.0, 1000.0)
    sigma = math.sqrt(analytic * (1 - analytic) / 4000)
    assert abs(report.disable_rate - analytic) < 4 * sigma


def test_s1_respects_timing_parameters():
    report = run_scenario_usb_insertion(200, 3, poll_ms=400.0, autorun_max_ms=400.0)
    assert all(0 < s["poll_latency_ms"] <= 400.0 for s in report.samples)
    assert all(0 <= s["autorun_delay_ms"] < 400.0 for s in report.samples)
    analytic = analytic_disable_probability(400.0, 400.0)
    assert abs(report.disable_rate - analytic) < 0.15  # 0.5 +- loose band


def test_s1_parameter_validation():
    with pytest.raises(ValueError):
        run_scenario_usb_insertion(0, 1)
    with pytest.raises(ValueError):
        run_scenario_usb_insertion(10, 1, poll_ms=2000.0, autorun_max_ms=1000.0)


# -- scenario 2 ----------------------------------------------------------------

def test_s2_detects_every_mutation():
    report = run_scenario_downloaded_malware(30, 5)
    assert report.detected == 30
    assert report.disabled is None
    for sample in report.samples:
        assert sample["detected"] is True
        assert 0 <= sample["byte_offset"] < sample["region_size"]


def test_s2_negative_control_rw_mutation_not_detected():
    # By design: only readable+executable regions enter the hash, so a
    # writable data region can change without tripping the detector.
    doc = make_fixture(processes=[
        {"name": "p", "pid": 1, "modules": [
            make_module("/bin/p", "r-xp", 0x400000, "aa" * 16),
            make_module("/bin/p", "rw-p", 0x500000, "bb" * 16),
        ]}])
    host = load_dict(doc)
    base = run_setup(host)
    host.poke(1, 0x500004, b"\x00")
    assert check_processes(host, base) == []


def test_s2_negative_control_same_value_write_not_detected():
    doc = make_fixture(processes=[
        {"name": "p", "pid": 1, "modules": [
            make_module("/bin/p", "r-xp", 0x400000, "aa" * 16)]}])
    host = load_dict(doc)
    base = run_setup(host)
    host.poke(1, 0x400004, b"\xaa")  # write the byte already there
    assert check_processes(host, base) == []


# -- scenario 3 ----------------------------------------------------------------

def test_s3_detects_every_bypass_injection():
    report = run_scenario_usb_bypass(30, 5)
    assert report.detected == 30
    assert all(s["detected"] for s in report.samples)
    assert all(s["injected_path"].startswith("/tmp/") for s in report.samples)


def test_s3_variant_same_path_different_content_is_hash_mismatch():
    doc = make_fixture(processes=[
        {"name": "p", "pid": 1, "modules": [
            make_module("/bin/p", "r-xp", 0x400000, "aa" * 16)]}])
    host = load_dict(doc)
    base = run_setup(host)
    # Payload reuses the baselined path but lands at a fresh range with
    # different bytes: the module's dump grows, so its hash changes.
    host.insert_device(0x0B00, 0x0BAD, autorun_delay_ms=5,
                       payload={"target_process": "p", "module":
                                make_module("/bin/p", "r-xp", 0x7F0000000000,
                                            "cc" * 16)})
    host.advance_to(100)
    findings = check_processes(host, base)
    assert [f.code for f in findings] == [FindingCode.MODULE_HASH_MISMATCH]
    assert findings[0].subject == "p:/bin/p"


def test_s3_variant_injection_into_unbaselined_process():
    host = load_dict(make_fixture(processes=[
        {"name": "p", "pid": 1, "modules": [
            make_module("/bin/p", "r-xp", 0x400000, "aa" * 16)]}]))
    base = run_setup(host)
    host.spawn_process("newcomer", 2, [])
    host.insert_device(0x0B00, 0x0BAD, autorun_delay_ms=5,
                       payload={"target_process": "newcomer", "module":
                                make_module("/tmp/evil.so", "r-xp",
                                            0x7F0000000000, "cc" * 16)})
    host.advance_to(100)
    findings = check_processes(host, base)
    assert [f.code for f in findings] == [FindingCode.PROCESS_UNKNOWN]
    assert findings[0].subject == "newcomer"


# -- fixtures, determinism, dispatch --------------------------------------------

def test_random_fixture_is_always_loadable_with_unique_names():
    for seed in range(50):
        rng = random.Random(seed)
        doc = random_fixture(rng)
        host = load_fixture_dict(doc)
        names = [p["name"] for p in doc["processes"]]
        assert len(names) == len(set(names))
        assert host.list_processes()
        exec_regions = [m for p in doc["processes"] for m in p["modules"]
                        if m["perms"] == "r-xp"]
        assert exec_regions


def test_reports_are_byte_identical_for_identical_seed_and_params():
    for runner, kwargs in [
        (run_scenario_usb_insertion, {"poll_ms": 100.0, "autorun_max_ms": 1000.0}),
        (run_scenario_downloaded_malware, {}),
        (run_scenario_usb_bypass, {}),
    ]:
        first = runner(25, 42, **kwargs).to_json_bytes()
        second = runner(25, 42, **kwargs).to_json_bytes()
        assert first == second
        assert runner(25, 43, **kwargs).to_json_bytes() != first


def test_dispatch_rejects_timing_knobs_outside_s1():
    with pytest.raises(ValueError):
        run_scenario(Scenario.DOWNLOADED_MALWARE, 5, 1, poll_ms=50.0)
    with pytest.raises(ValueError):
        run_scenario(Scenario.USB_BYPASS, 5, 1, autorun_max_ms=500.0)
    report = run_scenario(Scenario.USB_INSERTION, 5, 1, poll_ms=50.0,
                          autorun_max_ms=500.0)
    assert report.params == {"poll_ms": 50.0, "autorun_max_ms": 500.0}


def test_summary_line_is_single_line_and_delimited():
    report = run_scenario_usb_insertion(10, 2)
    line = report.summary_line()
    assert "\n" not in line
    fields = dict(part.split("=", 1) for part in line.split("\t")[1:])
    assert fields["trials"] == "10"
    assert fields["detected"] == "10"
    assert "analytic" in fields
