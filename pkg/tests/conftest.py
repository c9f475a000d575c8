from __future__ import annotations

import json

import pytest

from hids.simhost import SimulatedHost, load_fixture

KEY = bytes.fromhex("a3" * 32)

RTU_CODE_A = "00112233445566778899aabbccddeeff"
RTU_CODE_B = "0f1e2d3c4b5a69788796a5b4c3d2e1f0" * 2


def make_module(path: str, perms: str, start: int, content) -> dict:
    if isinstance(content, str):
        size = len(content) // 2
    else:
        size = content["length"]
    return {
        "path": path,
        "perms": perms,
        "start_addr": f"0x{start:x}",
        "end_addr": f"0x{start + size:x}",
        "content": content,
    }


def make_fixture(processes=None, usb_devices=None, clock_start_ms=0) -> dict:
    return {
        "clock_start_ms": clock_start_ms,
        "processes": processes or [],
        "usb_devices": usb_devices or [],
    }


def basic_fixture_dict() -> dict:
    """Two processes; the first module spans two executable regions."""
    return make_fixture(
        processes=[
            {"name": "rtu-poller", "pid": 101, "modules": [
                make_module("/opt/scada/bin/rtu-poller", "r-xp", 0x400000, RTU_CODE_A),
                make_module("/opt/scada/bin/rtu-poller", "r-xp", 0x401000, RTU_CODE_B),
                make_module("/opt/scada/bin/rtu-poller", "rw-p", 0x402000, "00" * 16),
                make_module("[heap]", "rw-p", 0x600000, {"seed": 2, "length": 64}),
            ]},
            {"name": "hmi-server", "pid": 202, "modules": [
                make_module("/usr/lib/scada/libui.so", "r-xp", 0x500000,
                            {"seed": 3, "length": 48}),
            ]},
        ],
        usb_devices=[
            {"vendor_id": "0x1d6b", "product_id": "0x0002",
             "serial": "0001", "product": "xHCI Host Controller"},
        ],
    )


def load_dict(document: dict) -> SimulatedHost:
    """Round every test fixture through the byte-level loader."""
    return load_fixture(json.dumps(document).encode("utf-8"))


@pytest.fixture
def basic_fixture() -> dict:
    return basic_fixture_dict()


@pytest.fixture
def basic_host(basic_fixture) -> SimulatedHost:
    return load_dict(basic_fixture)


@pytest.fixture
def key() -> bytes:
    return KEY


@pytest.fixture(autouse=True)
def _clean_seal_key_env(monkeypatch):
    """Keep ambient HIDS_SEAL_KEY from leaking into key-file tests."""
    monkeypatch.delenv("HIDS_SEAL_KEY", raising=False)
