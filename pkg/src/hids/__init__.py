"""Host-based intrusion detection for stable SCADA-like Linux hosts.

Builds a sealed baseline of per-process module memory hashes and
authorized USB devices, then continuously detects unknown modules,
modified executable memory, and unauthorized USB devices, actively
detaching the latter. A deterministic simulated host reproduces the
three reference attack scenarios at desk scale.
"""

from .baseline import Baseline, deserialize, run_setup, serialize
from .detect import Finding, FindingCode, Severity, check_processes, summarize
from .host import (
    DetachResult,
    DetachStatus,
    Host,
    HostError,
    NoSuchProcessError,
    ProcessRecord,
    UsbDeviceDescriptor,
)
from .memhash import ModuleDump, get_module_hash, read_module_memory
from .monitor import AlertSink, MonitorConfig, format_alert, run_monitor
from .procmaps import (
    MapsParseError,
    MemoryRegion,
    Permissions,
    is_hashable_region,
    is_special_region,
    parse_maps,
    parse_maps_line,
    render_maps_line,
)
from .scenarios import (
    Scenario,
    ScenarioReport,
    analytic_disable_probability,
    run_scenario,
)
from .sealed import FormatError, SealInvalidError
from .simhost import FixtureError, SimulatedHost, load_fixture
from .usbident import (
    AllowList,
    UsbChecker,
    canonical_device_string,
    check_usb,
    generate_device_id,
)

__version__ = "0.1.0"
