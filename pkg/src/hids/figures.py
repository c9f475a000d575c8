"""Matplotlib rendering of scenario and scan reports to image files.

Figures land next to the machine-readable output: the CLI's
``--figures-dir`` flag routes scenario reports and scan summaries
through here. Rendering is headless (Agg) and file-only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .detect import Severity  # noqa: E402
from .scenarios import Scenario, ScenarioReport, analytic_disable_probability  # noqa: E402

__all__ = ["render_scan_figure", "render_scenario_figures"]

_DISABLED_COLOR = "#2e7d32"
_FIRED_COLOR = "#c62828"
_SEVERITY_COLORS = {
    Severity.INFO: "#4a90d9",
    Severity.WARN: "#e8a33d",
    Severity.ALERT: "#c62828",
}


def _outcome_bar(ax, report: ScenarioReport) -> None:
    missed = report.trials - report.detected
    ax.bar(["detected", "missed"], [report.detected, missed],
           color=[_DISABLED_COLOR, _FIRED_COLOR])
    ax.set_ylabel("trials")
    ax.set_title(f"detection {report.detected}/{report.trials}")


def _render_s1(report: ScenarioReport, out_dir: Path) -> Path:
    fig, (ax_race, ax_rate) = plt.subplots(1, 2, figsize=(9, 4))

    won = [s for s in report.samples if s["disabled"]]
    lost = [s for s in report.samples if not s["disabled"]]
    for group, color, label in ((won, _DISABLED_COLOR, "detach won"),
                                (lost, _FIRED_COLOR, "autorun fired")):
        ax_race.scatter([s["poll_latency_ms"] for s in group],
                        [s["autorun_delay_ms"] for s in group],
                        s=12, color=color, label=label, alpha=0.7)
    limit = report.params["poll_ms"]
    ax_race.plot([0, limit], [0, limit], "k--", linewidth=1,
                 label="autorun delay = poll latency")
    ax_race.set_xlabel("poll latency after insertion (ms)")
    ax_race.set_ylabel("autorun delay (ms)")
    ax_race.set_title("USB insertion race")
    ax_race.legend(fontsize=8)

    analytic = analytic_disable_probability(report.params["poll_ms"],
                                            report.params["autorun_max_ms"])
    rate = report.disable_rate or 0.0
    ax_rate.bar(["observed", "analytic"], [rate, analytic],
                color=["#455a64", "#90a4ae"])
    ax_rate.set_ylim(0.0, 1.05)
    ax_rate.set_ylabel("disable rate")
    ax_rate.set_title(f"disabled {report.disabled}/{report.trials}")
    for x, value in enumerate([rate, analytic]):
        ax_rate.text(x, value + 0.01, f"{value:.3f}", ha="center", fontsize=9)

    fig.suptitle(f"scenario 1, seed {report.seed}")
    fig.tight_layout()
    target = out_dir / "s1_usb_insertion.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def _render_s2(report: ScenarioReport, out_dir: Path) -> Path:
    fig, (ax_outcome, ax_offsets) = plt.subplots(1, 2, figsize=(9, 4))
    _outcome_bar(ax_outcome, report)

    positions = [s["byte_offset"] / max(int(s["region_size"]), 1)
                 for s in report.samples]
    ax_offsets.hist(positions, bins=20, color="#455a64")
    ax_offsets.set_xlabel("mutation position within region (fraction)")
    ax_offsets.set_ylabel("trials")
    ax_offsets.set_title("flipped-byte placement")

    fig.suptitle(f"scenario 2, seed {report.seed}")
    fig.tight_layout()
    target = out_dir / "s2_downloaded_malware.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def _render_s3(report: ScenarioReport, out_dir: Path) -> Path:
    fig, (ax_outcome, ax_delays) = plt.subplots(1, 2, figsize=(9, 4))
    _outcome_bar(ax_outcome, report)

    ax_delays.hist([s["autorun_delay_ms"] for s in report.samples],
                   bins=20, color="#455a64")
    ax_delays.set_xlabel("autorun delay before injection (ms)")
    ax_delays.set_ylabel("trials")
    ax_delays.set_title("bypass payload timing")

    fig.suptitle(f"scenario 3, seed {report.seed}")
    fig.tight_layout()
    target = out_dir / "s3_usb_bypass.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def render_scenario_figures(report: ScenarioReport, out_dir: str | Path) -> list[Path]:
    """Render the figure set for one scenario report; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if report.scenario is Scenario.USB_INSERTION:
        return [_render_s1(report, out)]
    if report.scenario is Scenario.DOWNLOADED_MALWARE:
        return [_render_s2(report, out)]
    return [_render_s3(report, out)]


def render_scan_figure(counts: dict[str, int], severities: dict[str, Severity],
                       out_dir: str | Path, stem: str = "scan_findings") -> Path:
    """Bar chart of findings per code, colored by severity."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    codes = sorted(counts)
    values = [counts[c] for c in codes]
    colors = [_SEVERITY_COLORS[severities.get(c, Severity.INFO)] for c in codes]
    if codes:
        ax.bar(codes, values, color=colors)
        ax.tick_params(axis="x", labelrotation=30)
        for label in ax.get_xticklabels():
            label.set_horizontalalignment("right")
    else:
        ax.text(0.5, 0.5, "no findings", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_ylabel("findings")
    ax.set_title("scan findings by code")
    fig.tight_layout()
    target = out / f"{stem}.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target
