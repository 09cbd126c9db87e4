"""Run metrics: message dissemination accounting, convergence timing, CRDT
state sizes over time, per-link frame counts, and round-trip samples.

Renderable as an aligned table for reading or as delimited rows (one header,
one record per sample) for external plotting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import SimTime

# Status of one (message, replica) pair. Every posted message gets exactly
# one record per replica so nothing is ever silently lost.
DELIVERED = "delivered"
WITHHELD = "withheld"  # held for review upstream, never offered onward
UNREACHABLE = "unreachable"  # no usable path materialized during the run


@dataclass(frozen=True)
class DisseminationRecord:
    msg: str
    replica: str
    status: str
    latency_ms: int | None = None


@dataclass(frozen=True)
class SizeSample:
    time: SimTime
    node: str
    messages: int
    size_bytes: int


@dataclass(frozen=True)
class RoundTripSample:
    msg: str
    rt_ms: int


@dataclass
class MetricsReport:
    dissemination: list[DisseminationRecord] = field(default_factory=list)
    sizes: list[SizeSample] = field(default_factory=list)
    link_frames: dict[str, int] = field(default_factory=dict)
    round_trips: list[RoundTripSample] = field(default_factory=list)
    heal_time_ms: SimTime | None = None
    convergence_ms: SimTime | None = None

    @property
    def unaccounted(self) -> int:
        """Messages lacking a status at some replica; always 0 by construction,
        kept as an explicit conservation check."""
        return sum(1 for r in self.dissemination if r.status not in
                   (DELIVERED, WITHHELD, UNREACHABLE))


ROWS_HEADER = "metric,time_ms,subject,value,extra"


def render_report(report: MetricsReport, fmt: str = "table") -> str:
    if fmt == "rows":
        return _render_rows(report)
    if fmt == "table":
        return _render_table(report)
    raise ValueError(f"unknown report format {fmt!r}, expected 'table' or 'rows'")


def _iter_rows(report: MetricsReport):
    for rec in sorted(report.dissemination, key=lambda r: (r.msg, r.replica)):
        latency = "" if rec.latency_ms is None else str(rec.latency_ms)
        yield ("dissemination", latency, f"{rec.msg}->{rec.replica}", rec.status, "")
    if report.convergence_ms is not None and report.heal_time_ms is not None:
        yield (
            "convergence",
            str(report.convergence_ms),
            "after-heal",
            str(report.convergence_ms - report.heal_time_ms),
            f"heal={report.heal_time_ms}",
        )
    for sample in report.sizes:
        yield (
            "crdt_size",
            str(sample.time),
            sample.node,
            str(sample.size_bytes),
            f"messages={sample.messages}",
        )
    for link in sorted(report.link_frames):
        yield ("link_frames", "", link, str(report.link_frames[link]), "")
    for rt in sorted(report.round_trips, key=lambda r: r.msg):
        yield ("round_trip", "", rt.msg, str(rt.rt_ms), "")


def _render_rows(report: MetricsReport) -> str:
    lines = [ROWS_HEADER]
    for row in _iter_rows(report):
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _render_table(report: MetricsReport) -> str:
    sections: list[str] = []

    recs = sorted(report.dissemination, key=lambda r: (r.msg, r.replica))
    lines = [f"dissemination ({len(recs)} records)"]
    for rec in recs:
        latency = "-" if rec.latency_ms is None else f"{rec.latency_ms} ms"
        lines.append(f"  {rec.msg:<24} -> {rec.replica:<10} {rec.status:<12} {latency}")
    sections.append("\n".join(lines))

    if report.heal_time_ms is not None:
        if report.convergence_ms is not None:
            delta = report.convergence_ms - report.heal_time_ms
            sections.append(
                "convergence\n"
                f"  healed at {report.heal_time_ms} ms, converged at "
                f"{report.convergence_ms} ms (+{delta} ms)"
            )
        else:
            sections.append(
                f"convergence\n  healed at {report.heal_time_ms} ms, never converged"
            )

    if report.sizes:
        lines = [f"crdt sizes ({len(report.sizes)} samples)"]
        for sample in report.sizes:
            lines.append(
                f"  t={sample.time:<8} {sample.node:<10} "
                f"{sample.messages:>5} msgs {sample.size_bytes:>8} B"
            )
        sections.append("\n".join(lines))

    if report.link_frames:
        lines = ["frames per link"]
        for link in sorted(report.link_frames):
            lines.append(f"  {link:<36} {report.link_frames[link]:>6}")
        sections.append("\n".join(lines))

    if report.round_trips:
        lines = [f"round trips ({len(report.round_trips)} samples)"]
        for rt in sorted(report.round_trips, key=lambda r: r.msg):
            lines.append(f"  {rt.msg:<24} {rt.rt_ms:>6} ms")
        sections.append("\n".join(lines))

    return "\n\n".join(sections) + "\n"
