"""Traffic analysis: statistics, conversations, ping verification, alerts, reports.

All functions are pure over a snapshot of dissected records; detectors are
deterministic sliding- or bucketed-window scans with configurable
thresholds.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .decode import PacketRecord

# Default thresholds; the threat classes come from operator practice, the
# numbers are tunables.
PORT_SCAN_WINDOW_SECS = 5.0
PORT_SCAN_PORT_THRESHOLD = 20
FLOOD_WINDOW_SECS = 1.0
FLOOD_PPS_THRESHOLD = 500
HIGH_ACTIVITY_WINDOW_SECS = 1.0
HIGH_ACTIVITY_BASELINE_WINDOWS = 10
HIGH_ACTIVITY_SIGMA = 3.0
HIGH_ACTIVITY_FLOOR = 10  # windows at or below this packet count never alert

SEVERITY_RANK = {"critical": 0, "warning": 1, "info": 2}


@dataclass
class ProtoCount:
    packets: int = 0
    bytes: int = 0


@dataclass
class ProtocolStats:
    per_protocol: dict = field(default_factory=dict)  # display name -> ProtoCount
    total_packets: int = 0
    total_bytes: int = 0
    duration_ns: int = 0


@dataclass
class Conversation:
    addr_a: str
    port_a: int
    addr_b: str
    port_b: int
    protocol: str
    packets_ab: int = 0
    packets_ba: int = 0
    bytes_ab: int = 0
    bytes_ba: int = 0
    first_ts_ns: int = 0
    last_ts_ns: int = 0

    @property
    def total_bytes(self) -> int:
        return self.bytes_ab + self.bytes_ba

    @property
    def total_packets(self) -> int:
        return self.packets_ab + self.packets_ba


@dataclass
class EchoPairing:
    request_index: int
    reply_index: Optional[int]
    ident: int
    seq: int
    peer: str
    rtt_ns: Optional[int]


@dataclass
class Alert:
    kind: str  # PortScan | HighActivity | ArpDuplicate | FloodDos
    subject: str
    window_start_ns: int
    window_end_ns: int
    evidence: dict
    severity: str


def accumulate_stats(records: Iterable[PacketRecord]) -> ProtocolStats:
    """Single pass; each packet is counted once under its topmost protocol."""
    stats = ProtocolStats()
    first_ts = last_ts = None
    for record in records:
        proto = record.summary.protocol
        count = stats.per_protocol.setdefault(proto, ProtoCount())
        count.packets += 1
        count.bytes += record.frame.orig_len
        stats.total_packets += 1
        stats.total_bytes += record.frame.orig_len
        ts = record.frame.ts_ns
        first_ts = ts if first_ts is None else min(first_ts, ts)
        last_ts = ts if last_ts is None else max(last_ts, ts)
    if first_ts is not None:
        stats.duration_ns = last_ts - first_ts
    return stats


def _transport_endpoints(record: PacketRecord):
    """(src_ep, dst_ep, protocol) for IPv4 TCP/UDP/ICMP records, else None."""
    ip = record.layer("ipv4")
    if ip is None:
        return None
    transport = record.layer("tcp") or record.layer("udp")
    if transport is not None:
        proto = "TCP" if transport.name == "tcp" else "UDP"
        return (ip.src, transport.src_port), (ip.dst, transport.dst_port), proto
    if record.layer("icmp") is not None:
        return (ip.src, 0), (ip.dst, 0), "ICMP"
    return None


def build_conversations(records: Iterable[PacketRecord]) -> list:
    """Group by direction-normalized endpoint pair and transport protocol."""
    conversations: dict = {}
    order: list = []
    for record in records:
        endpoints = _transport_endpoints(record)
        if endpoints is None:
            continue
        src_ep, dst_ep, proto = endpoints
        forward = src_ep <= dst_ep
        a, b = (src_ep, dst_ep) if forward else (dst_ep, src_ep)
        key = (a, b, proto)
        conv = conversations.get(key)
        if conv is None:
            conv = Conversation(
                addr_a=a[0],
                port_a=a[1],
                addr_b=b[0],
                port_b=b[1],
                protocol=proto,
                first_ts_ns=record.frame.ts_ns,
                last_ts_ns=record.frame.ts_ns,
            )
            conversations[key] = conv
            order.append(conv)
        if forward:
            conv.packets_ab += 1
            conv.bytes_ab += record.frame.orig_len
        else:
            conv.packets_ba += 1
            conv.bytes_ba += record.frame.orig_len
        conv.first_ts_ns = min(conv.first_ts_ns, record.frame.ts_ns)
        conv.last_ts_ns = max(conv.last_ts_ns, record.frame.ts_ns)
    return order


def pair_echoes(records: Iterable[PacketRecord]) -> list:
    """Match each echo reply to the earliest unpaired request with its (peer, id, seq).

    A reply never pairs with a request timestamped after it, so RTTs are
    nonnegative by construction.
    """
    echoes = []
    for record in records:
        icmp = record.layer("icmp")
        ip = record.layer("ipv4")
        if icmp is None or ip is None or not icmp.is_echo:
            continue
        echoes.append((record, icmp, ip))
    echoes.sort(key=lambda item: (item[0].frame.ts_ns, item[0].index))

    pending: dict = defaultdict(list)  # (peer, ident, seq) -> queued pairings
    pairings: list = []
    for record, icmp, ip in echoes:
        if icmp.icmp_type == 8:
            pairing = EchoPairing(
                request_index=record.index,
                reply_index=None,
                ident=icmp.ident,
                seq=icmp.seq,
                peer=ip.dst,
                rtt_ns=None,
            )
            pairings.append(pairing)
            pending[(ip.dst, icmp.ident, icmp.seq)].append((pairing, record.frame.ts_ns))
        else:
            queue = pending.get((ip.src, icmp.ident, icmp.seq))
            if queue:
                pairing, request_ts = queue.pop(0)
                pairing.reply_index = record.index
                pairing.rtt_ns = record.frame.ts_ns - request_ts
    return pairings


def _merge_intervals(intervals: list) -> list:
    """Merge overlapping/touching (start, end) pairs; input need not be sorted."""
    merged: list = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def _sliding_window_hits(events: list, window_ns: int, qualifies) -> list:
    """Qualifying windows ending at each event, merged.

    ``events`` is a time-sorted list of (ts_ns, value); a window is the
    inclusive interval [ts_j - window_ns, ts_j] for each event j, and
    ``qualifies(values_in_window)`` decides whether it triggers.
    """
    hits = []
    left = 0
    for right in range(len(events)):
        while events[right][0] - events[left][0] > window_ns:
            left += 1
        if qualifies([v for _, v in events[left : right + 1]]):
            hits.append((events[right][0] - window_ns, events[right][0]))
    return _merge_intervals(hits)


def detect_port_scan(
    records: Iterable[PacketRecord],
    window_secs: float = PORT_SCAN_WINDOW_SECS,
    distinct_port_threshold: int = PORT_SCAN_PORT_THRESHOLD,
) -> list:
    """Flag sources probing many distinct destination ports inside one window.

    Probes are TCP SYNs (without ACK) and UDP datagrams; distinct ports are
    counted across all target hosts.
    """
    if window_secs <= 0:
        raise ValueError("window_secs must be positive")
    if distinct_port_threshold < 1:
        raise ValueError("distinct_port_threshold must be at least 1")
    window_ns = int(window_secs * 1e9)
    probes: dict = defaultdict(list)  # src ip -> [(ts, dst port)]
    for record in records:
        ip = record.layer("ipv4")
        if ip is None:
            continue
        tcp = record.layer("tcp")
        udp = record.layer("udp")
        if tcp is not None and tcp.syn and not tcp.ack_flag:
            probes[ip.src].append((record.frame.ts_ns, tcp.dst_port))
        elif udp is not None:
            probes[ip.src].append((record.frame.ts_ns, udp.dst_port))

    alerts = []
    for src in sorted(probes):
        events = sorted(probes[src])
        windows = _sliding_window_hits(
            events, window_ns, lambda ports: len(set(ports)) >= distinct_port_threshold
        )
        for start, end in windows:
            ports = sorted({p for ts, p in events if start <= ts <= end})
            alerts.append(
                Alert(
                    kind="PortScan",
                    subject=src,
                    window_start_ns=start,
                    window_end_ns=end,
                    evidence={"distinct_ports": ports, "port_count": len(ports)},
                    severity="warning",
                )
            )
    return alerts


def detect_flood(
    records: Iterable[PacketRecord],
    window_secs: float = FLOOD_WINDOW_SECS,
    pps_threshold: float = FLOOD_PPS_THRESHOLD,
) -> list:
    """Flag destinations receiving more than pps_threshold packets/s over a window."""
    if window_secs <= 0 or pps_threshold <= 0:
        raise ValueError("flood thresholds must be positive")
    window_ns = int(window_secs * 1e9)
    threshold_count = pps_threshold * window_secs
    arrivals: dict = defaultdict(list)  # dst ip -> [ts]
    for record in records:
        ip = record.layer("ipv4")
        if ip is not None:
            arrivals[ip.dst].append(record.frame.ts_ns)

    alerts = []
    for dst in sorted(arrivals):
        events = [(ts, None) for ts in sorted(arrivals[dst])]
        windows = _sliding_window_hits(events, window_ns, lambda vals: len(vals) > threshold_count)
        for start, end in windows:
            count = sum(1 for ts, _ in events if start <= ts <= end)
            alerts.append(
                Alert(
                    kind="FloodDos",
                    subject=dst,
                    window_start_ns=start,
                    window_end_ns=end,
                    evidence={
                        "packets": count,
                        "window_secs": window_secs,
                        "pps_threshold": pps_threshold,
                    },
                    severity="critical",
                )
            )
    return alerts


def detect_high_activity(
    records: Iterable[PacketRecord],
    window_secs: float = HIGH_ACTIVITY_WINDOW_SECS,
    baseline_windows: int = HIGH_ACTIVITY_BASELINE_WINDOWS,
    sigma_factor: float = HIGH_ACTIVITY_SIGMA,
) -> list:
    """Flag sources whose per-window packet count jumps above their own baseline.

    Windows are fixed buckets from the first packet of the stream; a bucket
    alerts when its count exceeds mean + sigma_factor * stddev (population)
    of the preceding ``baseline_windows`` buckets and the absolute floor.
    """
    if baseline_windows < 2:
        raise ValueError("baseline_windows must be at least 2")
    records = list(records)
    if not records:
        return []
    window_ns = int(window_secs * 1e9)
    t0 = min(record.frame.ts_ns for record in records)
    max_bucket = 0
    counts: dict = defaultdict(lambda: defaultdict(int))  # src -> bucket -> packets
    for record in records:
        ip = record.layer("ipv4")
        if ip is None:
            continue
        bucket = (record.frame.ts_ns - t0) // window_ns
        counts[ip.src][bucket] += 1
        max_bucket = max(max_bucket, bucket)

    alerts = []
    for src in sorted(counts):
        series = [counts[src].get(k, 0) for k in range(max_bucket + 1)]
        hot: list = []
        for k in range(baseline_windows, len(series)):
            baseline = series[k - baseline_windows : k]
            mean = sum(baseline) / len(baseline)
            stddev = math.sqrt(sum((x - mean) ** 2 for x in baseline) / len(baseline))
            if series[k] > mean + sigma_factor * stddev and series[k] > HIGH_ACTIVITY_FLOOR:
                hot.append((k, mean, stddev))
        for group in _group_consecutive(hot):
            first_k, mean, stddev = group[0]
            last_k = group[-1][0]
            alerts.append(
                Alert(
                    kind="HighActivity",
                    subject=src,
                    window_start_ns=t0 + first_k * window_ns,
                    window_end_ns=t0 + (last_k + 1) * window_ns,
                    evidence={
                        "window_packets": max(series[k] for k, _, _ in group),
                        "baseline_mean": mean,
                        "baseline_stddev": stddev,
                        "sigma_factor": sigma_factor,
                    },
                    severity="warning",
                )
            )
    return alerts


def _group_consecutive(hits: list) -> list:
    """Group (bucket, ...) tuples into runs of consecutive bucket indices."""
    groups: list = []
    for hit in hits:
        if groups and hit[0] == groups[-1][-1][0] + 1:
            groups[-1].append(hit)
        else:
            groups.append([hit])
    return groups


def detect_arp_duplicates(records: Iterable[PacketRecord]) -> list:
    """Flag an IPv4 address claimed by two or more MACs in ARP replies."""
    claims: dict = defaultdict(dict)  # ip -> mac -> [ts]
    for record in records:
        arp = record.layer("arp")
        if arp is None or arp.opcode != 2:
            continue
        claims[arp.sender_ip].setdefault(arp.sender_mac, []).append(record.frame.ts_ns)

    alerts = []
    for ip in sorted(claims):
        macs = claims[ip]
        if len(macs) < 2:
            continue
        timestamps = [ts for stamps in macs.values() for ts in stamps]
        alerts.append(
            Alert(
                kind="ArpDuplicate",
                subject=ip,
                window_start_ns=min(timestamps),
                window_end_ns=max(timestamps),
                evidence={"macs": sorted(macs), "claims": len(timestamps)},
                severity="warning",
            )
        )
    return alerts


def run_all_detectors(records: Iterable[PacketRecord], **overrides) -> list:
    """All four detectors at their (possibly overridden) default thresholds."""
    records = list(records)
    alerts = []
    alerts.extend(
        detect_port_scan(
            records,
            overrides.get("port_scan_window_secs", PORT_SCAN_WINDOW_SECS),
            overrides.get("port_scan_threshold", PORT_SCAN_PORT_THRESHOLD),
        )
    )
    alerts.extend(
        detect_flood(
            records,
            overrides.get("flood_window_secs", FLOOD_WINDOW_SECS),
            overrides.get("flood_pps_threshold", FLOOD_PPS_THRESHOLD),
        )
    )
    alerts.extend(
        detect_high_activity(
            records,
            overrides.get("high_activity_window_secs", HIGH_ACTIVITY_WINDOW_SECS),
            overrides.get("high_activity_baseline_windows", HIGH_ACTIVITY_BASELINE_WINDOWS),
            overrides.get("high_activity_sigma", HIGH_ACTIVITY_SIGMA),
        )
    )
    alerts.extend(detect_arp_duplicates(records))
    return sort_alerts(alerts)


def sort_alerts(alerts: list) -> list:
    """Stable report order: severity, then window start, then subject."""
    return sorted(
        alerts,
        key=lambda a: (SEVERITY_RANK.get(a.severity, 99), a.window_start_ns, a.subject, a.kind),
    )


@dataclass
class Report:
    session: dict
    stats: ProtocolStats
    conversations: list
    pairings: list
    alerts: list
    generated_at: str


def generate_report(
    session_meta: dict,
    stats: ProtocolStats,
    conversations: list,
    pairings: list,
    alerts: list,
    *,
    top_conversations: int = 10,
    generated_at: Optional[str] = None,
) -> Report:
    """Assemble the report with deterministic ordering of every section."""
    ranked = sorted(
        conversations,
        key=lambda c: (-c.total_bytes, c.addr_a, c.port_a, c.addr_b, c.port_b, c.protocol),
    )
    if generated_at is None:
        generated_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return Report(
        session=dict(session_meta),
        stats=stats,
        conversations=ranked[:top_conversations],
        pairings=list(pairings),
        alerts=sort_alerts(alerts),
        generated_at=generated_at,
    )


def _format_ms(ns: Optional[int]) -> str:
    if ns is None:
        return "-"
    return f"{ns / 1e6:.3f} ms"


def render_report_text(report: Report) -> str:
    """Deterministic UTF-8 text rendering of a report."""
    lines = []
    session = report.session
    lines.append(f"Capture report for session {session.get('id', '?')}")
    lines.append(f"Generated: {report.generated_at}")
    lines.append(f"Source: {session.get('source', '?')}")
    lines.append(
        "State: {state}  seen={seen} matched={matched} dropped={dropped}".format(
            state=session.get("state", "?"),
            seen=session.get("seen", 0),
            matched=session.get("matched", 0),
            dropped=session.get("dropped", 0),
        )
    )
    lines.append("")
    lines.append("Protocols:")
    stats = report.stats
    for proto in sorted(stats.per_protocol):
        count = stats.per_protocol[proto]
        lines.append(f"  {proto:<10} {count.packets:>8} packets {count.bytes:>12} bytes")
    lines.append(f"  {'Total':<10} {stats.total_packets:>8} packets {stats.total_bytes:>12} bytes")
    lines.append(f"  Duration: {stats.duration_ns / 1e9:.9f} s")
    lines.append("")
    lines.append(f"Conversations (top {len(report.conversations)} by bytes):")
    if not report.conversations:
        lines.append("  none")
    for conv in report.conversations:
        lines.append(
            f"  {conv.addr_a}:{conv.port_a} <-> {conv.addr_b}:{conv.port_b}  {conv.protocol}"
            f"  {conv.packets_ab}/{conv.packets_ba} packets  {conv.bytes_ab}/{conv.bytes_ba} bytes"
        )
    lines.append("")
    lines.append("Echo pairings:")
    if not report.pairings:
        lines.append("  none")
    for pairing in report.pairings:
        reply = f"#{pairing.reply_index}" if pairing.reply_index is not None else "no reply"
        lines.append(
            f"  id={pairing.ident} seq={pairing.seq} peer={pairing.peer}"
            f"  rtt={_format_ms(pairing.rtt_ns)}  (#{pairing.request_index} -> {reply})"
        )
    paired = sum(1 for p in report.pairings if p.reply_index is not None)
    lines.append(f"  {paired} paired, {len(report.pairings) - paired} unanswered")
    lines.append("")
    lines.append("Alerts:")
    if not report.alerts:
        lines.append("  none")
    for alert in report.alerts:
        lines.append(
            f"  [{alert.severity}] {alert.kind} subject={alert.subject}"
            f"  window={alert.window_start_ns}..{alert.window_end_ns}  {_render_evidence(alert.evidence)}"
        )
    lines.append("")
    return "\n".join(lines)


def _render_evidence(evidence: dict) -> str:
    parts = []
    for key in sorted(evidence):
        value = evidence[key]
        if isinstance(value, float):
            parts.append(f"{key}={value:.3f}")
        elif isinstance(value, list):
            parts.append(f"{key}={','.join(str(v) for v in value)}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def stats_to_doc(stats: ProtocolStats) -> dict:
    return {
        "protocols": {
            proto: {"packets": count.packets, "bytes": count.bytes}
            for proto, count in sorted(stats.per_protocol.items())
        },
        "total_packets": stats.total_packets,
        "total_bytes": stats.total_bytes,
        "duration_ns": stats.duration_ns,
    }


def conversation_to_doc(conv: Conversation) -> dict:
    return {
        "endpoint_a": {"addr": conv.addr_a, "port": conv.port_a},
        "endpoint_b": {"addr": conv.addr_b, "port": conv.port_b},
        "protocol": conv.protocol,
        "packets_ab": conv.packets_ab,
        "packets_ba": conv.packets_ba,
        "bytes_ab": conv.bytes_ab,
        "bytes_ba": conv.bytes_ba,
        "first_ts_ns": conv.first_ts_ns,
        "last_ts_ns": conv.last_ts_ns,
    }


def pairing_to_doc(pairing: EchoPairing) -> dict:
    return {
        "request_index": pairing.request_index,
        "reply_index": pairing.reply_index,
        "ident": pairing.ident,
        "seq": pairing.seq,
        "peer": pairing.peer,
        "rtt_ns": pairing.rtt_ns,
    }


def alert_to_doc(alert: Alert) -> dict:
    return {
        "kind": alert.kind,
        "subject": alert.subject,
        "window_start_ns": alert.window_start_ns,
        "window_end_ns": alert.window_end_ns,
        "evidence": alert.evidence,
        "severity": alert.severity,
    }


def report_to_doc(report: Report) -> dict:
    """The canonical machine-readable report document (see docs/report-schema.md)."""
    return {
        "session": report.session,
        "stats": stats_to_doc(report.stats),
        "conversations": [conversation_to_doc(c) for c in report.conversations],
        "echo_pairings": [pairing_to_doc(p) for p in report.pairings],
        "alerts": [alert_to_doc(a) for a in report.alerts],
        "generated_at": report.generated_at,
    }
