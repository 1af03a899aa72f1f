"""Command-line front end: capture, replay, filter, summarize, report.

Output schema is one line per matched packet in the column order
No | Time | Source | Destination | Protocol | Length | Info, with Time as
seconds relative to the first packet, printed with 9 fractional digits.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional

from . import analysis
from .capture import (
    CaptureSession,
    FileSource,
    LiveSource,
    OpenFailed,
    PermissionDenied,
    SessionState,
    list_interfaces,
    source_label,
)
from .decode import SummaryRow, format_time
from .filters import FilterError, compile_filter
from .pcapio import DEFAULT_SNAPLEN

# Column widths: No>6, Time>15, Source<21, Destination<21, Protocol<8,
# Length>6, two spaces between columns, Info unpadded, no trailing blanks.
_LINE_FORMAT = "{no:>6}  {time:>15}  {source:<21}  {destination:<21}  {protocol:<8}  {length:>6}  {info}"

DEFAULT_RING_CAPACITY = 65536
DEFAULT_SERVE_ADDR = "127.0.0.1:8787"


def render_summary_line(row: SummaryRow) -> str:
    return _LINE_FORMAT.format(
        no=row.no,
        time=format_time(row.time_ns),
        source=row.source,
        destination=row.destination,
        protocol=row.protocol,
        length=row.length,
        info=row.info,
    ).rstrip()


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_capture_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-f", "--filter", default="", metavar="EXPR", help="display/capture filter expression")
    parser.add_argument("-w", "--write", metavar="FILE", help="save matched packets to a pcap file")
    parser.add_argument("-c", "--count", type=int, metavar="N", help="stop after N matched packets")
    parser.add_argument("-t", "--duration", type=float, metavar="SECONDS", help="stop after this capture timespan")
    parser.add_argument("--ring", type=int, default=DEFAULT_RING_CAPACITY, metavar="N", help="ring buffer capacity")
    parser.add_argument("--stats", action="store_true", help="print protocol statistics at end")
    parser.add_argument("--alerts", action="store_true", help="run the alert detectors at end")
    parser.add_argument("--report", metavar="FILE", help="write the JSON report document to FILE")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sniff", description="LAN traffic monitor")
    sub = parser.add_subparsers(dest="mode", required=True)

    read_parser = sub.add_parser("read", help="replay a saved pcap file")
    read_parser.add_argument("-r", "--input", required=True, metavar="FILE", help="pcap file to read")
    _add_capture_flags(read_parser)

    live_parser = sub.add_parser("live", help="capture from a network interface")
    live_parser.add_argument("-i", "--interface", required=True, metavar="IFACE")
    live_parser.add_argument("--no-promiscuous", action="store_true", help="do not enable promiscuous mode")
    live_parser.add_argument("--snaplen", type=int, default=DEFAULT_SNAPLEN, metavar="BYTES")
    _add_capture_flags(live_parser)

    sub.add_parser("list-interfaces", help="enumerate capture interfaces")

    serve_parser = sub.add_parser("serve", help="run the monitoring API service")
    serve_parser.add_argument("addr", nargs="?", default=DEFAULT_SERVE_ADDR, metavar="HOST:PORT")
    serve_parser.add_argument("--static", metavar="DIR", help="serve dashboard assets from DIR at /")

    return parser


def _fail(message: str) -> int:
    print(f"sniff: error: {message}", file=sys.stderr)
    return 2


def _run_session(session: CaptureSession, args, out) -> int:
    try:
        session.start()
    except OpenFailed as exc:
        return _fail(str(exc))
    cursor = 0
    while True:
        result = session.drain(cursor)
        if result.gap and cursor:
            print("sniff: warning: ring buffer overflowed, some packets not shown", file=sys.stderr)
        for record in result.records:
            print(render_summary_line(record.summary), file=out)
            cursor = record.index
        if not result.records:
            if session.state is SessionState.STOPPED:
                break
            time.sleep(0.02)
    if session.error:
        print(f"sniff: warning: {session.error}", file=sys.stderr)

    records = session.records()
    if args.write:
        session.save(args.write)
    if args.stats:
        _print_stats(analysis.accumulate_stats(records), out)
    if args.alerts:
        _print_alerts(analysis.run_all_detectors(records), out)
    if args.report:
        _write_report(session, records, args.report)
    return 0


def _print_stats(stats, out) -> None:
    print(file=out)
    print("Protocol statistics:", file=out)
    for proto in sorted(stats.per_protocol):
        count = stats.per_protocol[proto]
        print(f"  {proto:<10} {count.packets:>8} packets {count.bytes:>12} bytes", file=out)
    print(f"  {'Total':<10} {stats.total_packets:>8} packets {stats.total_bytes:>12} bytes", file=out)
    print(f"  Duration: {stats.duration_ns / 1e9:.9f} s", file=out)


def _print_alerts(alerts, out) -> None:
    print(file=out)
    print(f"Alerts ({len(alerts)}):", file=out)
    if not alerts:
        print("  none", file=out)
    for alert in alerts:
        print(
            f"  [{alert.severity}] {alert.kind} subject={alert.subject} "
            f"window={alert.window_start_ns}..{alert.window_end_ns}",
            file=out,
        )


def _session_meta(session: CaptureSession) -> dict:
    counters = session.counters
    return {
        "id": session.id,
        "source": source_label(session.source),
        "state": session.state.value,
        "seen": counters.seen,
        "matched": counters.matched,
        "dropped": counters.dropped,
    }


def _write_report(session: CaptureSession, records, path: str) -> None:
    stats = analysis.accumulate_stats(records)
    report = analysis.generate_report(
        _session_meta(session),
        stats,
        analysis.build_conversations(records),
        analysis.pair_echoes(records),
        analysis.run_all_detectors(records),
    )
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(analysis.report_to_doc(report), handle, indent=2, sort_keys=True)
        handle.write("\n")


def _compile_or_fail(text: str) -> tuple[Optional[object], Optional[str]]:
    try:
        return compile_filter(text), None
    except FilterError as exc:
        return None, str(exc)


def _run_read(args, out) -> int:
    filter_expr, error = _compile_or_fail(args.filter)
    if error:
        print(f"sniff: bad filter: {error}", file=sys.stderr)
        return 1
    session = CaptureSession(
        FileSource(args.input),
        filter_expr=filter_expr,
        ring_capacity=args.ring,
        max_packets=args.count,
        max_seconds=args.duration,
    )
    return _run_session(session, args, out)


def _run_live(args, out) -> int:
    filter_expr, error = _compile_or_fail(args.filter)
    if error:
        print(f"sniff: bad filter: {error}", file=sys.stderr)
        return 1
    source = LiveSource(
        interface=args.interface,
        promiscuous=not args.no_promiscuous,
        snaplen=args.snaplen,
    )
    session = CaptureSession(
        source,
        filter_expr=filter_expr,
        ring_capacity=args.ring,
        max_packets=args.count,
        max_seconds=args.duration,
    )
    try:
        return _run_session(session, args, out)
    except KeyboardInterrupt:
        if session.state is SessionState.CAPTURING:
            session.stop()
        return 0


def _run_list_interfaces(out) -> int:
    try:
        interfaces = list_interfaces()
    except PermissionDenied as exc:
        return _fail(str(exc))
    for info in interfaces:
        status = "up" if info.is_up else "down"
        mac = info.mac or "-"
        ips = ",".join(info.ipv4) or "-"
        print(f"{info.name:<16} {status:<5} mac={mac:<18} ipv4={ips}", file=out)
    return 0


def _run_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        print(f"sniff: error: bad address {args.addr!r}, expected HOST:PORT", file=sys.stderr)
        return 1
    app = create_app(static_dir=args.static)
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout
    try:
        if args.mode == "read":
            return _run_read(args, out)
        if args.mode == "live":
            return _run_live(args, out)
        if args.mode == "list-interfaces":
            return _run_list_interfaces(out)
        return _run_serve(args)
    except OSError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
