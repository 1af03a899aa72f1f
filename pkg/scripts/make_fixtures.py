#!/usr/bin/env python3
"""Regenerate the committed fixture corpus, reference CSV, and CLI golden files.

Everything here is deterministic: fixed seeds, fixed timestamps. Outputs:

    testdata/ping.pcap               the four-echo ping exchange
    testdata/mixed.pcap              the full >=200-packet corpus
    tests/golden/mixed_reference.csv reference dissection columns (from the
                                     independent oracle in tests/oracles.py)
    tests/golden/ping.txt            golden CLI output for ping.pcap
    tests/golden/mixed.txt           golden CLI output for mixed.pcap
"""

from __future__ import annotations

import csv
import io
import random
import sys
from contextlib import redirect_stdout
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

import builders  # noqa: E402
import oracles  # noqa: E402
from builders import BASE_TS, MILLI, SECOND  # noqa: E402
from sniff import cli  # noqa: E402
from sniff.pcapio import read_pcap_file, write_pcap_file  # noqa: E402


def ping_frames() -> list:
    """The connectivity check: four echo pairs between .84 and .85."""
    frames = []
    payload = bytes(range(0x61, 0x61 + 32))
    for i in range(4):
        t_request = BASE_TS + i * SECOND + i * 137  # odd nanosecond digits on purpose
        t_reply = t_request + 1_500_123 + i * 50_000
        frames.append(builders.icmp_frame(t_request, "10.10.50.84", "10.10.50.85", 8, 1, i + 1, payload))
        frames.append(builders.icmp_frame(t_reply, "10.10.50.85", "10.10.50.84", 0, 1, i + 1, payload))
    return frames


def _http_session(t: int, client: str, server: str, client_port: int, server_port: int,
                  target: str, body: bytes) -> list:
    frames = []
    sport, dport = client_port, server_port
    request = f"GET {target} HTTP/1.1\r\nHost: intranet\r\nUser-Agent: sniff-fixture\r\n\r\n".encode()
    response = b"HTTP/1.1 200 OK\r\nContent-Type: text/html\r\nContent-Length: %d\r\n\r\n%s" % (len(body), body)
    seq_c, seq_s = 1000, 9000
    frames.append(builders.tcp_frame(t, client, server, sport, dport, flags=0x002, seq=seq_c))
    frames.append(builders.tcp_frame(t + MILLI, server, client, dport, sport, flags=0x012, seq=seq_s, ack=seq_c + 1))
    frames.append(builders.tcp_frame(t + 2 * MILLI, client, server, sport, dport, flags=0x010, seq=seq_c + 1, ack=seq_s + 1))
    frames.append(builders.tcp_frame(t + 3 * MILLI, client, server, sport, dport, flags=0x018, seq=seq_c + 1, ack=seq_s + 1, payload=request))
    frames.append(builders.tcp_frame(t + 5 * MILLI, server, client, dport, sport, flags=0x018, seq=seq_s + 1, ack=seq_c + 1 + len(request), payload=response))
    frames.append(builders.tcp_frame(t + 6 * MILLI, client, server, sport, dport, flags=0x010, seq=seq_c + 1 + len(request), ack=seq_s + 1 + len(response)))
    frames.append(builders.tcp_frame(t + 7 * MILLI, client, server, sport, dport, flags=0x011, seq=seq_c + 1 + len(request), ack=seq_s + 1 + len(response)))
    frames.append(builders.tcp_frame(t + 8 * MILLI, server, client, dport, sport, flags=0x011, seq=seq_s + 1 + len(response), ack=seq_c + 2 + len(request)))
    frames.append(builders.tcp_frame(t + 9 * MILLI, client, server, sport, dport, flags=0x010, seq=seq_c + 2 + len(request), ack=seq_s + 2 + len(response)))
    return frames


def edge_case_frames(t: int) -> list:
    """Malformed, truncated, and unusual frames the dissector must survive."""
    frames = []
    step = iter(range(1, 100))

    def at() -> int:
        return t + next(step) * 10 * MILLI

    # capture truncations
    frames.append(builders.frame(at(), bytes(10), orig_len=60))  # mid-ethernet
    full = builders.udp_frame(0, "10.10.50.81", "10.10.50.85", 1111, 2222, b"z" * 18).data
    frames.append(builders.frame(at(), full, cap=20))  # mid-ipv4
    frames.append(builders.frame(at(), full, cap=38))  # mid-udp
    http_full = builders.tcp_frame(0, "10.10.50.82", "10.10.50.85", 51000, 80, flags=0x018,
                                   payload=b"GET /big HTTP/1.1\r\nHost: intranet\r\nX-Pad: yyyy\r\n").data
    frames.append(builders.frame(at(), http_full, cap=len(http_full) - 4))  # mid-http headers

    # checksum corruption
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_E, builders.MAC_D, 0x0800,
        builders.ipv4("10.10.50.84", "10.10.50.85", 17,
                      builders.udp("10.10.50.84", "10.10.50.85", 4000, 4001, b"bad-ip"),
                      corrupt_checksum=True))))
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_E, builders.MAC_D, 0x0800,
        builders.ipv4("10.10.50.84", "10.10.50.85", 17,
                      builders.udp("10.10.50.84", "10.10.50.85", 4002, 4003, b"bad-udp", checksum=0xBEEF)))))
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_E, builders.MAC_D, 0x0800,
        builders.ipv4("10.10.50.84", "10.10.50.85", 6,
                      builders.tcp("10.10.50.84", "10.10.50.85", 4004, 4005, payload=b"bad-tcp", checksum=0xBEEF)))))
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_E, builders.MAC_D, 0x0800,
        builders.ipv4("10.10.50.84", "10.10.50.85", 17,
                      builders.udp("10.10.50.84", "10.10.50.85", 4006, 4007, b"no-cksum", checksum=0)))))

    # fragments
    payload = b"F" * 64
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_B, builders.MAC_A, 0x0800,
        builders.ipv4("10.10.50.81", "10.10.50.82", 17,
                      builders.udp("10.10.50.81", "10.10.50.82", 7000, 7001, payload)[:40],
                      flags=1, ident=0x42))))
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_B, builders.MAC_A, 0x0800,
        builders.ipv4("10.10.50.81", "10.10.50.82", 17, payload[40:], flags=0, frag_offset=6, ident=0x42))))

    # header oddities
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_C, builders.MAC_A, 0x0800,
        builders.ipv4("10.10.50.81", "10.10.50.83", 1, builders.icmp_echo(8, 9, 1, b"options!"),
                      options=b"\x01\x01\x01\x00"))))
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_C, builders.MAC_A, 0x0800,
        builders.ipv4("10.10.50.81", "10.10.50.83", 47, b"\x00\x00\x88\x47GRE-PAYLOAD"))))
    frames.append(builders.frame(at(), builders.eth(builders.MAC_A, builders.MAC_B, 0x88B5, b"experimental-proto")))
    frames.append(builders.frame(at(), builders.eth(builders.MAC_A, builders.MAC_B, 0x0026, b"\xaa\xaa\x03" + bytes(35))))

    bad_arp = bytearray(builders.arp(1, builders.MAC_D, "10.10.50.84", "00:00:00:00:00:00", "10.10.50.85"))
    bad_arp[0:2] = b"\x00\x06"  # hardware type 6
    frames.append(builders.frame(at(), builders.eth(builders.BROADCAST, builders.MAC_D, 0x0806, bytes(bad_arp))))
    arp_frame_full = builders.arp_frame(0, 1, "10.10.50.83", "10.10.50.81").data
    frames.append(builders.frame(at(), arp_frame_full, cap=34))  # arp body cut to 20

    bad_udp = builders.eth(builders.MAC_B, builders.MAC_A, 0x0800,
                           builders.ipv4("10.10.50.81", "10.10.50.82", 17,
                                         b"\x0f\xa0\x0f\xa1\x00\x07\x00\x00"))  # length field 7
    frames.append(builders.frame(at(), bad_udp))
    bad_tcp_seg = bytearray(builders.tcp("10.10.50.81", "10.10.50.82", 6000, 6001))
    bad_tcp_seg[12] = 4 << 4  # data offset 4
    frames.append(builders.frame(at(), builders.eth(
        builders.MAC_B, builders.MAC_A, 0x0800,
        builders.ipv4("10.10.50.81", "10.10.50.82", 6, bytes(bad_tcp_seg)))))

    bad_version = bytearray(builders.eth(
        builders.MAC_B, builders.MAC_A, 0x0800,
        builders.ipv4("10.10.50.81", "10.10.50.82", 17,
                      builders.udp("10.10.50.81", "10.10.50.82", 1, 2, b""))))
    bad_version[14] = (6 << 4) | 5
    frames.append(builders.frame(at(), bytes(bad_version)))

    frames.append(builders.frame(at(), b""))  # zero-length record
    frames.append(builders.udp_frame(at(), "10.10.50.84", "10.10.50.81", 20000, 20001, bytes(1422)))  # near-MTU
    return frames


def mixed_frames() -> list:
    rng = random.Random(0x50C8E7)
    frames = []
    t = BASE_TS

    # ARP warm-up: every host resolves the admin workstation and answers
    for i, (ip, mac) in enumerate(sorted(builders.HOSTS.items())):
        if ip == "10.10.50.84":
            continue
        t_req = t + i * 120 * MILLI
        frames.append(builders.arp_frame(t_req, 1, "10.10.50.84", ip))
        frames.append(builders.arp_frame(t_req + 2 * MILLI + 511, 2, ip, "10.10.50.84"))

    # the ping experiment
    t += 2 * SECOND
    for frame in ping_frames():
        frames.append(builders.frame(frame.ts_ns + 2 * SECOND, frame.data))

    # DNS lookups from every host
    t += 6 * SECOND
    names = [b"intranet", b"portal", b"mail", b"files", b"printer"]
    for i in range(10):
        client = f"10.10.50.8{1 + i % 5}"
        q = bytes([0, i]) + b"\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00" + names[i % 5] + b"\x00"
        r = bytes([0, i]) + b"\x81\x80\x00\x01\x00\x01\x00\x00\x00\x00" + names[i % 5] + b"\x00"
        t_query = t + i * 300 * MILLI + rng.randrange(MILLI)
        frames.append(builders.udp_frame(t_query, client, "10.10.50.84", 40000 + i, 53, q))
        frames.append(builders.udp_frame(t_query + 800_000 + rng.randrange(100), "10.10.50.84", client, 53, 40000 + i, r))

    # three HTTP sessions: canonical port, alternate port, arbitrary port
    t += 5 * SECOND
    frames.extend(_http_session(t, "10.10.50.81", "10.10.50.85", 49200, 80, "/index.html", b"<html>intranet</html>"))
    frames.extend(_http_session(t + SECOND, "10.10.50.82", "10.10.50.85", 49300, 8080, "/status", b"ok"))
    frames.extend(_http_session(t + 2 * SECOND, "10.10.50.83", "10.10.50.84", 49400, 12345, "/odd-port", b"odd"))

    # one POST and one reason-less response
    t += 4 * SECOND
    frames.append(builders.tcp_frame(t, "10.10.50.81", "10.10.50.85", 49500, 80, flags=0x018, seq=1,
                                     payload=b"POST /submit HTTP/1.1\r\nHost: intranet\r\nContent-Length: 4\r\n\r\nna=1"))
    frames.append(builders.tcp_frame(t + 2 * MILLI, "10.10.50.85", "10.10.50.81", 80, 49500, flags=0x018, seq=1,
                                     payload=b"HTTP/1.1 204\r\n\r\n"))

    # background UDP chatter
    t += SECOND
    hosts = sorted(builders.HOSTS)
    for i in range(80):
        src, dst = rng.sample(hosts, 2)
        size = rng.randrange(0, 64)
        frames.append(builders.udp_frame(
            t + i * 100 * MILLI + rng.randrange(MILLI),
            src, dst, rng.randrange(1024, 65536), rng.choice([123, 137, 1900, 5353, rng.randrange(1024, 65536)]),
            bytes(rng.randrange(256) for _ in range(size)),
        ))

    # background TCP keepalive/ack traffic
    for i in range(30):
        src, dst = rng.sample(hosts, 2)
        frames.append(builders.tcp_frame(
            t + i * 250 * MILLI + rng.randrange(MILLI),
            src, dst, rng.randrange(1024, 65536), rng.choice([22, 443, 3389]),
            flags=rng.choice([0x010, 0x018, 0x002, 0x012]),
            payload=bytes(rng.randrange(256) for _ in range(rng.randrange(0, 32))),
            seq=rng.randrange(2**32), ack=rng.randrange(2**32),
        ))

    # assorted ICMP control traffic
    t += 10 * SECOND
    unreachable = builders.ipv4("10.10.50.81", "10.10.50.84", 17, builders.udp("10.10.50.81", "10.10.50.84", 5000, 5001, b""))[:28]
    frames.append(builders.frame(t, builders.eth(builders.MAC_D, builders.MAC_B, 0x0800,
                  builders.ipv4("10.10.50.82", "10.10.50.84", 1, builders.icmp_other(3, 1, payload=unreachable)))))
    frames.append(builders.frame(t + 100 * MILLI, builders.eth(builders.MAC_D, builders.MAC_C, 0x0800,
                  builders.ipv4("10.10.50.83", "10.10.50.84", 1, builders.icmp_other(3, 3, payload=unreachable)))))
    frames.append(builders.frame(t + 200 * MILLI, builders.eth(builders.MAC_D, builders.MAC_A, 0x0800,
                  builders.ipv4("10.10.50.81", "10.10.50.84", 1, builders.icmp_other(11, 0, payload=unreachable)))))
    frames.append(builders.frame(t + 300 * MILLI, builders.eth(builders.MAC_D, builders.MAC_B, 0x0800,
                  builders.ipv4("10.10.50.82", "10.10.50.84", 1, builders.icmp_other(5, 1, rest=b"\x0a\x0a\x32\x01")))))
    frames.append(builders.frame(t + 400 * MILLI, builders.eth(builders.MAC_D, builders.MAC_C, 0x0800,
                  builders.ipv4("10.10.50.83", "10.10.50.84", 1, builders.icmp_other(13, 0, payload=bytes(12))))))

    # malformed and unusual frames
    frames.extend(edge_case_frames(t + SECOND))

    frames.sort(key=lambda f: f.ts_ns)
    return frames


def _write_reference_csv(pcap_path: Path, csv_path: Path) -> None:
    _, reader = read_pcap_file(str(pcap_path))
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["no", "source", "destination", "protocol", "length"])
        for i, frame in enumerate(reader, 1):
            source, destination, protocol, length = oracles.reference_columns(frame.data, frame.orig_len)
            writer.writerow([i, source, destination, protocol, length])


def _write_golden_cli(pcap_path: Path, txt_path: Path) -> None:
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        code = cli.main(["read", "-r", str(pcap_path)])
    assert code == 0, f"cli failed on {pcap_path}"
    txt_path.write_text(buffer.getvalue(), encoding="utf-8")


def main() -> None:
    testdata = REPO / "testdata"
    golden = REPO / "tests" / "golden"
    testdata.mkdir(exist_ok=True)
    golden.mkdir(parents=True, exist_ok=True)

    write_pcap_file(str(testdata / "ping.pcap"), ping_frames(), byte_order="little")
    mixed = mixed_frames()
    assert len(mixed) >= 200, f"corpus too small: {len(mixed)}"
    write_pcap_file(str(testdata / "mixed.pcap"), mixed, byte_order="little")

    _write_reference_csv(testdata / "mixed.pcap", golden / "mixed_reference.csv")
    _write_golden_cli(testdata / "ping.pcap", golden / "ping.txt")
    _write_golden_cli(testdata / "mixed.pcap", golden / "mixed.txt")

    print(f"ping.pcap: {len(ping_frames())} frames")
    print(f"mixed.pcap: {len(mixed)} frames")


if __name__ == "__main__":
    main()
