"""Analysis tests: stats, conversations, echo pairing, detectors vs brute-force oracles."""

import csv
import random
from collections import Counter, defaultdict

import pytest

import builders
import oracles
from sniff import analysis
from sniff.decode import dissect
from sniff.pcapio import read_pcap_file

SECOND = builders.SECOND
MILLI = builders.MILLI
BASE = builders.BASE_TS


def _dissect_all(frames):
    if not frames:
        return []
    t0 = frames[0].ts_ns
    return [dissect(frame, i + 1, t0) for i, frame in enumerate(frames)]


@pytest.fixture(scope="module")
def corpus_records():
    _, reader = read_pcap_file("testdata/mixed.pcap")
    return _dissect_all(list(reader))


@pytest.fixture(scope="module")
def ping_records():
    _, reader = read_pcap_file("testdata/ping.pcap")
    return _dissect_all(list(reader))


class TestStats:
    def test_empty(self):
        stats = analysis.accumulate_stats([])
        assert stats.total_packets == 0
        assert stats.total_bytes == 0
        assert stats.per_protocol == {}
        assert stats.duration_ns == 0

    def test_simple_counting(self):
        frames = [
            builders.udp_frame(BASE, "10.10.50.81", "10.10.50.82", 1, 2),
            builders.udp_frame(BASE + 1, "10.10.50.81", "10.10.50.82", 3, 4),
            builders.udp_frame(BASE + 2, "10.10.50.81", "10.10.50.82", 5, 6),
            builders.arp_frame(BASE + 3, 1, "10.10.50.84", "10.10.50.85"),
            builders.arp_frame(BASE + 4, 2, "10.10.50.85", "10.10.50.84"),
        ]
        stats = analysis.accumulate_stats(_dissect_all(frames))
        assert stats.per_protocol["UDP"].packets == 3
        assert stats.per_protocol["ARP"].packets == 2
        assert stats.total_packets == 5

    def test_corpus_matches_reference_counts(self, corpus_records):
        with open("tests/golden/mixed_reference.csv") as handle:
            reference = Counter(row["protocol"] for row in csv.DictReader(handle))
        stats = analysis.accumulate_stats(corpus_records)
        assert {proto: count.packets for proto, count in stats.per_protocol.items()} == dict(reference)

    def test_conservation(self, corpus_records):
        stats = analysis.accumulate_stats(corpus_records)
        assert sum(c.packets for c in stats.per_protocol.values()) == stats.total_packets
        assert sum(c.bytes for c in stats.per_protocol.values()) == stats.total_bytes
        assert stats.total_bytes == sum(r.frame.orig_len for r in corpus_records)


class TestConversations:
    def test_single_packet(self):
        records = _dissect_all([builders.udp_frame(BASE, "10.10.50.81", "10.10.50.82", 1000, 53)])
        convs = analysis.build_conversations(records)
        assert len(convs) == 1
        conv = convs[0]
        assert (conv.packets_ab + conv.packets_ba, conv.packets_ab * conv.packets_ba) == (1, 0)

    def test_request_reply_same_conversation(self):
        records = _dissect_all([
            builders.udp_frame(BASE, "10.10.50.81", "10.10.50.82", 1000, 53),
            builders.udp_frame(BASE + 1, "10.10.50.82", "10.10.50.81", 53, 1000),
        ])
        convs = analysis.build_conversations(records)
        assert len(convs) == 1
        assert convs[0].packets_ab == 1 and convs[0].packets_ba == 1

    def test_icmp_keyed_on_port_zero(self, ping_records):
        convs = analysis.build_conversations(ping_records)
        assert len(convs) == 1
        conv = convs[0]
        assert conv.protocol == "ICMP"
        assert (conv.port_a, conv.port_b) == (0, 0)
        assert conv.packets_ab == 4 and conv.packets_ba == 4

    def test_corpus_matches_brute_force_grouping(self, corpus_records):
        expected = defaultdict(lambda: [0, 0])  # key -> [bytes_ab, bytes_ba]
        for record in corpus_records:
            ip = record.layer("ipv4")
            if ip is None:
                continue
            tcp, udp, icmp = record.layer("tcp"), record.layer("udp"), record.layer("icmp")
            if tcp is not None:
                src, dst, proto = (ip.src, tcp.src_port), (ip.dst, tcp.dst_port), "TCP"
            elif udp is not None:
                src, dst, proto = (ip.src, udp.src_port), (ip.dst, udp.dst_port), "UDP"
            elif icmp is not None:
                src, dst, proto = (ip.src, 0), (ip.dst, 0), "ICMP"
            else:
                continue
            key = (min(src, dst), max(src, dst), proto)
            slot = 0 if src <= dst else 1
            expected[key][slot] += record.frame.orig_len
        got = {
            ((c.addr_a, c.port_a), (c.addr_b, c.port_b), c.protocol): [c.bytes_ab, c.bytes_ba]
            for c in analysis.build_conversations(corpus_records)
        }
        assert got == dict(expected)

    def test_bytes_conservation(self, corpus_records):
        convs = analysis.build_conversations(corpus_records)
        tcp_udp_bytes = sum(c.total_bytes for c in convs if c.protocol in ("TCP", "UDP"))
        expected = sum(
            r.frame.orig_len
            for r in corpus_records
            if r.layer("ipv4") is not None and (r.layer("tcp") or r.layer("udp"))
        )
        assert tcp_udp_bytes == expected


class TestEchoPairing:
    def test_request_reply_rtt(self):
        records = _dissect_all([
            builders.icmp_frame(BASE, "10.10.50.84", "10.10.50.85", 8, 1, 1),
            builders.icmp_frame(BASE + 1_500_000, "10.10.50.85", "10.10.50.84", 0, 1, 1),
        ])
        pairings = analysis.pair_echoes(records)
        assert len(pairings) == 1
        pairing = pairings[0]
        assert pairing.peer == "10.10.50.85"
        assert pairing.reply_index == 2
        assert pairing.rtt_ns == 1_500_000

    def test_unanswered_request(self):
        records = _dissect_all([builders.icmp_frame(BASE, "10.10.50.84", "10.10.50.85", 8, 1, 9)])
        pairings = analysis.pair_echoes(records)
        assert len(pairings) == 1
        assert pairings[0].reply_index is None
        assert pairings[0].rtt_ns is None

    def test_ping_fixture_four_pairs(self, ping_records):
        pairings = analysis.pair_echoes(ping_records)
        assert len(pairings) == 4
        assert all(p.reply_index is not None for p in pairings)
        assert all(p.rtt_ns is not None and p.rtt_ns >= 0 for p in pairings)
        assert {p.peer for p in pairings} == {"10.10.50.85"}
        assert [p.seq for p in pairings] == [1, 2, 3, 4]

    def test_shuffled_interleavings_match_oracle(self):
        rng = random.Random(0xEC40)
        for _ in range(60):
            k = rng.randrange(1, 9)
            events = []
            for i in range(k):
                ident = rng.randrange(1, 3)
                seq = rng.randrange(1, 4)
                t_request = BASE + rng.randrange(0, 5) * SECOND
                events.append(("req", t_request, ident, seq))
                if rng.random() < 0.7:
                    events.append(("rep", t_request + rng.randrange(0, 2 * SECOND), ident, seq))
            rng.shuffle(events)
            frames = []
            for kind, ts, ident, seq in events:
                if kind == "req":
                    frames.append(builders.icmp_frame(ts, "10.10.50.84", "10.10.50.85", 8, ident, seq))
                else:
                    frames.append(builders.icmp_frame(ts, "10.10.50.85", "10.10.50.84", 0, ident, seq))
            records = _dissect_all(frames)

            requests = []
            replies = []
            for record in records:
                icmp = record.layer("icmp")
                ip = record.layer("ipv4")
                if icmp.icmp_type == 8:
                    requests.append((record.index, record.frame.ts_ns, ip.dst, icmp.ident, icmp.seq))
                else:
                    replies.append((record.index, record.frame.ts_ns, ip.src, icmp.ident, icmp.seq))
            expected = oracles.brute_echo_pairs(requests, replies)
            got = [(p.request_index, p.reply_index) for p in analysis.pair_echoes(records)]
            assert got == expected
            for pairing in analysis.pair_echoes(records):
                if pairing.rtt_ns is not None:
                    assert pairing.rtt_ns >= 0


def _scan_trace(rng, sources, seconds=10):
    """Abstract probe events: (ts, src, dst, kind, dport)."""
    events = []
    for _ in range(rng.randrange(40, 160)):
        src = rng.choice(sources)
        dst = rng.choice(sources)
        kind = rng.choice(["udp", "tcp-syn", "tcp-ack"])
        events.append((
            BASE + rng.randrange(seconds * SECOND),
            src,
            dst,
            kind,
            rng.randrange(1, 200),
        ))
    events.sort()
    return events


def _scan_frames(events):
    frames = []
    for ts, src, dst, kind, dport in events:
        if kind == "udp":
            frames.append(builders.udp_frame(ts, src, dst, 40000, dport))
        elif kind == "tcp-syn":
            frames.append(builders.tcp_frame(ts, src, dst, 40000, dport, flags=0x002))
        else:
            frames.append(builders.tcp_frame(ts, src, dst, 40000, dport, flags=0x010))
    return frames


class TestPortScan:
    def test_empty(self):
        assert analysis.detect_port_scan([]) == []

    def test_25_ports_in_2_seconds(self):
        frames = [
            builders.tcp_frame(BASE + i * 80 * MILLI, "10.10.50.81", "10.10.50.85", 40000, 100 + i, flags=0x002)
            for i in range(25)
        ]
        alerts = analysis.detect_port_scan(_dissect_all(frames), window_secs=5, distinct_port_threshold=20)
        assert len(alerts) == 1
        alert = alerts[0]
        assert alert.kind == "PortScan"
        assert alert.subject == "10.10.50.81"
        assert alert.evidence["distinct_ports"] == list(range(100, 125))
        assert alert.severity == "warning"

    def test_boundary_threshold(self):
        frames = [
            builders.udp_frame(BASE + i * 10 * MILLI, "10.10.50.82", "10.10.50.85", 40000, 300 + i)
            for i in range(25)
        ]
        records = _dissect_all(frames)
        assert analysis.detect_port_scan(records, 5, 26) == []
        assert len(analysis.detect_port_scan(records, 5, 25)) == 1

    def test_acks_are_not_probes(self):
        frames = [
            builders.tcp_frame(BASE + i * 10 * MILLI, "10.10.50.83", "10.10.50.85", 40000, 500 + i, flags=0x010)
            for i in range(30)
        ]
        assert analysis.detect_port_scan(_dissect_all(frames), 5, 10) == []

    def test_randomized_traces_match_oracle(self):
        rng = random.Random(0x5CA9)
        sources = [f"10.10.50.{n}" for n in range(81, 86)]
        for _ in range(25):
            events = _scan_trace(rng, sources)
            threshold = rng.randrange(3, 12)
            window = rng.choice([1, 2, 5])
            records = _dissect_all(_scan_frames(events))
            alerts = analysis.detect_port_scan(records, window, threshold)

            probes = defaultdict(list)
            for ts, src, dst, kind, dport in events:
                if kind in ("udp", "tcp-syn"):
                    probes[src].append((ts, dport))
            expected = oracles.brute_port_scan(probes, window * SECOND, threshold)
            got = defaultdict(list)
            for alert in alerts:
                got[alert.subject].append((alert.window_start_ns, alert.window_end_ns))
            assert dict(got) == expected


class TestFlood:
    def test_empty(self):
        assert analysis.detect_flood([]) == []

    def test_thousand_packets_one_second(self):
        frames = [
            builders.udp_frame(BASE + i * MILLI, f"10.10.50.8{1 + i % 4}", "10.10.50.85", 40000 + i % 100, 80)
            for i in range(1000)
        ]
        alerts = analysis.detect_flood(_dissect_all(frames), window_secs=1, pps_threshold=500)
        assert len(alerts) == 1
        assert alerts[0].kind == "FloodDos"
        assert alerts[0].subject == "10.10.50.85"
        assert alerts[0].severity == "critical"

    def test_spread_below_threshold(self):
        frames = []
        for host in range(100):
            dst = f"10.10.60.{host}"
            for i in range(4):
                frames.append(builders.udp_frame(BASE + (host * 4 + i) * MILLI, "10.10.50.81", dst, 1000, 2000))
        assert analysis.detect_flood(_dissect_all(frames), 1, 500) == []

    def test_randomized_traces_match_oracle(self):
        rng = random.Random(0xF100D)
        hosts = [f"10.10.50.{n}" for n in range(81, 86)]
        for _ in range(25):
            arrivals = []
            for _ in range(rng.randrange(50, 300)):
                arrivals.append((BASE + rng.randrange(4 * SECOND), rng.choice(hosts), rng.choice(hosts)))
            arrivals.sort()
            threshold = rng.randrange(5, 30)
            window = 1
            frames = [builders.udp_frame(ts, src, dst, 1000, 2000) for ts, src, dst in arrivals]
            alerts = analysis.detect_flood(_dissect_all(frames), window, threshold)

            by_dst = defaultdict(list)
            for ts, _, dst in arrivals:
                by_dst[dst].append(ts)
            expected = oracles.brute_flood(by_dst, window * SECOND, threshold * window)
            got = defaultdict(list)
            for alert in alerts:
                got[alert.subject].append((alert.window_start_ns, alert.window_end_ns))
            assert dict(got) == expected


class TestHighActivity:
    def test_constant_rate_never_alerts(self):
        frames = [
            builders.udp_frame(BASE + i * 200 * MILLI, "10.10.50.81", "10.10.50.82", 1000, 2000)
            for i in range(100)
        ]
        assert analysis.detect_high_activity(_dissect_all(frames), 1.0, 5, 3.0) == []

    def test_silent_then_burst(self):
        frames = [builders.udp_frame(BASE, "10.10.50.82", "10.10.50.81", 1, 2)]  # t0 anchor
        for i in range(500):
            frames.append(builders.udp_frame(
                BASE + 10 * SECOND + (i * 2 * MILLI), "10.10.50.81", "10.10.50.85", 3000 + i, 80,
            ))
        alerts = analysis.detect_high_activity(_dissect_all(frames), 1.0, 10, 3.0)
        mine = [a for a in alerts if a.subject == "10.10.50.81"]
        assert len(mine) == 1
        alert = mine[0]
        # baseline was 10 silent windows: mean 0, stddev 0
        assert alert.evidence["baseline_mean"] == 0.0
        assert alert.evidence["baseline_stddev"] == 0.0
        assert alert.evidence["window_packets"] == 500
        assert alert.window_start_ns == BASE + 10 * SECOND

    def test_empty(self):
        assert analysis.detect_high_activity([]) == []

    def test_floor_suppresses_small_jumps(self):
        # 0-packet baseline then a 10-packet window: above mean+3*sigma but not above the floor
        frames = [builders.udp_frame(BASE, "10.10.50.82", "10.10.50.81", 1, 2)]
        for i in range(10):
            frames.append(builders.udp_frame(BASE + 10 * SECOND + i * MILLI, "10.10.50.81", "10.10.50.85", 3000, 80))
        assert analysis.detect_high_activity(_dissect_all(frames), 1.0, 10, 3.0) == []

    def test_randomized_traces_match_oracle(self):
        rng = random.Random(0xAC71)
        hosts = [f"10.10.50.{n}" for n in range(81, 84)]
        for _ in range(25):
            buckets = 16
            counts = defaultdict(dict)
            frames = [builders.udp_frame(BASE, "10.10.50.90", "10.10.50.91", 1, 2)]  # bucket-0 anchor
            for src in hosts:
                for bucket in range(buckets):
                    n = rng.choice([0, 0, 1, 2, 3, 5, 20, 40])
                    if n:
                        counts[src][bucket] = n
                    for i in range(n):
                        frames.append(builders.udp_frame(
                            BASE + bucket * SECOND + (i + 1) * MILLI, src, "10.10.50.85", 1000 + i, 80,
                        ))
            baseline = rng.choice([3, 5])
            records = _dissect_all(sorted(frames, key=lambda f: f.ts_ns))
            alerts = analysis.detect_high_activity(records, 1.0, baseline, 3.0)

            counts["10.10.50.90"] = {0: 1}
            expected = oracles.brute_high_activity(dict(counts), buckets - 1, baseline, 3.0, 10)
            got = defaultdict(list)
            for alert in alerts:
                first = (alert.window_start_ns - BASE) // SECOND
                last = (alert.window_end_ns - BASE) // SECOND - 1
                got[alert.subject].extend(range(first, last + 1))
            assert dict(got) == expected


class TestArpDuplicates:
    def test_two_claimants(self):
        frames = [
            builders.arp_frame(BASE, 2, "10.10.50.85", "10.10.50.84", sender_mac=builders.MAC_E),
            builders.arp_frame(BASE + SECOND, 2, "10.10.50.85", "10.10.50.84", sender_mac="02:66:6f:78:00:01"),
        ]
        alerts = analysis.detect_arp_duplicates(_dissect_all(frames))
        assert len(alerts) == 1
        alert = alerts[0]
        assert alert.kind == "ArpDuplicate"
        assert alert.subject == "10.10.50.85"
        assert alert.evidence["macs"] == sorted([builders.MAC_E, "02:66:6f:78:00:01"])

    def test_single_claimant(self):
        frames = [
            builders.arp_frame(BASE + i, 2, "10.10.50.85", "10.10.50.84") for i in range(5)
        ]
        assert analysis.detect_arp_duplicates(_dissect_all(frames)) == []

    def test_requests_do_not_claim(self):
        frames = [
            builders.arp_frame(BASE, 1, "10.10.50.85", "10.10.50.84", sender_mac=builders.MAC_E),
            builders.arp_frame(BASE + 1, 1, "10.10.50.85", "10.10.50.84", sender_mac="02:66:6f:78:00:01"),
        ]
        assert analysis.detect_arp_duplicates(_dissect_all(frames)) == []

    def test_randomized_matches_map_oracle(self):
        rng = random.Random(0xA49)
        for _ in range(25):
            frames = []
            claims = defaultdict(set)
            for _ in range(rng.randrange(5, 40)):
                ip = f"10.10.50.{rng.randrange(81, 86)}"
                mac = rng.choice([builders.mac_for(ip), "02:66:6f:78:00:01"])
                claims[ip].add(mac)
                frames.append(builders.arp_frame(BASE + len(frames) * MILLI, 2, ip, "10.10.50.84", sender_mac=mac))
            expected = sorted(ip for ip, macs in claims.items() if len(macs) >= 2)
            alerts = analysis.detect_arp_duplicates(_dissect_all(frames))
            assert sorted(a.subject for a in alerts) == expected


class TestReport:
    def _meta(self):
        return {"id": "test", "source": "file:x.pcap", "state": "stopped", "seen": 0, "matched": 0, "dropped": 0}

    def test_empty_report(self):
        report = analysis.generate_report(self._meta(), analysis.accumulate_stats([]), [], [], [],
                                          generated_at="2016-05-10T09:00:00Z")
        text = analysis.render_report_text(report)
        assert "Total" in text
        doc = analysis.report_to_doc(report)
        assert doc["stats"]["total_packets"] == 0
        assert doc["conversations"] == []
        assert doc["alerts"] == []

    def test_rendering_deterministic(self, corpus_records):
        def build():
            stats = analysis.accumulate_stats(corpus_records)
            report = analysis.generate_report(
                self._meta(),
                stats,
                analysis.build_conversations(corpus_records),
                analysis.pair_echoes(corpus_records),
                analysis.run_all_detectors(corpus_records),
                generated_at="2016-05-10T09:00:00Z",
            )
            return analysis.render_report_text(report), analysis.report_to_doc(report)

        first_text, first_doc = build()
        second_text, second_doc = build()
        assert first_text == second_text
        assert first_doc == second_doc

    def test_totals_self_consistent(self, corpus_records):
        stats = analysis.accumulate_stats(corpus_records)
        report = analysis.generate_report(
            self._meta(), stats,
            analysis.build_conversations(corpus_records),
            analysis.pair_echoes(corpus_records),
            [],
        )
        recomputed = analysis.accumulate_stats(corpus_records)
        assert report.stats.total_packets == recomputed.total_packets
        assert report.stats.total_bytes == recomputed.total_bytes

    def test_conversations_ranked_by_bytes(self, corpus_records):
        report = analysis.generate_report(
            self._meta(), analysis.accumulate_stats(corpus_records),
            analysis.build_conversations(corpus_records), [], [],
        )
        totals = [c.total_bytes for c in report.conversations]
        assert totals == sorted(totals, reverse=True)
        assert len(report.conversations) <= 10

    def test_alert_ordering(self):
        alerts = [
            analysis.Alert("PortScan", "b", 10, 20, {"x": 1}, "warning"),
            analysis.Alert("FloodDos", "a", 30, 40, {"x": 1}, "critical"),
            analysis.Alert("PortScan", "a", 5, 9, {"x": 1}, "warning"),
        ]
        ordered = analysis.sort_alerts(alerts)
        assert [a.severity for a in ordered] == ["critical", "warning", "warning"]
        assert ordered[1].window_start_ns == 5

    def test_detectors_on_quiet_corpus(self, corpus_records):
        # the mixed corpus is normal traffic; default thresholds stay silent
        assert analysis.run_all_detectors(corpus_records) == []
