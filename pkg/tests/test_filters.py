"""Filter language tests: grammar, semantics vs a brute-force oracle, properties."""

import ipaddress
import random

import pytest

import builders
import oracles
from sniff.decode import dissect
from sniff.filters import (
    And,
    Compare,
    FilterTypeError,
    MatchAll,
    Not,
    Or,
    ParseError,
    compile_filter,
    eval_filter,
    filter_mode,
    print_filter,
    tokenize,
)


def _records():
    frames = [
        builders.arp_frame(builders.BASE_TS, 1, "10.10.50.84", "10.10.50.85"),
        builders.arp_frame(builders.BASE_TS + 1, 2, "10.10.50.85", "10.10.50.84"),
        builders.icmp_frame(builders.BASE_TS + 2, "10.10.50.84", "10.10.50.85", 8, 1, 1),
        builders.icmp_frame(builders.BASE_TS + 3, "10.10.50.85", "10.10.50.84", 0, 1, 1),
        builders.udp_frame(builders.BASE_TS + 4, "10.10.50.81", "10.10.50.82", 5353, 53),
        builders.udp_frame(builders.BASE_TS + 5, "10.10.50.82", "10.10.50.81", 53, 5353),
        builders.tcp_frame(builders.BASE_TS + 6, "10.10.50.83", "10.10.50.85", 49152, 80, flags=0x002),
        builders.tcp_frame(
            builders.BASE_TS + 7, "10.10.50.83", "10.10.50.85", 49152, 80,
            flags=0x018, payload=b"GET / HTTP/1.1\r\n\r\n",
        ),
        builders.frame(builders.BASE_TS + 8, b"\x00" * 9),  # undecodable
        builders.frame(
            builders.BASE_TS + 9,
            builders.eth(builders.MAC_A, builders.MAC_B, 0x88B5, b"experimental"),
        ),
    ]
    return [dissect(f, i + 1, builders.BASE_TS) for i, f in enumerate(frames)]


RECORDS = _records()


class TestCompile:
    def test_empty_is_match_all(self):
        assert compile_filter("") == MatchAll()
        assert compile_filter("   \t ") == MatchAll()

    def test_host_of_interest(self):
        expr = compile_filter("ip.addr == 10.10.50.85")
        assert expr == Compare("ip.addr", "==", ipaddress.IPv4Network("10.10.50.85/32"))

    def test_precedence(self):
        expr = compile_filter("proto == udp and not (port == 53)")
        assert expr == And(
            Compare("proto", "==", "udp"),
            Not(Compare("port", "==", 53)),
        )

    def test_not_binds_tighter_than_and(self):
        expr = compile_filter("not proto == udp and proto == tcp")
        assert expr == And(Not(Compare("proto", "==", "udp")), Compare("proto", "==", "tcp"))

    def test_or_lowest(self):
        expr = compile_filter("proto == udp or proto == tcp and port == 80")
        assert isinstance(expr, Or)
        assert isinstance(expr.right, And)

    def test_case_insensitive(self):
        assert compile_filter("PROTO == UDP AND NOT MAC.SRC == AA:BB:CC:DD:EE:FF") == compile_filter(
            "proto == udp and not mac.src == aa:bb:cc:dd:ee:ff"
        )

    def test_cidr_value(self):
        expr = compile_filter("ip.src == 10.10.50.0/24")
        assert expr.value == ipaddress.IPv4Network("10.10.50.0/24")

    def test_parse_error_offset(self):
        with pytest.raises(ParseError) as excinfo:
            compile_filter("ip.src ==")
        assert excinfo.value.offset == 9

    def test_unknown_field_offset(self):
        with pytest.raises(ParseError) as excinfo:
            compile_filter("proto == udp and bogus == 3")
        assert excinfo.value.offset == 17

    def test_port_out_of_range(self):
        with pytest.raises(FilterTypeError) as excinfo:
            compile_filter("port == 70000")
        assert excinfo.value.offset == 8

    def test_bad_ip_value(self):
        with pytest.raises(FilterTypeError):
            compile_filter("ip.src == 10.10.50")

    def test_bad_proto_value(self):
        with pytest.raises(FilterTypeError):
            compile_filter("proto == quic")

    def test_trailing_tokens(self):
        with pytest.raises(ParseError):
            compile_filter("proto == udp proto == tcp")

    def test_unbalanced_paren(self):
        with pytest.raises(ParseError):
            compile_filter("(proto == udp")

    def test_token_offsets_increase(self):
        source, tokens = tokenize("ip.src == 10.10.50.85 and port == 53")
        offsets = list(source.token_offsets)
        assert offsets == sorted(offsets)
        assert len(set(offsets)) == len(offsets)
        assert len(tokens) == len(offsets)


class TestEval:
    def test_match_all(self):
        for record in RECORDS:
            assert eval_filter(MatchAll(), record)

    def test_broadcast_mac(self):
        expr = compile_filter("mac.addr == ff:ff:ff:ff:ff:ff")
        matches = [r.index for r in RECORDS if eval_filter(expr, r)]
        assert matches == [1]  # the broadcast ARP request

    def test_ip_addr_either_direction(self):
        expr = compile_filter("ip.addr == 10.10.50.84")
        matches = [r.index for r in RECORDS if eval_filter(expr, r)]
        assert matches == [3, 4]  # ARP has no IPv4 layer

    def test_proto_matches_any_layer(self):
        expr = compile_filter("proto == ipv4")
        matches = [r.index for r in RECORDS if eval_filter(expr, r)]
        assert matches == [3, 4, 5, 6, 7, 8]

    def test_http_implies_tcp(self):
        http = compile_filter("proto == http")
        tcp = compile_filter("proto == tcp")
        for record in RECORDS:
            if eval_filter(http, record):
                assert eval_filter(tcp, record)

    def test_absent_layer_semantics(self):
        eq = compile_filter("ip.src == 10.10.50.84")
        ne = compile_filter("ip.src != 10.10.50.84")
        arp_record = RECORDS[0]
        assert arp_record.layer("ipv4") is None
        assert not eval_filter(eq, arp_record)
        assert not eval_filter(ne, arp_record)
        assert eval_filter(Not(eq), arp_record)

    def test_cidr_subnet(self):
        expr = compile_filter("ip.addr == 10.10.50.0/24")
        for record in RECORDS:
            expected = record.layer("ipv4") is not None
            assert eval_filter(expr, record) == expected

    def test_port_src_dst(self):
        assert [r.index for r in RECORDS if eval_filter(compile_filter("port.dst == 53"), r)] == [5]
        assert [r.index for r in RECORDS if eval_filter(compile_filter("port.src == 53"), r)] == [6]
        assert [r.index for r in RECORDS if eval_filter(compile_filter("port == 53"), r)] == [5, 6]


class TestMode:
    def test_ip_based(self):
        assert filter_mode(compile_filter("ip.src == 10.10.50.85")) == "ip-based"

    def test_mac_based(self):
        assert filter_mode(compile_filter("mac.dst == 00:11:22:33:44:55")) == "mac-based"

    def test_arp_based(self):
        assert filter_mode(compile_filter("proto == arp")) == "arp-based"

    def test_match_all_none(self):
        assert filter_mode(MatchAll()) == "none"

    def test_port_only_none(self):
        assert filter_mode(compile_filter("port == 80")) == "none"

    def test_mixed(self):
        assert filter_mode(compile_filter("ip.src == 10.10.50.85 and mac.src == aa:bb:cc:dd:ee:ff")) == "mixed"


_VALUE_POOL = {
    "ip": ["10.10.50.84", "10.10.50.85", "10.10.50.0/24", "192.168.1.1", "10.10.50.81"],
    "mac": [builders.MAC_A, builders.MAC_D, builders.BROADCAST, "02:00:00:00:00:99"],
    "proto": ["ethernet", "arp", "ipv4", "icmp", "udp", "tcp", "http"],
    "port": [53, 80, 5353, 49152, 9, 0],
}


def random_expr(rng: random.Random, depth: int = 0):
    roll = rng.random()
    if depth >= 3 or roll < 0.55:
        fieldname = rng.choice(
            ["ip.src", "ip.dst", "ip.addr", "mac.src", "mac.dst", "mac.addr", "proto", "port", "port.src", "port.dst"]
        )
        op = rng.choice(["==", "!="])
        if fieldname.startswith("ip."):
            value = ipaddress.IPv4Network(rng.choice(_VALUE_POOL["ip"]), strict=False)
        elif fieldname.startswith("mac."):
            value = rng.choice(_VALUE_POOL["mac"])
        elif fieldname == "proto":
            value = rng.choice(_VALUE_POOL["proto"])
        else:
            value = rng.choice(_VALUE_POOL["port"])
        return Compare(fieldname, op, value)
    if roll < 0.70:
        return Not(random_expr(rng, depth + 1))
    node = And if roll < 0.85 else Or
    return node(random_expr(rng, depth + 1), random_expr(rng, depth + 1))


class TestProperties:
    def test_matches_brute_force_oracle(self):
        rng = random.Random(0xF11E)
        for _ in range(150):
            expr = random_expr(rng)
            for record in RECORDS:
                assert eval_filter(expr, record) == oracles.brute_force_eval(expr, record), print_filter(expr)

    def test_de_morgan_and_double_negation(self):
        rng = random.Random(0xD0)
        for _ in range(100):
            a = random_expr(rng, depth=2)
            b = random_expr(rng, depth=2)
            for record in RECORDS:
                assert eval_filter(Not(Not(a)), record) == eval_filter(a, record)
                assert eval_filter(Not(And(a, b)), record) == eval_filter(Or(Not(a), Not(b)), record)
                assert eval_filter(Not(Or(a, b)), record) == eval_filter(And(Not(a), Not(b)), record)

    def test_match_all_identity(self):
        rng = random.Random(0x1D)
        for _ in range(50):
            expr = random_expr(rng, depth=2)
            for record in RECORDS:
                assert eval_filter(And(MatchAll(), expr), record) == eval_filter(expr, record)
                assert eval_filter(Or(MatchAll(), expr), record) is True

    def test_print_parse_round_trip(self):
        rng = random.Random(0x90)
        assert compile_filter(print_filter(MatchAll())) == MatchAll()
        for _ in range(300):
            expr = random_expr(rng)
            assert compile_filter(print_filter(expr)) == expr
