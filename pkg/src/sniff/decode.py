"""Wire-format decoding: raw captured bytes into structured protocol layers.

Each ``decode_*`` function consumes one header from the front of a byte
string and returns the parsed header plus the remaining payload.
``dissect`` chains them outer to inner and never raises: any decode
failure is recorded as a note on the resulting record.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from typing import ClassVar, Optional, Union

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERNET_II_MIN = 0x0600  # smaller values are 802.3 length fields

IPPROTO_ICMP = 1
IPPROTO_TCP = 6
IPPROTO_UDP = 17

BROADCAST_MAC = "ff:ff:ff:ff:ff:ff"

HTTP_METHODS = ("GET", "POST", "PUT", "DELETE", "HEAD", "OPTIONS", "PATCH", "TRACE", "CONNECT")
HTTP_HEADER_CAP = 64

TCP_FLAG_BITS = (
    ("ns", 0x100),
    ("cwr", 0x080),
    ("ece", 0x040),
    ("urg", 0x020),
    ("ack", 0x010),
    ("psh", 0x008),
    ("rst", 0x004),
    ("syn", 0x002),
    ("fin", 0x001),
)


class DecodeError(ValueError):
    """A layer could not be decoded from the given bytes."""


class TruncatedFrame(DecodeError):
    """Fewer bytes available than the header requires."""


class BadVersion(DecodeError):
    """IP version nibble is not 4."""


class BadIhl(DecodeError):
    """IPv4 header length below the 20-byte minimum."""


class BadLength(DecodeError):
    """UDP length field below the 8-byte header size."""


class BadDataOffset(DecodeError):
    """TCP data offset below the 20-byte minimum."""


class UnsupportedArp(DecodeError):
    """ARP hardware/protocol pair other than Ethernet/IPv4."""


class OddLength(DecodeError):
    """Checksum input must cover whole 16-bit words."""


def mac_str(raw: bytes) -> str:
    """Canonical lowercase colon-separated form, e.g. ``aa:bb:cc:dd:ee:ff``."""
    return ":".join(f"{b:02x}" for b in raw)


def mac_bytes(text: str) -> bytes:
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    return bytes(int(p, 16) for p in parts)


def ipv4_str(raw: bytes) -> str:
    return ".".join(str(b) for b in raw)


def ipv4_bytes(text: str) -> bytes:
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {text!r}")
    return bytes(int(p) for p in parts)


@dataclass(frozen=True)
class RawFrame:
    """One captured frame: nanosecond timestamp plus the bytes off the wire.

    ``data`` holds the captured bytes; ``orig_len`` is the frame's length on
    the wire, which exceeds ``len(data)`` when the capture was truncated.
    """

    ts_sec: int
    ts_nsec: int
    orig_len: int
    data: bytes

    def __post_init__(self):
        if not 0 <= self.ts_nsec < 1_000_000_000:
            raise ValueError(f"ts_nsec out of range: {self.ts_nsec}")
        if len(self.data) > self.orig_len:
            raise ValueError("captured more bytes than the original frame length")

    @property
    def cap_len(self) -> int:
        return len(self.data)

    @property
    def ts_ns(self) -> int:
        """Timestamp as integer nanoseconds since the Unix epoch."""
        return self.ts_sec * 1_000_000_000 + self.ts_nsec


@dataclass(frozen=True)
class EthernetHeader:
    name: ClassVar[str] = "ethernet"

    dst: str
    src: str
    ethertype: int

    def to_bytes(self) -> bytes:
        return mac_bytes(self.dst) + mac_bytes(self.src) + struct.pack("!H", self.ethertype)


@dataclass(frozen=True)
class Ipv4Header:
    name: ClassVar[str] = "ipv4"

    version: int
    ihl: int
    dscp_ecn: int
    total_len: int
    ident: int
    flags: int
    frag_offset: int
    ttl: int
    protocol: int
    checksum: int
    src: str
    dst: str
    options: bytes = b""
    checksum_valid: bool = True

    @property
    def df(self) -> bool:
        return bool(self.flags & 0b010)

    @property
    def mf(self) -> bool:
        return bool(self.flags & 0b001)

    @property
    def is_fragment(self) -> bool:
        return self.mf or self.frag_offset > 0

    def to_bytes(self) -> bytes:
        return struct.pack(
            "!BBHHHBBH4s4s",
            (self.version << 4) | self.ihl,
            self.dscp_ecn,
            self.total_len,
            self.ident,
            (self.flags << 13) | self.frag_offset,
            self.ttl,
            self.protocol,
            self.checksum,
            ipv4_bytes(self.src),
            ipv4_bytes(self.dst),
        ) + self.options


@dataclass(frozen=True)
class UdpHeader:
    name: ClassVar[str] = "udp"

    src_port: int
    dst_port: int
    length: int
    checksum: int  # 0 means no checksum was transmitted

    def to_bytes(self) -> bytes:
        return struct.pack("!HHHH", self.src_port, self.dst_port, self.length, self.checksum)


@dataclass(frozen=True)
class TcpHeader:
    name: ClassVar[str] = "tcp"

    src_port: int
    dst_port: int
    seq: int
    ack: int
    data_offset: int
    flags: int  # 9 bits, NS in bit 8 down to FIN in bit 0
    window: int
    checksum: int
    urgent_ptr: int
    options: bytes = b""

    def flag(self, flag_name: str) -> bool:
        return bool(self.flags & dict(TCP_FLAG_BITS)[flag_name])

    @property
    def syn(self) -> bool:
        return bool(self.flags & 0x002)

    @property
    def ack_flag(self) -> bool:
        return bool(self.flags & 0x010)

    @property
    def fin(self) -> bool:
        return bool(self.flags & 0x001)

    @property
    def rst(self) -> bool:
        return bool(self.flags & 0x004)

    def flag_names(self) -> list[str]:
        """Set flags in display order, most significant handshake bits first."""
        order = ("syn", "ack", "fin", "rst", "psh", "urg", "ece", "cwr", "ns")
        bits = dict(TCP_FLAG_BITS)
        return [n.upper() for n in order if self.flags & bits[n]]

    def to_bytes(self) -> bytes:
        return struct.pack(
            "!HHIIHHHH",
            self.src_port,
            self.dst_port,
            self.seq,
            self.ack,
            (self.data_offset << 12) | self.flags,
            self.window,
            self.checksum,
            self.urgent_ptr,
        ) + self.options


@dataclass(frozen=True)
class IcmpMessage:
    name: ClassVar[str] = "icmp"

    icmp_type: int
    icmp_code: int
    checksum: int
    ident: Optional[int] = None  # echo request/reply only
    seq: Optional[int] = None
    rest: bytes = b""  # raw rest-of-header for non-echo types
    payload: bytes = b""

    @property
    def is_echo(self) -> bool:
        return self.icmp_type in (0, 8)

    def to_bytes(self) -> bytes:
        head = struct.pack("!BBH", self.icmp_type, self.icmp_code, self.checksum)
        if self.is_echo:
            head += struct.pack("!HH", self.ident or 0, self.seq or 0)
        else:
            head += self.rest
        return head + self.payload


@dataclass(frozen=True)
class ArpPacket:
    name: ClassVar[str] = "arp"

    hw_type: int
    proto_type: int
    hw_len: int
    proto_len: int
    opcode: int  # 1 request, 2 reply
    sender_mac: str
    sender_ip: str
    target_mac: str
    target_ip: str

    def to_bytes(self) -> bytes:
        return (
            struct.pack("!HHBBH", self.hw_type, self.proto_type, self.hw_len, self.proto_len, self.opcode)
            + mac_bytes(self.sender_mac)
            + ipv4_bytes(self.sender_ip)
            + mac_bytes(self.target_mac)
            + ipv4_bytes(self.target_ip)
        )


@dataclass(frozen=True)
class HttpSummary:
    name: ClassVar[str] = "http"

    kind: str  # "request" or "response"
    version: str
    method: Optional[str] = None
    target: Optional[str] = None
    status_code: Optional[int] = None
    reason: Optional[str] = None
    headers: tuple = ()
    truncated: bool = False


Layer = Union[EthernetHeader, ArpPacket, Ipv4Header, IcmpMessage, UdpHeader, TcpHeader, HttpSummary]

_DISPLAY_NAMES = {
    "ethernet": "Ethernet",
    "arp": "ARP",
    "ipv4": "IPv4",
    "icmp": "ICMP",
    "udp": "UDP",
    "tcp": "TCP",
    "http": "HTTP",
}


def format_time(rel_ns: int) -> str:
    """Relative seconds with full nanosecond precision, e.g. ``1.000500123``."""
    return f"{rel_ns // 1_000_000_000}.{rel_ns % 1_000_000_000:09d}"


@dataclass(frozen=True)
class SummaryRow:
    """One display line per packet: the No/Time/Source/Destination/Protocol/Length/Info columns."""

    no: int
    time_ns: int  # relative to the first packet of the session
    source: str
    destination: str
    protocol: str
    length: int
    info: str

    @property
    def time(self) -> float:
        return self.time_ns / 1e9

    @property
    def time_text(self) -> str:
        return format_time(self.time_ns)


@dataclass(frozen=True)
class PacketRecord:
    """A fully dissected frame: ordered layer stack plus its summary row."""

    index: int
    frame: RawFrame
    layers: tuple
    decode_notes: tuple
    summary: SummaryRow

    def layer(self, layer_name: str):
        for layer in self.layers:
            if layer.name == layer_name:
                return layer
        return None


def _ones_complement_sum(data: bytes) -> int:
    """16-bit end-around-carry sum; a trailing odd byte is padded with zero."""
    total = 0
    for i in range(0, len(data) - 1, 2):
        total += (data[i] << 8) | data[i + 1]
    if len(data) % 2:
        total += data[-1] << 8
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def compute_ipv4_checksum(header: bytes) -> int:
    """Checksum over a header whose checksum field is zeroed."""
    if len(header) % 2:
        raise OddLength(f"checksum input must be even-length, got {len(header)}")
    return ~_ones_complement_sum(header) & 0xFFFF


def verify_ipv4_checksum(header: bytes) -> bool:
    """True iff the stored checksum makes the whole header sum to 0xFFFF."""
    if len(header) % 2:
        raise OddLength(f"checksum input must be even-length, got {len(header)}")
    return _ones_complement_sum(header) == 0xFFFF


def transport_checksum_ok(ip: Ipv4Header, segment: bytes) -> bool:
    """Validate a TCP/UDP checksum against the IPv4 pseudo-header."""
    pseudo = (
        ipv4_bytes(ip.src)
        + ipv4_bytes(ip.dst)
        + struct.pack("!BBH", 0, ip.protocol, len(segment))
    )
    return _ones_complement_sum(pseudo + segment) == 0xFFFF


def decode_ethernet(data: bytes) -> tuple[EthernetHeader, bytes]:
    if len(data) < 14:
        raise TruncatedFrame(f"ethernet header needs 14 bytes, got {len(data)}")
    header = EthernetHeader(
        dst=mac_str(data[0:6]),
        src=mac_str(data[6:12]),
        ethertype=struct.unpack_from("!H", data, 12)[0],
    )
    return header, data[14:]


def decode_ipv4(data: bytes) -> tuple[Ipv4Header, bytes]:
    if len(data) < 20:
        raise TruncatedFrame(f"ipv4 header needs 20 bytes, got {len(data)}")
    version = data[0] >> 4
    ihl = data[0] & 0x0F
    if version != 4:
        raise BadVersion(f"ip version {version}, expected 4")
    if ihl < 5:
        raise BadIhl(f"ihl {ihl} below minimum 5")
    header_len = ihl * 4
    if len(data) < header_len:
        raise TruncatedFrame(f"ipv4 header claims {header_len} bytes, got {len(data)}")
    (dscp_ecn, total_len, ident, flags_frag, ttl, protocol, checksum) = struct.unpack_from(
        "!BHHHBBH", data, 1
    )
    header = Ipv4Header(
        version=version,
        ihl=ihl,
        dscp_ecn=dscp_ecn,
        total_len=total_len,
        ident=ident,
        flags=flags_frag >> 13,
        frag_offset=flags_frag & 0x1FFF,
        ttl=ttl,
        protocol=protocol,
        checksum=checksum,
        src=ipv4_str(data[12:16]),
        dst=ipv4_str(data[16:20]),
        options=bytes(data[20:header_len]),
        checksum_valid=verify_ipv4_checksum(data[:header_len]),
    )
    payload_end = min(total_len, len(data))
    payload = data[header_len:payload_end] if payload_end > header_len else b""
    return header, payload


def decode_udp(data: bytes) -> tuple[UdpHeader, bytes]:
    if len(data) < 8:
        raise TruncatedFrame(f"udp header needs 8 bytes, got {len(data)}")
    src_port, dst_port, length, checksum = struct.unpack_from("!HHHH", data)
    if length < 8:
        raise BadLength(f"udp length field {length} below header size 8")
    return UdpHeader(src_port, dst_port, length, checksum), data[8 : length]


def decode_tcp(data: bytes) -> tuple[TcpHeader, bytes]:
    if len(data) < 20:
        raise TruncatedFrame(f"tcp header needs 20 bytes, got {len(data)}")
    src_port, dst_port, seq, ack, offset_flags, window, checksum, urgent = struct.unpack_from(
        "!HHIIHHHH", data
    )
    data_offset = offset_flags >> 12
    if data_offset < 5:
        raise BadDataOffset(f"tcp data offset {data_offset} below minimum 5")
    header_len = data_offset * 4
    if len(data) < header_len:
        raise TruncatedFrame(f"tcp header claims {header_len} bytes, got {len(data)}")
    header = TcpHeader(
        src_port=src_port,
        dst_port=dst_port,
        seq=seq,
        ack=ack,
        data_offset=data_offset,
        flags=offset_flags & 0x01FF,
        window=window,
        checksum=checksum,
        urgent_ptr=urgent,
        options=bytes(data[20:header_len]),
    )
    return header, data[header_len:]


def decode_icmp(data: bytes) -> IcmpMessage:
    if len(data) < 8:
        raise TruncatedFrame(f"icmp message needs 8 bytes, got {len(data)}")
    icmp_type, icmp_code, checksum = struct.unpack_from("!BBH", data)
    if icmp_type in (0, 8):
        ident, seq = struct.unpack_from("!HH", data, 4)
        return IcmpMessage(icmp_type, icmp_code, checksum, ident=ident, seq=seq, payload=bytes(data[8:]))
    return IcmpMessage(icmp_type, icmp_code, checksum, rest=bytes(data[4:8]), payload=bytes(data[8:]))


def decode_arp(data: bytes) -> ArpPacket:
    if len(data) < 8:
        raise TruncatedFrame(f"arp packet needs 8 bytes, got {len(data)}")
    hw_type, proto_type, hw_len, proto_len, opcode = struct.unpack_from("!HHBBH", data)
    if hw_type != 1 or proto_type != ETHERTYPE_IPV4 or hw_len != 6 or proto_len != 4:
        raise UnsupportedArp(
            f"only Ethernet/IPv4 ARP supported, got hw_type={hw_type} proto_type={proto_type:#06x}"
        )
    if len(data) < 28:
        raise TruncatedFrame(f"ethernet/ipv4 arp needs 28 bytes, got {len(data)}")
    return ArpPacket(
        hw_type=hw_type,
        proto_type=proto_type,
        hw_len=hw_len,
        proto_len=proto_len,
        opcode=opcode,
        sender_mac=mac_str(data[8:14]),
        sender_ip=ipv4_str(data[14:18]),
        target_mac=mac_str(data[18:24]),
        target_ip=ipv4_str(data[24:28]),
    )


_REQUEST_LINE = re.compile(
    rb"^(" + b"|".join(m.encode() for m in HTTP_METHODS) + rb") ([!-~]+) (HTTP/\d\.\d)$"
)
_STATUS_LINE = re.compile(rb"^(HTTP/\d\.\d) (\d{3})(?: ([ -~]*))?$")


def detect_http(payload: bytes, src_port: int = 0, dst_port: int = 0) -> Optional[HttpSummary]:
    """Recognize an HTTP message by its start line; ports never decide.

    Returns None unless the first line satisfies the request-line or
    status-line grammar. Header lines are collected up to the first empty
    line or a 64-line cap; a message whose headers never terminate is
    flagged truncated rather than rejected.
    """
    if not payload:
        return None
    lines = re.split(rb"\r\n|\n", payload)
    start = lines[0]
    match = _REQUEST_LINE.match(start)
    if match:
        kind = "request"
        method = match.group(1).decode("ascii")
        target = match.group(2).decode("ascii")
        version = match.group(3).decode("ascii")
        status_code = reason = None
    else:
        match = _STATUS_LINE.match(start)
        if not match:
            return None
        kind = "response"
        version = match.group(1).decode("ascii")
        status_code = int(match.group(2))
        reason = (match.group(3) or b"").decode("latin-1")
        method = target = None
    headers = []
    truncated = True
    for raw in lines[1 : 1 + HTTP_HEADER_CAP]:
        if raw == b"":
            truncated = False
            break
        header_name, sep, value = raw.partition(b":")
        if not sep:
            break  # ran into a malformed tail; keep what parsed so far
        headers.append((header_name.strip().decode("latin-1"), value.strip().decode("latin-1")))
    return HttpSummary(
        kind=kind,
        version=version,
        method=method,
        target=target,
        status_code=status_code,
        reason=reason,
        headers=tuple(headers),
        truncated=truncated,
    )


def display_protocol(layers) -> str:
    return _DISPLAY_NAMES[layers[-1].name] if layers else "RAW"


_ICMP_TYPE_NAMES = {
    0: "Echo (ping) reply",
    3: "Destination unreachable",
    5: "Redirect",
    8: "Echo (ping) request",
    11: "Time exceeded",
}


def _icmp_info(msg: IcmpMessage) -> str:
    if msg.is_echo:
        kind = "request" if msg.icmp_type == 8 else "reply"
        return f"Echo (ping) {kind} id={msg.ident} seq={msg.seq}"
    label = _ICMP_TYPE_NAMES.get(msg.icmp_type)
    if label:
        return f"{label} (code {msg.icmp_code})"
    return f"ICMP type {msg.icmp_type} code {msg.icmp_code}"


def _arp_info(arp: ArpPacket) -> str:
    if arp.opcode == 1:
        return f"Who has {arp.target_ip}? Tell {arp.sender_ip}"
    if arp.opcode == 2:
        return f"{arp.sender_ip} is at {arp.sender_mac}"
    return f"ARP opcode {arp.opcode}"


def _tcp_info(tcp: TcpHeader, payload_len: int) -> str:
    flags = ", ".join(tcp.flag_names())
    return (
        f"{tcp.src_port} -> {tcp.dst_port} [{flags}] "
        f"seq={tcp.seq} ack={tcp.ack} win={tcp.window} len={payload_len}"
    )


def _http_info(http: HttpSummary) -> str:
    if http.kind == "request":
        return f"{http.method} {http.target} {http.version}"
    return f"{http.version} {http.status_code} {http.reason}".rstrip()


def dissect(frame: RawFrame, index: int, t0_ns: int) -> PacketRecord:
    """Decode one frame completely; failures become notes, never exceptions."""
    layers: list = []
    notes: list[str] = []
    info = ""

    if frame.cap_len < frame.orig_len:
        notes.append("truncated")

    def fail(exc: DecodeError):
        notes.append(f"{type(exc).__name__}: {exc}")

    eth = None
    try:
        eth, eth_payload = decode_ethernet(frame.data)
    except DecodeError as exc:
        fail(exc)

    if eth is not None:
        layers.append(eth)
        if eth.ethertype < ETHERNET_II_MIN:
            notes.append("802.3/llc frame not decoded")
            info = f"802.3 length {eth.ethertype}"
        elif eth.ethertype == ETHERTYPE_ARP:
            try:
                arp = decode_arp(eth_payload)
                layers.append(arp)
                info = _arp_info(arp)
            except DecodeError as exc:
                fail(exc)
                info = f"Ethertype 0x{eth.ethertype:04x}"
        elif eth.ethertype == ETHERTYPE_IPV4:
            info = _dissect_ipv4(eth_payload, layers, notes)
        else:
            info = f"Ethertype 0x{eth.ethertype:04x}"
    else:
        info = f"Raw frame ({frame.cap_len} bytes)"

    source, destination = _endpoints(layers)
    row = SummaryRow(
        no=index,
        time_ns=frame.ts_ns - t0_ns,
        source=source,
        destination=destination,
        protocol=display_protocol(layers),
        length=frame.orig_len,
        info=info,
    )
    return PacketRecord(
        index=index,
        frame=frame,
        layers=tuple(layers),
        decode_notes=tuple(notes),
        summary=row,
    )


def _dissect_ipv4(data: bytes, layers: list, notes: list) -> str:
    try:
        ip, ip_payload = decode_ipv4(data)
    except DecodeError as exc:
        notes.append(f"{type(exc).__name__}: {exc}")
        return f"Ethertype 0x{ETHERTYPE_IPV4:04x}"
    layers.append(ip)
    if not ip.checksum_valid:
        notes.append("ipv4 checksum invalid")
    if ip.is_fragment:
        return "Fragmented IPv4"
    # Pseudo-header checksums can only be verified over a complete segment.
    segment_complete = len(ip_payload) == ip.total_len - ip.ihl * 4

    if ip.protocol == IPPROTO_ICMP:
        try:
            icmp = decode_icmp(ip_payload)
        except DecodeError as exc:
            notes.append(f"{type(exc).__name__}: {exc}")
            return f"Protocol {ip.protocol}"
        layers.append(icmp)
        return _icmp_info(icmp)

    if ip.protocol == IPPROTO_UDP:
        try:
            udp, udp_payload = decode_udp(ip_payload)
        except DecodeError as exc:
            notes.append(f"{type(exc).__name__}: {exc}")
            return f"Protocol {ip.protocol}"
        layers.append(udp)
        if udp.checksum != 0 and segment_complete and not transport_checksum_ok(ip, ip_payload):
            notes.append("udp checksum invalid")
        return f"{udp.src_port} -> {udp.dst_port} len={udp.length - 8}"

    if ip.protocol == IPPROTO_TCP:
        try:
            tcp, tcp_payload = decode_tcp(ip_payload)
        except DecodeError as exc:
            notes.append(f"{type(exc).__name__}: {exc}")
            return f"Protocol {ip.protocol}"
        layers.append(tcp)
        if segment_complete and not transport_checksum_ok(ip, ip_payload):
            notes.append("tcp checksum invalid")
        http = detect_http(tcp_payload, tcp.src_port, tcp.dst_port)
        if http is not None:
            layers.append(http)
            if http.truncated:
                notes.append("http headers truncated")
            return _http_info(http)
        return _tcp_info(tcp, len(tcp_payload))

    return f"Protocol {ip.protocol}"


def _endpoints(layers) -> tuple[str, str]:
    """Display source/destination: IPs win over MACs when an IP-bearing layer exists."""
    arp = ipv4 = eth = None
    for layer in layers:
        if layer.name == "arp":
            arp = layer
        elif layer.name == "ipv4":
            ipv4 = layer
        elif layer.name == "ethernet":
            eth = layer
    if ipv4 is not None:
        return ipv4.src, ipv4.dst
    if arp is not None:
        return arp.sender_ip, arp.target_ip
    if eth is not None:
        return eth.src, eth.dst
    return "", ""
