"""Classic pcap file reading and writing, bit-exact.

Supports the four magic encodings (microsecond/nanosecond resolution in
either byte order). Reading is streaming: frames are yielded one at a
time and memory use is independent of file size.
"""

from __future__ import annotations

import struct
import sys
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .decode import RawFrame

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D

DEFAULT_SNAPLEN = 262144
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16


class PcapError(Exception):
    pass


class BadMagic(PcapError):
    """The stream does not start with a recognized pcap magic number."""


class TruncatedFile(PcapError):
    """The stream ended inside a header or record body."""


class FrameTooLarge(PcapError):
    """A frame exceeds the snaplen being written to the file header."""


@dataclass(frozen=True)
class PcapMetadata:
    byte_order: str  # "little" or "big"
    resolution: str  # "micro" or "nano"
    version: tuple
    snaplen: int
    linktype: int


@dataclass(frozen=True)
class PcapWriteReport:
    frames: int
    precision_loss: int  # frames whose sub-microsecond digits were floored away


def read_pcap(stream: BinaryIO) -> tuple[PcapMetadata, Iterator[RawFrame]]:
    """Parse the global header eagerly, then yield frames lazily.

    A file cut short mid-record yields every complete frame first and then
    raises TruncatedFile from the iterator.
    """
    head = stream.read(GLOBAL_HEADER_LEN)
    if len(head) < 4:
        raise BadMagic("stream shorter than the pcap magic number")
    endian = None
    resolution = None
    for candidate in ("<", ">"):
        magic = struct.unpack(candidate + "I", head[:4])[0]
        if magic == MAGIC_MICRO:
            endian, resolution = candidate, "micro"
            break
        if magic == MAGIC_NANO:
            endian, resolution = candidate, "nano"
            break
    if endian is None:
        raise BadMagic(f"unrecognized magic 0x{head[:4].hex()}")
    if len(head) < GLOBAL_HEADER_LEN:
        raise TruncatedFile("global header cut short")
    vmajor, vminor, _thiszone, _sigfigs, snaplen, linktype = struct.unpack(endian + "HHiIII", head[4:])
    meta = PcapMetadata(
        byte_order="little" if endian == "<" else "big",
        resolution=resolution,
        version=(vmajor, vminor),
        snaplen=snaplen,
        linktype=linktype,
    )

    def frames() -> Iterator[RawFrame]:
        record = struct.Struct(endian + "IIII")
        while True:
            header = stream.read(RECORD_HEADER_LEN)
            if not header:
                return
            if len(header) < RECORD_HEADER_LEN:
                raise TruncatedFile("record header cut short")
            ts_sec, ts_frac, incl_len, orig_len = record.unpack(header)
            body = stream.read(incl_len) if incl_len else b""
            if len(body) < incl_len:
                raise TruncatedFile(f"record body cut short: wanted {incl_len} bytes, got {len(body)}")
            if resolution == "nano":
                ts_nsec = ts_frac
            else:
                ts_nsec = ts_frac * 1000
            ts_sec += ts_nsec // 1_000_000_000
            ts_nsec %= 1_000_000_000
            yield RawFrame(ts_sec, ts_nsec, max(orig_len, incl_len), body)

    return meta, frames()


def write_pcap(
    stream: BinaryIO,
    frames: Iterable[RawFrame],
    *,
    resolution: str = "nano",
    byte_order: str = "native",
    snaplen: int = DEFAULT_SNAPLEN,
    linktype: int = LINKTYPE_ETHERNET,
) -> PcapWriteReport:
    """Write frames as a classic pcap stream; read_pcap inverts it exactly.

    Nanosecond timestamps written at microsecond resolution are floored;
    the report counts how many frames lost precision that way.
    """
    if byte_order == "native":
        byte_order = sys.byteorder
    endian = {"little": "<", "big": ">"}[byte_order]
    magic = MAGIC_NANO if resolution == "nano" else MAGIC_MICRO
    stream.write(struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype))
    record = struct.Struct(endian + "IIII")
    count = 0
    precision_loss = 0
    for frame in frames:
        if frame.cap_len > snaplen:
            raise FrameTooLarge(f"frame of {frame.cap_len} bytes exceeds snaplen {snaplen}")
        if resolution == "nano":
            ts_frac = frame.ts_nsec
        else:
            ts_frac = frame.ts_nsec // 1000
            if frame.ts_nsec % 1000:
                precision_loss += 1
        stream.write(record.pack(frame.ts_sec, ts_frac, frame.cap_len, frame.orig_len))
        stream.write(frame.data)
        count += 1
    return PcapWriteReport(frames=count, precision_loss=precision_loss)


def read_pcap_file(path: str) -> tuple[PcapMetadata, Iterator[RawFrame]]:
    """Open ``path`` and stream its frames; the file closes when the iterator ends."""
    stream = open(path, "rb")
    try:
        meta, frames = read_pcap(stream)
    except Exception:
        stream.close()
        raise

    def closing() -> Iterator[RawFrame]:
        try:
            yield from frames
        finally:
            stream.close()

    return meta, closing()


def write_pcap_file(path: str, frames: Iterable[RawFrame], **kwargs) -> PcapWriteReport:
    with open(path, "wb") as stream:
        return write_pcap(stream, frames, **kwargs)
