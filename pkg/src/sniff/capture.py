"""Capture sources, the session state machine, and its bounded packet ring.

A session moves Idle -> Capturing -> Stopped. One producer thread pulls
frames from the source, dissects each, counts it, applies the filter, and
appends matches to the ring; any number of consumers poll ``drain``.
"""

from __future__ import annotations

import json
import os
import queue
import socket
import struct
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Optional, Union

import psutil

from .decode import PacketRecord, RawFrame, dissect
from .filters import FilterExpr, MatchAll, eval_filter
from .pcapio import (
    DEFAULT_SNAPLEN,
    PcapError,
    PcapWriteReport,
    TruncatedFile,
    read_pcap_file,
    write_pcap_file,
)

FIXTURE_IFACES_ENV = "SNIFF_FIXTURE_IFACES"

ETH_P_ALL = 0x0003
SOL_PACKET = 263
PACKET_ADD_MEMBERSHIP = 1
PACKET_MR_PROMISC = 1


class CaptureError(Exception):
    pass


class InvalidTransition(CaptureError):
    """Operation not allowed in the session's current state."""


class OpenFailed(CaptureError):
    """The capture device or file could not be opened."""


class PermissionDenied(CaptureError):
    """Interface enumeration or capture requires elevated rights."""


@dataclass(frozen=True)
class InterfaceInfo:
    name: str
    description: str = ""
    mac: Optional[str] = None
    ipv4: tuple = ()
    is_up: bool = False


def _fixture_interfaces(spec: str) -> list[InterfaceInfo]:
    spec = spec.strip()
    if spec == "deny":
        raise PermissionDenied("interface enumeration denied (fixture)")
    if spec.startswith("["):
        entries = json.loads(spec)
        infos = [
            InterfaceInfo(
                name=e["name"],
                description=e.get("description", ""),
                mac=e.get("mac"),
                ipv4=tuple(e.get("ipv4", ())),
                is_up=e.get("up", True),
            )
            for e in entries
        ]
    else:
        infos = [InterfaceInfo(name=n.strip(), is_up=True) for n in spec.split(",") if n.strip()]
    return sorted(infos, key=lambda i: i.name)


def list_interfaces() -> list[InterfaceInfo]:
    """Enumerate system interfaces, sorted by name.

    Set SNIFF_FIXTURE_IFACES to a comma list, a JSON array, or "deny" to
    inject results for tests.
    """
    fixture = os.environ.get(FIXTURE_IFACES_ENV)
    if fixture is not None:
        return _fixture_interfaces(fixture)
    try:
        addrs = psutil.net_if_addrs()
        stats = psutil.net_if_stats()
    except (PermissionError, OSError) as exc:
        raise PermissionDenied(f"cannot enumerate interfaces: {exc}") from exc
    infos = []
    for name in sorted(addrs):
        mac = None
        ips = []
        for snic in addrs[name]:
            if snic.family == socket.AF_INET:
                ips.append(snic.address)
            elif snic.family == getattr(socket, "AF_PACKET", object()):
                mac = snic.address.lower() or None
        stat = stats.get(name)
        infos.append(
            InterfaceInfo(
                name=name,
                mac=mac,
                ipv4=tuple(ips),
                is_up=bool(stat.isup) if stat else False,
            )
        )
    return infos


@dataclass(frozen=True)
class FileSource:
    """Offline source: replay a saved pcap file."""

    path: str


@dataclass(frozen=True)
class LiveSource:
    """Live source: an interface opened through the platform packet facility."""

    interface: str
    promiscuous: bool = True
    snaplen: int = DEFAULT_SNAPLEN


class ScriptedSource:
    """Programmatic frame feed; push() blocks until the session consumed the frame."""

    def __init__(self):
        self._queue: queue.Queue = queue.Queue()
        self._sentinel = object()

    def push(self, frame: RawFrame, wait: bool = True) -> None:
        self._queue.put(frame)
        if wait:
            self._queue.join()

    def close(self) -> None:
        self._queue.put(self._sentinel)

    def frames(self) -> Iterator[RawFrame]:
        while True:
            item = self._queue.get()
            try:
                if item is self._sentinel:
                    return
                yield item
            finally:
                self._queue.task_done()


CaptureSource = Union[FileSource, LiveSource, ScriptedSource]


def source_label(source: CaptureSource) -> str:
    if isinstance(source, FileSource):
        return f"file:{source.path}"
    if isinstance(source, LiveSource):
        return f"live:{source.interface}"
    return "scripted"


def _open_live(source: LiveSource) -> tuple[Iterator[RawFrame], Callable[[], None]]:
    if not hasattr(socket, "AF_PACKET"):
        raise OpenFailed("live capture needs AF_PACKET support on this platform")
    try:
        sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(ETH_P_ALL))
        sock.bind((source.interface, 0))
        if source.promiscuous:
            ifindex = socket.if_nametoindex(source.interface)
            mreq = struct.pack("@iHH8s", ifindex, PACKET_MR_PROMISC, 0, b"")
            sock.setsockopt(SOL_PACKET, PACKET_ADD_MEMBERSHIP, mreq)
    except PermissionError as exc:
        raise OpenFailed(f"cannot open {source.interface}: permission denied") from exc
    except OSError as exc:
        raise OpenFailed(f"cannot open {source.interface}: {exc}") from exc
    sock.settimeout(0.2)
    closed = threading.Event()

    def frames() -> Iterator[RawFrame]:
        while not closed.is_set():
            try:
                data = sock.recv(source.snaplen)
            except socket.timeout:
                continue
            except OSError:
                return
            ts = time.time_ns()
            yield RawFrame(ts // 1_000_000_000, ts % 1_000_000_000, len(data), data)

    def close() -> None:
        closed.set()
        sock.close()

    return frames(), close


def _open_source(source: CaptureSource) -> tuple[Iterator[RawFrame], Callable[[], None]]:
    if isinstance(source, FileSource):
        try:
            _, frames = read_pcap_file(source.path)
        except (OSError, PcapError) as exc:
            raise OpenFailed(f"cannot open {source.path}: {exc}") from exc
        return frames, lambda: None
    if isinstance(source, LiveSource):
        return _open_live(source)
    if isinstance(source, ScriptedSource):
        return source.frames(), source.close
    raise OpenFailed(f"unknown source type {type(source).__name__}")


class SessionState(str, Enum):
    IDLE = "idle"
    CAPTURING = "capturing"
    STOPPED = "stopped"


@dataclass(frozen=True)
class Counters:
    seen: int
    matched: int
    dropped: int


@dataclass(frozen=True)
class DrainResult:
    records: list
    gap: bool  # evicted records fell inside the requested range


class CaptureSession:
    """Drives one capture: source, filter, bounded ring, and counters.

    Listeners subscribed via ``subscribe`` receive ("packet", record) and
    ("state", SessionState) events in emission order; callbacks run under
    the session lock and must be lightweight.
    """

    def __init__(
        self,
        source: CaptureSource,
        *,
        filter_expr: Optional[FilterExpr] = None,
        ring_capacity: int = 4096,
        session_id: Optional[str] = None,
        max_packets: Optional[int] = None,
        max_seconds: Optional[float] = None,
    ):
        if ring_capacity < 1:
            raise ValueError("ring_capacity must be positive")
        self.id = session_id or uuid.uuid4().hex[:12]
        self.source = source
        self.created_at = time.time()
        self._filter = filter_expr if filter_expr is not None else MatchAll()
        self._ring: deque = deque()
        self._capacity = ring_capacity
        self._max_packets = max_packets
        self._max_ns = int(max_seconds * 1e9) if max_seconds is not None else None
        self._state = SessionState.IDLE
        self._seen = 0
        self._matched = 0
        self._dropped = 0
        self._last_evicted = 0
        self._t0_ns: Optional[int] = None
        self._error: Optional[str] = None
        self._lock = threading.RLock()
        self._listeners: list[Callable] = []
        self._thread: Optional[threading.Thread] = None
        self._close_source: Callable[[], None] = lambda: None
        self._stop_flag = threading.Event()

    @property
    def state(self) -> SessionState:
        return self._state

    @property
    def counters(self) -> Counters:
        with self._lock:
            return Counters(self._seen, self._matched, self._dropped)

    @property
    def t0_ns(self) -> Optional[int]:
        return self._t0_ns

    @property
    def error(self) -> Optional[str]:
        return self._error

    @property
    def filter_expr(self) -> FilterExpr:
        return self._filter

    def subscribe(self, listener: Callable) -> None:
        with self._lock:
            self._listeners.append(listener)

    def _emit(self, kind: str, payload) -> None:
        for listener in self._listeners:
            listener(kind, payload)

    def start(self) -> None:
        with self._lock:
            if self._state is not SessionState.IDLE:
                raise InvalidTransition(f"start requires an idle session, state is {self._state.value}")
            frames, closer = _open_source(self.source)
            self._close_source = closer
            self._state = SessionState.CAPTURING
            self._emit("state", SessionState.CAPTURING)
        self._thread = threading.Thread(target=self._pump, args=(frames,), daemon=True)
        self._thread.start()

    def _pump(self, frames: Iterator[RawFrame]) -> None:
        try:
            for frame in frames:
                if self._stop_flag.is_set():
                    break
                if not self._process(frame):
                    break
        except TruncatedFile as exc:
            with self._lock:
                self._error = str(exc)
        finally:
            self._finish()

    def _process(self, frame: RawFrame) -> bool:
        """Count, dissect, filter, append. Returns False when a limit stops the session."""
        with self._lock:
            if self._state is not SessionState.CAPTURING:
                return False
            if self._t0_ns is None:
                self._t0_ns = frame.ts_ns
            if self._max_ns is not None and frame.ts_ns - self._t0_ns > self._max_ns:
                return False
            self._seen += 1
            record = dissect(frame, self._seen, self._t0_ns)
            if eval_filter(self._filter, record):
                self._matched += 1
                if len(self._ring) >= self._capacity:
                    evicted = self._ring.popleft()
                    self._dropped += 1
                    self._last_evicted = evicted.index
                self._ring.append(record)
                self._emit("packet", record)
            if self._max_packets is not None and self._matched >= self._max_packets:
                return False
        return True

    def _finish(self) -> None:
        """Auto-stop when the source is exhausted or a limit was reached."""
        with self._lock:
            if self._state is SessionState.CAPTURING:
                self._state = SessionState.STOPPED
                self._emit("state", SessionState.STOPPED)
        self._close_source()

    def stop(self) -> None:
        with self._lock:
            if self._state is not SessionState.CAPTURING:
                raise InvalidTransition(f"stop requires a capturing session, state is {self._state.value}")
            self._state = SessionState.STOPPED
            self._stop_flag.set()
            self._emit("state", SessionState.STOPPED)
        self._close_source()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=5)

    def set_filter(self, filter_expr: FilterExpr) -> None:
        """Applies to subsequent packets only; buffered records are untouched."""
        with self._lock:
            self._filter = filter_expr

    def save(self, path: str) -> PcapWriteReport:
        with self._lock:
            if self._state is not SessionState.STOPPED:
                raise InvalidTransition(f"save requires a stopped session, state is {self._state.value}")
            frames = [record.frame for record in self._ring]
        return write_pcap_file(path, frames)

    def drain(self, since: int = 0) -> DrainResult:
        with self._lock:
            records = [r for r in self._ring if r.index > since]
            gap = self._last_evicted > since
        return DrainResult(records=records, gap=gap)

    def records(self) -> list:
        with self._lock:
            return list(self._ring)

    def join(self, timeout: Optional[float] = None) -> None:
        """Wait for the producer to finish (source exhausted or stopped)."""
        if self._thread is not None:
            self._thread.join(timeout)


class SessionTable:
    """Concurrent create/lookup registry of capture sessions."""

    def __init__(self):
        self._sessions: dict[str, CaptureSession] = {}
        self._lock = threading.Lock()

    def create(self, source: CaptureSource, **kwargs) -> CaptureSession:
        session = CaptureSession(source, **kwargs)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Optional[CaptureSession]:
        with self._lock:
            return self._sessions.get(session_id)

    def remove(self, session_id: str) -> Optional[CaptureSession]:
        with self._lock:
            return self._sessions.pop(session_id, None)

    def all(self) -> list:
        with self._lock:
            return list(self._sessions.values())
